"""Command line front end: ``thresholdcoag {simulate,kinetics,explore,verify}``.

Tabular outputs are long-format CSV (or JSON records with ``--format json``),
floats written in shortest round-trip form. Every run writes ``meta.json``
with what is needed to repeat it.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import re
import sys
from dataclasses import asdict, dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from . import engine, exploration, kinetics, verify
from ._validation import ConfigError
from .engine import SimConfig
from .trees import canonicalize

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2

log = logging.getLogger("thresholdcoag")

_ALPHA_RE = re.compile(
    r"^\s*N\s*\^\s*(?P<a>[0-9.eE+-]+)\s*(?:\*\s*log\s*\^\s*(?P<g>[0-9.eE+-]+)\s*)?$"
)


def parse_alpha(text: str) -> tuple[float, float]:
    """``"N^0.75"`` or ``"N^0.5*log^2"`` to the exponent pair ``(a, g)``."""
    m = _ALPHA_RE.match(text)
    if not m:
        raise ConfigError("alpha", f"expected N^a or N^a*log^g, got {text!r}")
    return float(m["a"]), float(m["g"] or 0.0)


def parse_floats(text: str, name: str) -> tuple[float, ...]:
    if text is None or not text.strip():
        return ()
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(name, f"expected comma-separated numbers, got {text!r}") from None


def fmt(x) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


@dataclass
class ExperimentSpec:
    command: str
    output_dir: Path
    fmt: str = "csv"
    replicas: int = 1
    n_jobs: int = 1


class Writer:
    """Writes tables and JSON documents into the output directory."""

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.dir = Path(spec.output_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []

    def table(self, name: str, header: list[str], rows) -> None:
        if self.spec.fmt == "json":
            records = [dict(zip(header, (_jsonable(v) for v in row))) for row in rows]
            self.json(f"{name}.json", {"schema_version": SCHEMA_VERSION, "columns": header,
                                       "records": records})
            return
        path = self.dir / f"{name}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(v) for v in row])
        self.written.append(path.name)

    def json(self, filename: str, payload) -> None:
        path = self.dir / filename
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")
        self.written.append(path.name)


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, tuple):
        return list(v)
    return v


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba", "scikit-learn", "joblib"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _meta(args, extra: dict) -> dict:
    argv = {k: v for k, v in vars(args).items() if k not in ("func", "out", "verbose")}
    return {"schema_version": SCHEMA_VERSION, "command": args.command,
            "arguments": argv, "versions": _versions(), **extra}


def _sim_config(args) -> SimConfig:
    common = dict(
        n_particles=args.n, t_max=args.t_max, mode=args.model, seed=args.seed,
        sample_times=parse_floats(args.sample_times, "sample_times"), m_cap=args.m_cap,
        typical_samples_per_time=args.typical_samples,
    )
    if args.alpha_abs is not None:
        return SimConfig(threshold=args.alpha_abs, **common)
    return SimConfig(threshold_rule=parse_alpha(args.alpha), **common)


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    log.info("resolved threshold alpha = %d for N = %d", cfg.alpha, cfg.n_particles)
    spec = ExperimentSpec("simulate", Path(args.out), args.format, args.replicas, args.jobs)
    results = engine.run_ensemble(cfg, spec.replicas, spec.n_jobs)
    out = Writer(spec)
    n = cfg.n_particles
    traj, conc, events, typical = [], [], [], {}
    for r, res in enumerate(results):
        for s in res.trajectory:
            traj.append((r, s.time, s.n_in_solution / n, s.gel_mass / n, s.events_so_far))
            for m in range(1, cfg.m_cap + 1):
                conc.append((r, s.time, m, s.histogram[m] / n))
        for i, e in enumerate(res.gelation_events, start=1):
            events.append((r, i, e.time, e.fallen_size, e.n_after))
        for t, comps in res.typical_clusters:
            codes = typical.setdefault(repr(float(t)), [])
            for comp in comps:
                tree = canonicalize(comp)
                codes.append(tree.code if tree is not None else None)
    out.table("trajectory", ["replica", "time", "n_solution", "gel_mass", "events_so_far"], traj)
    out.table("concentrations", ["replica", "time", "m", "c_emp"], conc)
    out.table("gelation_events", ["replica", "i", "tau_i", "fallen_size", "n_after"], events)
    out.json("typical_clusters.json", {"schema_version": SCHEMA_VERSION, "clusters": typical})
    seeds = [{"replica": r, "seed": cfg.seed, "spawn_key": [r]} for r in range(spec.replicas)]
    cfg_dict = asdict(cfg)
    cfg_dict["alpha"] = cfg.alpha
    out.json("meta.json", _meta(args, {"config": cfg_dict, "replicas": spec.replicas,
                                       "seeds": seeds}))
    return EXIT_OK


def _load_initial(text: str | None) -> np.ndarray:
    if text is None:
        return kinetics.monodisperse()
    path = Path(text)
    if path.exists() or not re.fullmatch(r"[0-9.eE+\-,\s]+", text):
        try:
            raw = path.read_text()
        except OSError as exc:
            raise ConfigError("initial", f"cannot read {text!r}: {exc}") from None
        text = raw.replace("\n", ",")
    values = [float(x) for x in text.split(",") if x.strip()]
    return np.asarray(values, dtype=float)


def cmd_kinetics(args) -> int:
    grid = parse_floats(args.sample_times, "sample_times")
    c0 = _load_initial(args.initial)
    mono = c0.shape[0] >= 1 and c0[0] == 1.0 and not np.any(c0[1:])
    spec = ExperimentSpec("kinetics", Path(args.out), args.format)
    out = Writer(spec)
    m_show = args.m_cap
    rows, mass_rows = [], []
    if grid:
        if args.source in ("explicit", "both"):
            if not mono:
                raise ConfigError("source", "the explicit solution needs a monodisperse start")
            table = kinetics.explicit_table(grid, m_show)
            rows += _table_rows("explicit", table, m_show)
        ode_sm = ode_fl = None
        if args.source in ("ode", "both") or not mono:
            ode_sm = kinetics.solve_smoluchowski_ode(c0, args.m_max, grid)
            ode_fl = kinetics.solve_flory_ode(c0, args.m_max, grid)
            rows += _table_rows("ode_smoluchowski", ode_sm, m_show)
            rows += _table_rows("ode_flory", ode_fl, m_show)
        for i, t in enumerate(grid):
            if mono:
                mass_rows.append((t, kinetics.mass_in_solution(t), kinetics.flory_mass(t)))
            else:
                mass_rows.append((t, float(ode_sm.mass[i]), float(ode_fl.mass[i])))
    out.table("kinetics", ["source", "time", "m", "c"], rows)
    out.table("mass", ["time", "n_t", "flory_mass"], mass_rows)
    out.json("meta.json", _meta(args, {"initial": c0.tolist()}))
    return EXIT_OK


def _table_rows(source, table, m_show):
    m_show = min(m_show, table.m_max)
    return [(source, t, m, table.values[i, m - 1])
            for i, t in enumerate(table.times.tolist()) for m in range(1, m_show + 1)]


def cmd_explore(args) -> int:
    n = args.n
    eps = args.eps
    p = (1.0 + eps) / n
    rng = np.random.default_rng(args.seed)
    spec = ExperimentSpec("explore", Path(args.out), args.format, args.replicas)
    out = Writer(spec)
    walk_rows, exc_rows = [], []
    for r in range(spec.replicas):
        rec = exploration.explore(n, p, args.max_steps, rng)
        walk_rows += [(r, k, int(s)) for k, s in enumerate(rec.walk.tolist())]
        exc_rows += [(r, i, int(s)) for i, s in enumerate(rec.excursion_sizes.tolist())]
    out.table("walk", ["replica", "k", "S_k"], walk_rows)
    out.table("excursions", ["replica", "index", "size"], exc_rows)
    out.json("meta.json", _meta(args, {"p": p}))
    return EXIT_OK


def cmd_verify(args) -> int:
    ctx = verify.VerifyContext(n=args.n, seed=args.seed, quick=args.quick, n_jobs=args.jobs)
    numbers = [int(x) for x in args.criteria.split(",")] if args.criteria else None
    if numbers and any(i not in verify.CRITERIA for i in numbers):
        raise ConfigError("criteria", f"criteria are numbered 1..{len(verify.CRITERIA)}")
    results = verify.run_all(ctx, numbers, log=print)
    spec = ExperimentSpec("verify", Path(args.out), "json")
    out = Writer(spec)
    all_ok = all(r.passed for r in results)
    out.json("report.json", {
        "schema_version": SCHEMA_VERSION,
        "settings": {"n": ctx.n, "seed": ctx.seed, "quick": ctx.quick,
                     "tolerance_factor": ctx.widen},
        "passed": all_ok,
        "criteria": [r.to_dict() for r in results],
    })
    out.json("meta.json", _meta(args, {}))
    return EXIT_OK if all_ok else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thresholdcoag", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def outputs(sp, default_out):
        sp.add_argument("--out", default=default_out, help="output directory")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--seed", type=int, default=0)

    sim = sub.add_parser("simulate", help="run replicas of the particle system")
    sim.add_argument("--model", choices=engine.MODES, default="smoluchowski")
    sim.add_argument("--n", type=int, default=10**5)
    grp = sim.add_mutually_exclusive_group()
    grp.add_argument("--alpha", default="N^0.75", help="threshold rule N^a[*log^g]")
    grp.add_argument("--alpha-abs", type=int, default=None, help="threshold as an integer")
    sim.add_argument("--t-max", type=float, default=4.0)
    sim.add_argument("--sample-times", default="0.5,1,1.5,2,3,4")
    sim.add_argument("--replicas", type=int, default=1)
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--m-cap", type=int, default=100)
    sim.add_argument("--typical-samples", type=int, default=0)
    outputs(sim, "sim_out")
    sim.set_defaults(func=cmd_simulate)

    kin = sub.add_parser("kinetics", help="explicit and ODE concentrations")
    kin.add_argument("--sample-times", default="0.5,1,2", help="time grid")
    kin.add_argument("--m-cap", type=int, default=10, help="largest size written")
    kin.add_argument("--m-max", type=int, default=2000, help="ODE truncation size")
    kin.add_argument("--source", choices=("explicit", "ode", "both"), default="explicit")
    kin.add_argument("--initial", default=None,
                     help="initial concentrations c0(1),c0(2),... inline or a file path")
    outputs(kin, "kinetics_out")
    kin.set_defaults(func=cmd_kinetics)

    exp = sub.add_parser("explore", help="exploration walk of a random graph")
    exp.add_argument("--n", type=int, default=10**5)
    exp.add_argument("--eps", type=float, default=0.0, help="edge probability (1+eps)/n")
    exp.add_argument("--max-steps", type=int, default=None)
    exp.add_argument("--replicas", type=int, default=1)
    outputs(exp, "explore_out")
    exp.set_defaults(func=cmd_explore)

    ver = sub.add_parser("verify", help="run the acceptance suite")
    ver.add_argument("--n", type=int, default=10**6)
    ver.add_argument("--quick", action="store_true",
                     help="N=1e5, replicas/5 (>= 20), tolerances doubled")
    ver.add_argument("--jobs", type=int, default=1)
    ver.add_argument("--criteria", default=None, help="comma-separated subset, e.g. 1,3,11")
    outputs(ver, "verify_out")
    ver.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if getattr(args, "replicas", 1) < 1:
            raise ConfigError("replicas", "must be >= 1")
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("jobs", "must be >= 1")
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
