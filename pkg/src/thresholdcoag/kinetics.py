"""Smoluchowski and Flory kinetics for the multiplicative kernel.

Explicit monodisperse solutions (Borel concentrations, mass curve, tail mass)
alongside truncated ODE integrators for arbitrary initial concentrations.
Concentration vectors are indexed from size 1: ``c[0]`` is ``c(1)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import gammaln
from sklearn.base import BaseEstimator

from ._validation import ConfigError, check_concentrations, check_count, check_time

_BISECT_TOL = 1e-12
NEGATIVE_TOL = 1e-12


def borel_pmf(lam: float, m):
    """Borel probability ``(lam*m)**(m-1) * exp(-lam*m) / m!`` for ``0 <= lam <= 1``.

    Accepts a scalar or array ``m``; sizes above 20 go through log space.
    """
    if not 0.0 <= lam <= 1.0:
        raise ConfigError("lambda", f"must lie in [0, 1], got {lam}")
    m_arr = np.asarray(m)
    if np.any(m_arr < 1) or not np.all(np.equal(np.mod(m_arr, 1), 0)):
        raise ConfigError("m", "sizes must be integers >= 1")
    mf = m_arr.astype(float)
    out = np.empty(mf.shape, dtype=float)
    small = mf <= 20
    if np.any(small):
        ms = mf[small]
        fact = np.array([math.factorial(int(x)) for x in ms.ravel()], dtype=float).reshape(ms.shape)
        out[small] = (lam * ms) ** (ms - 1) * np.exp(-lam * ms) / fact
    big = ~small
    if np.any(big):
        mb = mf[big]
        if lam == 0.0:
            out[big] = 0.0
        else:
            out[big] = np.exp((mb - 1) * np.log(lam * mb) - lam * mb - gammaln(mb + 1))
    return float(out) if np.ndim(m) == 0 else out


def smoluchowski_exact_mono(t: float, m):
    """Explicit monodisperse concentration ``c_t(m)``.

    ``B(t, m)/m`` before time 1 and ``B(1, m)/(m t)`` after.
    """
    t = check_time(t)
    m_arr = np.asarray(m)
    if t == 0.0:
        out = (m_arr == 1).astype(float)
        return float(out) if np.ndim(m) == 0 else out
    if t <= 1.0:
        out = borel_pmf(t, m_arr) / m_arr
    else:
        out = borel_pmf(1.0, m_arr) / (m_arr * t)
    return float(out) if np.ndim(m) == 0 else out


def mass_in_solution(t: float) -> float:
    """``min(1, 1/t)``."""
    t = check_time(t, allow_inf=True)
    return 1.0 if t <= 1.0 else 1.0 / t


def _bisect_decreasing(f, lo: float, hi: float, tol: float = _BISECT_TOL) -> float:
    """Root of ``f`` on ``[lo, hi]`` with ``f > 0`` left of the root."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gw_survival(lam: float) -> float:
    """Survival probability of a Galton-Watson process with Poisson(``lam``) offspring.

    Largest root of ``z = 1 - exp(-lam z)``; zero when ``lam <= 1``.
    """
    lam = float(lam)
    if lam < 0 or math.isnan(lam):
        raise ConfigError("lambda", f"must be >= 0, got {lam}")
    if lam <= 1.0:
        return 0.0
    # positive between 0 and the nontrivial root (concave in z)
    return _bisect_decreasing(lambda z: -math.expm1(-lam * z) - z, 0.0, 1.0)


def flory_mass(t: float) -> float:
    """Mass outside the giant in Flory's model: ``1 - gw_survival(t)``."""
    return 1.0 - gw_survival(check_time(t))


def ell_fixed_point(g0, t: float) -> tuple[float, float]:
    """Root ``l`` in (0, 1) of ``x * g0(x) = 1/t`` and the value ``g0(l)``.

    ``g0`` is given through the concentrations ``c0`` (``c0[0]`` = size 1),
    as ``g0(x) = sum_m m c0(m) x**m``. For a monodisperse start this gives
    ``g0(l) = t**-0.5``, which is not the mass curve ``1/t``; the function
    solves the equation as stated and leaves that gap visible.
    """
    c0 = check_concentrations(g0, "g0")
    t = check_time(t)
    sizes = np.arange(1, c0.shape[0] + 1, dtype=float)
    w = sizes * c0
    second = float(np.sum(sizes * w))
    if second <= 0 or t <= 1.0 / second:
        raise ValueError(f"t={t} is not beyond the gelation time {1.0 / second if second else math.inf}")

    def gen(x):
        return float(np.sum(w * x**sizes))

    target = 1.0 / t
    if gen(1.0) <= target:
        raise ValueError(f"no root of x*g0(x) = {target} in (0, 1)")
    # x*g0(x) - 1/t is increasing, so bisect its negation
    ell = _bisect_decreasing(lambda x: target - x * gen(x), 0.0, 1.0)
    return ell, gen(ell)


def tail_mass(t: float, k: int) -> tuple[float, float]:
    """Mass in clusters of size ``>= k`` at ``t >= 1`` and its large-``k`` asymptote.

    The exact value ``(1/t) sum_{m>=k} B(1, m)`` is computed as the complement
    of the finite sum below ``k`` (Borel(1) sums to one), so it carries no
    truncation remainder.
    """
    t = check_time(t)
    if t < 1.0:
        raise ConfigError("t", f"tail mass formula needs t >= 1, got {t}")
    k = check_count(k, "k", minimum=1)
    head = float(np.sum(borel_pmf(1.0, np.arange(1, k)))) if k > 1 else 0.0
    exact = (1.0 - head) / t
    asymptote = math.sqrt(2.0) / (t * math.sqrt(math.pi)) / math.sqrt(k)
    return exact, asymptote


# ---------------------------------------------------------------------------
# truncated ODE integration


@dataclass
class KineticsTable:
    """Concentrations ``values[i, m-1] = c_{times[i]}(m)`` for ``m <= m_max``."""

    times: np.ndarray
    m_max: int
    values: np.ndarray
    source: str
    min_value: float = 0.0

    def moment(self, power: int = 1) -> np.ndarray:
        sizes = np.arange(1, self.m_max + 1, dtype=float)
        return self.values @ sizes**power

    @property
    def mass(self) -> np.ndarray:
        return self.moment(1)

    @property
    def second_moment(self) -> np.ndarray:
        return self.moment(2)


def explicit_table(t_grid, m_max: int = 2000) -> KineticsTable:
    """Explicit monodisperse solution on a grid."""
    times = np.asarray(t_grid, dtype=float)
    m_max = check_count(m_max, "m_max", minimum=1)
    sizes = np.arange(1, m_max + 1)
    values = np.array([smoluchowski_exact_mono(t, sizes) for t in times]).reshape(len(times), m_max)
    return KineticsTable(times, m_max, values, "explicit", float(values.min(initial=0.0)))


def _coagulation_gain(c, sizes):
    mc = sizes * c
    gain = np.zeros_like(c)
    gain[1:] = 0.5 * np.convolve(mc, mc)[: c.shape[0] - 1]
    return gain, mc


def _integrate(c0, m_max, t_grid, gel_term, rtol, atol, source):
    c0 = check_concentrations(c0)
    m_max = check_count(m_max, "m_max", minimum=1)
    if c0.shape[0] > m_max:
        if np.any(c0[m_max:] > 0):
            raise ConfigError("c0", f"support exceeds m_max={m_max}")
        c0 = c0[:m_max]
    start = np.zeros(m_max)
    start[: c0.shape[0]] = c0
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ConfigError("t_grid", "times must be a nondecreasing grid of nonnegative values")
    sizes = np.arange(1, m_max + 1, dtype=float)
    total = float(sizes @ start)

    def rhs(_t, c):
        gain, mc = _coagulation_gain(c, sizes)
        in_solution = mc.sum()
        loss_rate = in_solution + (total - in_solution if gel_term else 0.0)
        return gain - mc * loss_rate

    t_end = float(times[-1]) if times.size else 0.0
    if t_end == 0.0:
        values = np.tile(start, (times.size, 1))
    else:
        sol = solve_ivp(rhs, (0.0, t_end), start, method="DOP853", t_eval=times,
                        rtol=rtol, atol=atol)
        if sol.status != 0:
            raise RuntimeError(f"integration failed: {sol.message}")
        values = sol.y.T
    lowest = float(values.min(initial=0.0))
    if lowest < -NEGATIVE_TOL:
        warnings.warn(f"{source}: concentration dipped to {lowest:.3e}", RuntimeWarning,
                      stacklevel=3)
    return KineticsTable(times, m_max, values, source, lowest)


def solve_smoluchowski_ode(c0, m_max: int = 2000, t_grid=(0.0, 1.0),
                           rtol: float = 1e-10, atol: float = 1e-20) -> KineticsTable:
    """Integrate Smoluchowski's equation truncated to sizes ``<= m_max``.

    Mass carried past ``m_max`` simply leaves the system, so output after
    gelation is a truncation artefact.
    """
    return _integrate(c0, m_max, t_grid, False, rtol, atol, "ode_smoluchowski")


def solve_flory_ode(c0, m_max: int = 2000, t_grid=(0.0, 1.0),
                    rtol: float = 1e-10, atol: float = 1e-20) -> KineticsTable:
    """Integrate Flory's equation: clusters also bind to the gel.

    The gel mass is taken from conservation, ``<m, c0> - sum_{m<=m_max} m c_t(m)``,
    and adds ``m * gel * c_t(m)`` to the loss of size ``m``.
    """
    return _integrate(c0, m_max, t_grid, True, rtol, atol, "ode_flory")


def monodisperse(m_max: int = 1) -> np.ndarray:
    c0 = np.zeros(check_count(m_max, "m_max", minimum=1))
    c0[0] = 1.0
    return c0


class SmoluchowskiKinetics(BaseEstimator):
    """Estimator-style front end to the ODE solvers.

    Parameters
    ----------
    model : {"smoluchowski", "flory"}
    m_max : int
        Largest tabulated size.
    rtol, atol : float
        Integrator tolerances.
    """

    def __init__(self, model="smoluchowski", m_max=2000, rtol=1e-10, atol=1e-20):
        self.model = model
        self.m_max = m_max
        self.rtol = rtol
        self.atol = atol

    def fit(self, X=None, y=None):
        """Store the initial concentrations (monodisperse when ``X`` is None)."""
        if self.model not in ("smoluchowski", "flory"):
            raise ConfigError("model", f"unknown model {self.model!r}")
        self.c0_ = monodisperse(1) if X is None else check_concentrations(X)
        return self

    def table(self, t_grid) -> KineticsTable:
        solver = solve_flory_ode if self.model == "flory" else solve_smoluchowski_ode
        return solver(self.c0_, self.m_max, t_grid, self.rtol, self.atol)

    def predict(self, t_grid) -> np.ndarray:
        return self.table(t_grid).values
