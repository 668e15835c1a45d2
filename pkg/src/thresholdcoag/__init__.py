"""Threshold coagulation: simulation, exploration walks and exact kinetics."""

from ._validation import ConfigError
from .engine import (
    ActivationStream,
    CoagulationModel,
    GelationEvent,
    SimConfig,
    SimResult,
    Snapshot,
    coagulation_rate,
    run_alternative,
    run_ensemble,
    run_sim,
    simulate,
    threshold_from_rule,
)
from .exploration import ExplorationRecord, explore, explore_graph, tube_deviation
from .forest import ClusterForest, Component, LinkKind, LinkOutcome
from .kinetics import (
    KineticsTable,
    SmoluchowskiKinetics,
    borel_pmf,
    flory_mass,
    gw_survival,
    smoluchowski_exact_mono,
    solve_flory_ode,
    solve_smoluchowski_ode,
)
from .stats import ComparisonReport, ReplicaEnsemble
from .trees import RootedTree, canonicalize, enumerate_rooted_trees, gw_tree_prob, sample_gw_tree

__all__ = [
    "ActivationStream", "ClusterForest", "CoagulationModel", "ComparisonReport", "Component",
    "ConfigError", "ExplorationRecord", "GelationEvent", "KineticsTable", "LinkKind",
    "LinkOutcome", "ReplicaEnsemble", "RootedTree", "SimConfig", "SimResult",
    "SmoluchowskiKinetics", "Snapshot", "borel_pmf", "canonicalize", "coagulation_rate",
    "enumerate_rooted_trees", "explore", "explore_graph", "flory_mass", "gw_survival",
    "gw_tree_prob", "run_alternative", "run_ensemble", "run_sim", "sample_gw_tree", "simulate",
    "smoluchowski_exact_mono", "solve_flory_ode", "solve_smoluchowski_ode",
    "threshold_from_rule", "tube_deviation",
]
