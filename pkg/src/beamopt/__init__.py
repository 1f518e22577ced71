"""Beam alignment over a discrete AoD-AoA grid with a GP surrogate,
expected-improvement probing and a final local rescan."""

__version__ = "0.1.0"

from .acquisition import AcquisitionParams, expected_improvement, select_next
from .align import AlignmentTrace, MapOracle, RboConfig, penalty_db, refinement_neighborhood, run_rbo
from .baselines import RompConfig, exhaustive_sweep, random_probing, romp_align, romp_recover
from .domain import BeamGrid, BeamPair, DatasetError, FormatSpec, PowerMap, load_dataset, save_dataset, true_optimum
from .gp import GpHyperparams, fit, log_marginal_likelihood, optimize_hyperparams, predict
from .synth import PathSpec, SynthSpec, generate_campaign, generate_map

__all__ = [
    "AcquisitionParams",
    "AlignmentTrace",
    "BeamGrid",
    "BeamPair",
    "DatasetError",
    "FormatSpec",
    "GpHyperparams",
    "MapOracle",
    "PathSpec",
    "PowerMap",
    "RboConfig",
    "RompConfig",
    "SynthSpec",
    "exhaustive_sweep",
    "expected_improvement",
    "fit",
    "generate_campaign",
    "generate_map",
    "load_dataset",
    "log_marginal_likelihood",
    "optimize_hyperparams",
    "penalty_db",
    "predict",
    "random_probing",
    "refinement_neighborhood",
    "romp_align",
    "romp_recover",
    "run_rbo",
    "save_dataset",
    "select_next",
    "true_optimum",
]
