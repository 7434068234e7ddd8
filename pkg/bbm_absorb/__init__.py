"""Absorbed particle counts of branching Brownian motion with drift at a barrier."""
from .asymptotics_lab import fit_constant
from .asymptotics_lab import ratio_diagnostic
from .asymptotics_lab import theorem_rhs
from .bbm_simulator import EmpiricalDist
from .bbm_simulator import SimConfig
from .bbm_simulator import run_ensemble
from .config import RunConfig
from .config import parse_config
from .errors import ModelError
from .errors import NumericalError
from .fkpp_wave import WaveSolution
from .fkpp_wave import solve_wave
from .generator_solver import GeneratorSeries
from .generator_solver import solve_a
from .gw_process import AbsorptionDistribution
from .gw_process import GeneratorEvaluator
from .gw_process import distribution
from .gw_process import evolve_F
from .offspring_law import OffspringLaw
from .offspring_law import drift_params
from .offspring_law import make_offspring_law
from .series_engine import TruncatedSeries
from .series_engine import cauchy_extract

__all__ = [
    "OffspringLaw",
    "make_offspring_law",
    "drift_params",
    "TruncatedSeries",
    "cauchy_extract",
    "GeneratorSeries",
    "solve_a",
    "WaveSolution",
    "solve_wave",
    "GeneratorEvaluator",
    "AbsorptionDistribution",
    "evolve_F",
    "distribution",
    "SimConfig",
    "EmpiricalDist",
    "run_ensemble",
    "theorem_rhs",
    "fit_constant",
    "ratio_diagnostic",
    "RunConfig",
    "parse_config",
    "ModelError",
    "NumericalError",
]

__version__ = "0.3.0"
