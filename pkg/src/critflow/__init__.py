"""Pseudospectral Littlewood-Paley toolkit and effective-velocity solver for
barotropic compressible Navier-Stokes on the periodic torus."""

from .effective_velocity import FluidState, PressureLaw, compute_v, from_effective, to_effective
from .errors import (CflViolation, CritflowError, EmptySeries, GridError, GridTooSmall,
                     IndexConstraintViolated, NonFinite, ParseError, SymbolSingularity,
                     TruncationInvalid, VacuumApproach, ValidationError)
from .littlewood_paley import BesovParams, DyadicFilterBank, besov_norm, build_filter_bank
from .ns_solver import (SolverConfig, continuation_monitor, energy_diagnostic, monitor_hypotheses, run,
                        twin_run_probe)
from .rng import SplitMix64, random_field
from .spectral_core import Field, Grid, TimeSeries, ViscosityParams, load_field, save_field

__version__ = "0.1.0"

__all__ = [
    "BesovParams", "CflViolation", "CritflowError", "DyadicFilterBank", "EmptySeries", "Field",
    "FluidState", "Grid", "GridError", "GridTooSmall", "IndexConstraintViolated", "NonFinite",
    "ParseError", "PressureLaw", "SolverConfig", "SplitMix64", "SymbolSingularity", "TimeSeries",
    "TruncationInvalid", "VacuumApproach", "ValidationError", "ViscosityParams", "besov_norm",
    "build_filter_bank", "compute_v", "continuation_monitor", "energy_diagnostic", "from_effective",
    "load_field", "monitor_hypotheses", "random_field", "run", "save_field", "to_effective",
    "twin_run_probe",
]
