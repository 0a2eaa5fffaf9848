"""Robust secure IRS-assisted MISO downlink design.

Joint transmit beamforming, artificial-noise covariance and IRS phase-shift
optimization maximizing the system sum-rate under worst-case information
leakage constraints with norm-bounded eavesdropper CSI uncertainty, plus a
Monte-Carlo experiment harness.
"""

from .config import (
    ConfigError,
    PowerModel,
    RiceanParams,
    SolverOptions,
    SystemConfig,
    dbm_to_watts,
    watts_to_dbm,
)
from .channels import ChannelSet, Geometry, build_channel_set, draw_scenario, sample_geometry
from .system import FeasibilityReport, Solution, check_feasibility, secrecy_rate, sum_rate
from .ao import AoTrace, TrialInfeasible, run_ao

__all__ = [
    "AoTrace",
    "ChannelSet",
    "ConfigError",
    "FeasibilityReport",
    "Geometry",
    "PowerModel",
    "RiceanParams",
    "SolverOptions",
    "Solution",
    "SystemConfig",
    "TrialInfeasible",
    "build_channel_set",
    "check_feasibility",
    "dbm_to_watts",
    "draw_scenario",
    "run_ao",
    "sample_geometry",
    "secrecy_rate",
    "sum_rate",
    "watts_to_dbm",
]

__version__ = "0.1.0"
