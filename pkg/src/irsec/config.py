"""Scenario configuration: dimensions, powers, tolerances, geometry, fading.

``SystemConfig`` is the single source of scenario truth. dBm-to-watt
conversions happen here, at the config boundary; everything downstream works
in watts and noise-normalized channel units.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299792458.0


class ConfigError(ValueError):
    """Invalid scenario configuration."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ConfigError("power must be positive to express in dBm")
    return 10.0 * np.log10(watts * 1e3)


@dataclass(frozen=True)
class RiceanParams:
    """Large-scale and Ricean fading parameters (Table-style defaults).

    ``l0`` is the reference path gain (lambda_c / 4 pi)^2 at 1 m.
    """

    l0: float
    alpha_los: float = 2.0
    alpha_nlos: float = 4.0
    beta_los: float = 5.0
    beta_nlos: float = 0.0

    def __post_init__(self):
        if self.l0 <= 0:
            raise ConfigError("reference path gain must be positive")
        if min(self.alpha_los, self.alpha_nlos) < 0:
            raise ConfigError("path loss exponents must be nonnegative")
        if min(self.beta_los, self.beta_nlos) < 0:
            raise ConfigError("Ricean factors must be nonnegative")

    @staticmethod
    def from_carrier(carrier_hz: float, **kwargs) -> "RiceanParams":
        lam = SPEED_OF_LIGHT / carrier_hz
        return RiceanParams(l0=(lam / (4.0 * np.pi)) ** 2, **kwargs)


@dataclass(frozen=True)
class PowerModel:
    """Linear power-consumption model for the energy-efficiency metric."""

    amp_efficiency: float = 0.32      # power amplifier efficiency mu
    antenna_power: float = 35e-3      # per-antenna circuit power (W)
    static_power: float = 34e-3       # static AP circuit power (W)
    irs_controller_power: float = 20e-3  # IRS controller power (W)

    def __post_init__(self):
        if not 0.0 < self.amp_efficiency <= 1.0:
            raise ConfigError("amplifier efficiency must lie in (0, 1]")
        if min(self.antenna_power, self.static_power, self.irs_controller_power) < 0:
            raise ConfigError("circuit powers must be nonnegative")


@dataclass(frozen=True)
class SolverOptions:
    """Conic-solver tolerances shared by both AO stages."""

    feas_tol: float = 1e-9
    gap_tol: float = 1e-9
    max_iter: int = 200


@dataclass(frozen=True)
class SystemConfig:
    """Scenario description for the robust secure IRS downlink design.

    Dimensions follow the usual notation: ``n_t`` AP antennas, ``n_r``
    eavesdropper antennas, ``k_users`` legitimate users, ``j_eves`` potential
    eavesdroppers, ``irs_sizes`` elements per IRS (sum = total elements).
    """

    n_t: int = 4
    n_r: int = 2
    k_users: int = 2
    j_eves: int = 1
    irs_sizes: tuple[int, ...] = (4,)

    p_max: float = dbm_to_watts(20.0)        # total transmit power budget (W)
    tau: float | tuple = 1.0                 # leakage caps, scalar or (K,J)
    kappa: float | tuple = np.sqrt(0.1)      # normalized CSI error, scalar or (J,)

    noise_dbm: float = -90.0                 # receiver noise power (dBm)
    carrier_hz: float = 2.4e9
    cell_radius: float = 20.0                # metres
    irs_distances: tuple[float, ...] = (10.0,)  # metres from AP, East/West axis
    fading: RiceanParams | None = None

    rho: float = 5e-4                        # terminal rank penalty factor
    rho_init: float = 2.0                    # continuation start (1/2rho grows to the floor)
    rho_decay: float = 0.7                   # per-iteration decrease of rho
    eps_conv: float = 1e-3                   # AO relative sum-rate tolerance
    max_ao_iter: int = 100
    rank_tol: float = 1e-4                   # accepted ||V||_* - ||V||_2 gap (rel.)
    lmi_tol: float = 1e-7                    # certified LMI min-eigenvalue slack
    init_power_split: float = 0.5            # fraction of P given to beamforming at init
    solver: SolverOptions = field(default_factory=SolverOptions)
    power_model: PowerModel = field(default_factory=PowerModel)

    seed: int = 0

    def __post_init__(self):
        if self.fading is None:
            object.__setattr__(self, "fading", RiceanParams.from_carrier(self.carrier_hz))
        object.__setattr__(self, "irs_sizes", tuple(int(m) for m in self.irs_sizes))
        object.__setattr__(self, "irs_distances", tuple(float(d) for d in self.irs_distances))
        self.validate()

    # -- derived quantities -------------------------------------------------

    @property
    def n_irs(self) -> int:
        return len(self.irs_sizes)

    @property
    def m_total(self) -> int:
        return int(sum(self.irs_sizes))

    @property
    def noise_watts(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    def tau_matrix(self) -> np.ndarray:
        t = np.asarray(self.tau, dtype=float)
        if t.ndim == 0:
            t = np.full((self.k_users, self.j_eves), float(t))
        if t.shape != (self.k_users, self.j_eves):
            raise ConfigError(f"tau must be scalar or shape (K,J), got {t.shape}")
        return t

    def kappa_vector(self) -> np.ndarray:
        k = np.asarray(self.kappa, dtype=float)
        if k.ndim == 0:
            k = np.full(self.j_eves, float(k))
        if k.shape != (self.j_eves,):
            raise ConfigError(f"kappa must be scalar or shape (J,), got {k.shape}")
        return k

    def validate(self) -> None:
        if self.n_t <= 1:
            raise ConfigError("n_t must exceed 1 (multi-antenna AP)")
        if self.n_r <= 1:
            raise ConfigError("n_r must exceed 1 (multi-antenna eavesdroppers)")
        if self.k_users < 1 or self.j_eves < 0:
            raise ConfigError("need at least one user and a nonnegative eavesdropper count")
        if self.n_irs < 1 or any(m < 1 for m in self.irs_sizes):
            raise ConfigError("each IRS needs at least one element")
        if len(self.irs_distances) != self.n_irs:
            raise ConfigError("one distance per IRS required")
        if self.p_max <= 0:
            raise ConfigError("transmit power budget must be positive")
        if np.any(self.tau_matrix() < 0):
            raise ConfigError("leakage caps must be nonnegative")
        if np.any(self.kappa_vector() < 0):
            raise ConfigError("normalized CSI errors must be nonnegative")
        if self.cell_radius <= 0:
            raise ConfigError("cell radius must be positive")
        if any(d <= 0 or d > self.cell_radius for d in self.irs_distances):
            raise ConfigError("IRS distances must lie in (0, cell_radius]")
        if self.rho <= 0:
            raise ConfigError("penalty factor must be positive")
        if self.rho_init < self.rho or not 0.0 < self.rho_decay < 1.0:
            raise ConfigError("penalty schedule must decrease from rho_init to rho")
        if self.eps_conv <= 0 or self.max_ao_iter < 0:
            raise ConfigError("invalid convergence controls")

    def with_updates(self, **kwargs) -> "SystemConfig":
        return replace(self, **kwargs)
