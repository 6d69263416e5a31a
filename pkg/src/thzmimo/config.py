"""System configuration for the simulated THz hybrid MIMO uplink."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised when a configuration violates a structural relation."""


@dataclass(frozen=True)
class PulseShape:
    """Transmit pulse-shaping filter.

    ``kind`` is ``"rrc"`` (root raised cosine) or ``"rect"``. ``span`` is the
    one-sided truncation of the RRC pulse in symbol durations.
    """

    kind: str = "rrc"
    roll_off: float = 0.80
    upsampling: int = 20
    span: int = 4

    def __post_init__(self):
        if self.kind not in ("rrc", "rect"):
            raise ConfigError(f"psf.kind must be 'rrc' or 'rect', got {self.kind!r}")
        if not 0.0 <= self.roll_off <= 1.0:
            raise ConfigError("psf.roll_off must lie in [0, 1]")
        if self.upsampling < 1 or self.span < 1:
            raise ConfigError("psf.upsampling and psf.span must be >= 1")


@dataclass(frozen=True)
class GmmAngleParams:
    """Two-component Gaussian mixture over direction sines.

    ``p1``/``p2`` are raw mixture parameters; they are normalized to a
    probability simplex before sampling (see :meth:`weights`).
    """

    p1: float
    p2: float
    nu1: float
    nu2: float
    r1: float = 0.0
    r2: float = 0.0

    def __post_init__(self):
        if self.p1 < 0 or self.p2 < 0 or self.p1 + self.p2 <= 0:
            raise ConfigError("GMM mixture parameters must be nonnegative with positive sum")
        if self.nu1 < 0 or self.nu2 < 0:
            raise ConfigError("GMM spreads must be nonnegative")

    def weights(self) -> tuple[float, float]:
        total = self.p1 + self.p2
        return self.p1 / total, self.p2 / total


# Published mixture values for the angle statistics; centers are configuration inputs.
GMM_AOA = GmmAngleParams(p1=0.724, p2=2.198, nu1=0.276, nu2=7.297)
GMM_AOD = GmmAngleParams(p1=0.429, p2=1.811, nu1=0.571, nu2=12.201)


@dataclass(frozen=True)
class SystemConfig:
    """Every scalar dimension and physical parameter of the simulated link.

    Defaults reproduce the full-scale setup (64-antenna BS, 3 users with 4
    antennas, 128 subcarriers at 0.65 THz / 5 GHz).  ``adc_bits`` is an int
    or ``math.inf`` for unquantized receivers.
    """

    n_bs: int = 64
    n_u: int = 4
    num_users: int = 3
    n_rf_bs: int = 8
    n_rf_u: int = 2
    n_s_u: int = 2
    num_subcarriers: int = 128
    num_pilot_vectors: int = 123
    num_blocks: int = 20
    num_taps: int = 6
    carrier_freq: float = 0.65e12
    bandwidth: float = 5e9
    grid_bs: int = 128
    grid_tu: int = 8
    adc_bits: float = 3
    pilot_power: float = 1.0
    noise_power: float = 0.1
    psf: PulseShape = field(default_factory=PulseShape)
    tds_per_chain: int = 2
    delay_resolution: float = 0.0  # seconds; 0 keeps delays continuous
    phase_bits: int = 4
    absorption_coeff: float = 0.015
    distance: float = 15.0
    tx_gain: float = 8.0
    rx_gain: float = 28.0
    n_los: int = 1
    n_nlos: int = 3
    n_ray: int = 1
    num_data: int = 100
    normalize_channel: bool = True
    on_grid: bool = False
    gmm_aoa: GmmAngleParams = GMM_AOA
    gmm_aod: GmmAngleParams = GMM_AOD
    em_tol: float = 1e-4
    em_max_iter: int = 30
    seed: int = 0

    def __post_init__(self):
        validate(self)

    # derived quantities -------------------------------------------------
    @property
    def n_t(self) -> int:
        return self.num_users * self.n_u

    @property
    def n_s(self) -> int:
        return self.num_users * self.n_s_u

    @property
    def grid_t(self) -> int:
        return self.num_users * self.grid_tu

    @property
    def num_groups(self) -> int:
        return self.grid_bs * self.grid_t

    @property
    def symbol_period(self) -> float:
        return 1.0 / self.bandwidth

    @property
    def carrier_period(self) -> float:
        return 1.0 / self.carrier_freq

    @property
    def subarray_size(self) -> int:
        return self.n_bs // self.tds_per_chain

    @property
    def rx_chains_per_user(self) -> tuple:
        """Receive RF chains per user; any remainder goes to the lowest user indices."""
        q, r = divmod(self.n_rf_bs, self.num_users)
        return tuple(q + (u < r) for u in range(self.num_users))

    @property
    def quantized(self) -> bool:
        return not math.isinf(self.adc_bits)

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


def validate(cfg: SystemConfig) -> None:
    """Check the structural relations between configuration fields."""
    positive = (
        "n_bs", "n_u", "num_users", "n_rf_bs", "n_rf_u", "n_s_u", "num_subcarriers",
        "num_pilot_vectors", "num_blocks", "num_taps", "grid_bs", "grid_tu",
        "tds_per_chain", "phase_bits", "num_data", "em_max_iter",
    )
    for name in positive:
        if int(getattr(cfg, name)) < 1:
            raise ConfigError(f"{name} must be >= 1")
    for name in ("n_los", "n_nlos", "n_ray"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be >= 0")
    if cfg.n_los + cfg.n_nlos * cfg.n_ray < 1:
        raise ConfigError("at least one propagation path is required")
    if cfg.num_subcarriers != cfg.num_pilot_vectors + cfg.num_taps - 1:
        raise ConfigError(
            "zero-padding relation violated: num_subcarriers (K) must equal "
            "num_pilot_vectors (P) + num_taps (D) - 1 "
            f"({cfg.num_subcarriers} != {cfg.num_pilot_vectors} + {cfg.num_taps} - 1)"
        )
    n_s = cfg.num_users * cfg.n_s_u
    sum_rf_u = cfg.num_users * cfg.n_rf_u
    if not n_s <= sum_rf_u <= cfg.n_rf_bs < cfg.n_bs:
        raise ConfigError(
            "RF-chain ordering violated: need N_s <= sum_u n_rf_u <= n_rf_bs < n_bs "
            f"({n_s}, {sum_rf_u}, {cfg.n_rf_bs}, {cfg.n_bs})"
        )
    if cfg.n_s_u > cfg.n_rf_u:
        raise ConfigError("n_s_u must not exceed n_rf_u")
    if cfg.n_rf_u > cfg.n_u:
        raise ConfigError("n_rf_u must not exceed n_u")
    if cfg.grid_tu < 2 * cfg.n_u:
        raise ConfigError(f"grid_tu must be >= 2 * n_u ({cfg.grid_tu} < {2 * cfg.n_u})")
    if cfg.grid_bs < 2 * cfg.n_bs:
        raise ConfigError(f"grid_bs must be >= 2 * n_bs ({cfg.grid_bs} < {2 * cfg.n_bs})")
    if cfg.n_bs % cfg.tds_per_chain:
        raise ConfigError("n_bs must be divisible by tds_per_chain")
    if not (cfg.adc_bits >= 1 and (math.isinf(cfg.adc_bits) or float(cfg.adc_bits).is_integer())):
        raise ConfigError("adc_bits must be a positive integer or infinite")
    for name in ("carrier_freq", "bandwidth", "pilot_power", "distance"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be > 0")
    if cfg.noise_power < 0 or cfg.absorption_coeff < 0:
        raise ConfigError("noise_power and absorption_coeff must be >= 0")
    if cfg.delay_resolution < 0:
        raise ConfigError("delay_resolution must be >= 0")
    if cfg.em_tol < 0:
        raise ConfigError("em_tol must be >= 0")


def paper_profile(**overrides: Any) -> SystemConfig:
    """Full-scale setup (64 x 4 antennas, 3 users, K = 128)."""
    return SystemConfig(**overrides)


def desk_profile(**overrides: Any) -> SystemConfig:
    """Small setup that keeps Monte-Carlo sweeps within CI budgets."""
    base = dict(
        n_bs=16, n_u=2, num_users=2, n_rf_bs=4, n_rf_u=1, n_s_u=1,
        num_subcarriers=16, num_pilot_vectors=11, num_taps=6, num_blocks=10,
        grid_bs=32, grid_tu=4, on_grid=True, em_max_iter=100,
    )
    base.update(overrides)
    return SystemConfig(**base)


PROFILES = {"paper": paper_profile, "desk": desk_profile}
