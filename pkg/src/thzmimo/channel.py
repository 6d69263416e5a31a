"""Dual-wideband multi-user THz channel synthesis.

Angles are carried as direction sines in [-1, 1] everywhere.  Subcarriers
are numbered 1..K when mapped to physical frequencies; the matching DFT bin
is ``k - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import constants

from .config import SPEED_OF_LIGHT, ConfigError, GmmAngleParams, PulseShape, SystemConfig

Z0 = 377.0


@dataclass(frozen=True)
class Material:
    name: str
    roughness_std: float  # mm
    absorption_coeff: float  # 1/cm
    refractive_index: float

    def __post_init__(self):
        if self.roughness_std < 0 or self.absorption_coeff < 0:
            raise ConfigError(f"material {self.name!r}: roughness and absorption must be >= 0")
        if self.refractive_index < 1:
            raise ConfigError(f"material {self.name!r}: refractive index must be >= 1")


MATERIALS = (
    Material("Polycarbonate (PC)", 0.0, 23.0, 1.52),
    Material("Polystyrene (PS)", 0.002, 2.0, 1.6),
    Material("Polyvinyl chloride (PVC)", 0.028, 19.0, 1.68),
    Material("Plaster s1", 0.05, 10.0, 2.0),
    Material("Gypsum plaster", 0.13, 38.0, 1.4),
    Material("Plaster s2", 0.15, 10.0, 2.0),
)


def load_materials(path) -> list[Material]:
    """Read a whitespace table ``name sigma_r_mm xi_per_cm n``.

    The name may contain spaces; the last three tokens of a row are numeric.
    Blank lines and ``#`` comments are skipped.
    """
    out = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.replace(",", " ").split()
        if len(tokens) < 4:
            raise ConfigError(f"{path}:{lineno}: expected 'name sigma_r xi n'")
        try:
            sigma, xi, n = (float(t) for t in tokens[-3:])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
        out.append(Material(" ".join(tokens[:-3]), sigma, xi, n))
    if not out:
        raise ConfigError(f"{path}: no materials found")
    return out


def load_absorption_table(path) -> Callable[[np.ndarray], np.ndarray]:
    """Read ``frequency_hz mu_abs_per_m`` rows; returns a linear interpolator."""
    data = np.loadtxt(path, comments="#", delimiter=None, ndmin=2)
    if data.shape[1] != 2 or len(data) < 1:
        raise ConfigError(f"{path}: expected two columns (frequency, mu_abs)")
    order = np.argsort(data[:, 0])
    freq, mu = data[order, 0], data[order, 1]
    if np.any(mu < 0):
        raise ConfigError(f"{path}: absorption coefficients must be >= 0")

    def mu_abs(f):
        return np.interp(f, freq, mu)

    return mu_abs


# --- frequencies and array responses ---------------------------------------

def subcarrier_frequency(k: int, config: SystemConfig) -> float:
    K = config.num_subcarriers
    if not 1 <= k <= K:
        raise IndexError(f"subcarrier index {k} outside 1..{K}")
    return config.carrier_freq + (k - (K + 1) / 2) * config.bandwidth / K


def subcarrier_frequencies(config: SystemConfig) -> np.ndarray:
    K = config.num_subcarriers
    k = np.arange(1, K + 1)
    return config.carrier_freq + (k - (K + 1) / 2) * config.bandwidth / K


def array_response(direction_sine, f_k: float, f_c: float, n: int) -> np.ndarray:
    """Half-wavelength ULA response with beam squint.

    Entry ``m`` is ``exp(-1j*pi*(f_k/f_c)*m*psi) / sqrt(n)``.  A vector of
    sines returns one column per sine.
    """
    psi = np.asarray(direction_sine, dtype=float)
    if np.any(np.abs(psi) > 1 + 1e-12):
        raise ValueError("direction sine must lie in [-1, 1]")
    if n < 1:
        raise ValueError("antenna count must be >= 1")
    m = np.arange(n).reshape((n,) + (1,) * psi.ndim)
    return np.exp(-1j * np.pi * (f_k / f_c) * m * psi) / np.sqrt(n)


def grid_sines(grid_size: int) -> np.ndarray:
    return 2.0 * np.arange(grid_size) / grid_size - 1.0


def snap_to_grid(direction_sine: float, grid_size: int) -> int:
    """Nearest grid bin (0-based); +1 wraps onto -1."""
    return int(np.round((direction_sine + 1.0) * grid_size / 2.0)) % grid_size


# --- propagation losses -----------------------------------------------------

def characteristic_impedance(f: float, material: Material) -> complex:
    xi = material.absorption_coeff * 100.0  # 1/cm -> 1/m
    n = material.refractive_index
    a = xi * SPEED_OF_LIGHT / (4 * np.pi * f)
    eps_r = n**2 - a**2 - 2j * n * a
    return complex(np.sqrt(constants.mu_0 / (constants.epsilon_0 * eps_r)))


def reflection_coefficient(f_k: float, incidence_angle: float, material: Material) -> tuple[complex, bool]:
    """First-order reflection coefficient and a total-internal-reflection flag.

    Returns the Fresnel coefficient times the Rayleigh roughness factor.  When
    ``|sin(w_i) Z / Z0| > 1`` the Fresnel term is replaced by its unit-modulus
    phase and the flag is set.
    """
    if not 0 <= incidence_angle < np.pi / 2:
        raise ValueError("incidence angle must lie in [0, pi/2)")
    Z = characteristic_impedance(f_k, material)
    cos_i = math.cos(incidence_angle)
    s = math.sin(incidence_angle) * Z / Z0
    cos_r = np.sqrt(1 - s * s + 0j)
    fresnel = (Z * cos_i - Z0 * cos_r) / (Z * cos_i + Z0 * cos_r)
    tir = abs(s) > 1
    if tir:
        fresnel = fresnel / abs(fresnel)
    sigma = material.roughness_std * 1e-3
    roughness = math.exp(-0.5 * (4 * math.pi * f_k * sigma * cos_i / SPEED_OF_LIGHT) ** 2)
    return complex(fresnel * roughness), bool(tir)


def path_gain_magnitude(f_k, ds: float, mu_abs, reflection: Optional[complex] = None):
    """Path amplitude ``|alpha|`` from spreading, absorption and reflection."""
    if ds <= 0:
        raise ValueError("distance must be positive")
    f_k = np.asarray(f_k, dtype=float)
    if np.any(f_k <= 0):
        raise ValueError("frequency must be positive")
    power = (SPEED_OF_LIGHT / (4 * np.pi * f_k * ds)) ** 2 * np.exp(-np.asarray(mu_abs) * ds)
    if reflection is not None:
        power = power * np.abs(reflection) ** 2
    return np.sqrt(power)


# --- pulse shaping -----------------------------------------------------------

def rrc_pulse(t, roll_off: float) -> np.ndarray:
    """Root-raised-cosine pulse, ``t`` in symbol durations, unit energy."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    b = roll_off
    out = np.empty_like(t)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    if b > 0:
        at_edge = np.isclose(np.abs(t), 1 / (4 * b), atol=1e-12)
    else:
        at_edge = np.zeros_like(at_zero)
    regular = ~(at_zero | at_edge)
    tr = t[regular]
    num = np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))
    den = np.pi * tr * (1 - (4 * b * tr) ** 2)
    out[regular] = num / den
    out[at_zero] = 1 - b + 4 * b / np.pi
    if b > 0:
        out[at_edge] = (b / np.sqrt(2)) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
        )
    return out


def rrc_taps(psf: PulseShape) -> np.ndarray:
    """Oversampled, truncated RRC filter with unit continuous-time energy."""
    n = psf.span * psf.upsampling
    t = np.arange(-n, n + 1) / psf.upsampling
    h = rrc_pulse(t, psf.roll_off)
    return h / np.sqrt(np.sum(h**2) / psf.upsampling)


def pulse_samples(tau: float, symbol_period: float, psf: PulseShape) -> tuple[np.ndarray, np.ndarray]:
    """Integer sample indices ``d`` and values ``pul(d*T_s - tau)`` of nonzero taps.

    For the RRC pulse ``tau`` is rounded to the oversampling grid
    ``T_s / upsampling``; indices may be negative (they wrap modulo K).
    """
    if tau < 0:
        raise ValueError("delay must be nonnegative")
    x = tau / symbol_period
    if psf.kind == "rect":
        d = math.ceil(x - 1e-12)
        return np.array([d]), np.array([1.0])
    ups = psf.upsampling
    j = int(round(x * ups))
    taps = rrc_taps(psf)
    center = psf.span * ups
    d = np.arange(math.ceil((j - center) / ups), math.floor((j + center) / ups) + 1)
    return d, taps[d * ups - j + center]


def pulse_shaping_coeff(tau: float, k, K: int, symbol_period: float, psf: PulseShape):
    """DFT-domain coefficient ``sum_d pul(d T_s - tau) exp(-2j pi k d / K)``.

    ``k`` is the DFT bin (scalar or array).
    """
    d, vals = pulse_samples(tau, symbol_period, psf)
    k = np.asarray(k)
    phase = np.exp(-2j * np.pi * np.multiply.outer(k, d) / K)
    return phase @ vals


# --- angle statistics --------------------------------------------------------

def sample_angles_gmm(params: GmmAngleParams, rng: np.random.Generator, size=None):
    """Draw direction sines from the normalized two-component mixture.

    Draws outside [-1, 1] are rejected and redrawn.
    """
    w1, _ = params.weights()
    centers = np.array([params.r1, params.r2])
    spreads = np.array([params.nu1, params.nu2])
    for c, s in zip(centers, spreads):
        if s == 0 and abs(c) > 1:
            raise ValueError("degenerate mixture component centered outside [-1, 1]")
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    todo = np.arange(n)
    while todo.size:
        comp = (rng.random(todo.size) >= w1).astype(int)
        draw = centers[comp] + spreads[comp] * rng.standard_normal(todo.size)
        ok = np.abs(draw) <= 1
        out[todo[ok]] = draw[ok]
        todo = todo[~ok]
    if size is None:
        return float(out[0])
    return out.reshape(size)


# --- channel realization -----------------------------------------------------

@dataclass
class PathParams:
    kind: str  # "LoS" or "NLoS"
    delay: float
    aoa_sine: float
    aod_sine: float
    distance: float
    gain_phase: float
    incidence_angle: Optional[float] = None
    material: Optional[Material] = None
    total_internal_reflection: bool = False
    aoa_bin: Optional[int] = None
    aod_bin: Optional[int] = None


@dataclass
class ChannelRealization:
    """Per-user, per-subcarrier channels ``H[u, k]`` of shape ``n_bs x n_u``.

    ``beamspace`` holds the exact beamspace matrix (``G_BS*G_T x K``) when the
    path angles were snapped to the dictionary grids, otherwise ``None``.
    """

    H: np.ndarray
    paths: list
    config: SystemConfig
    frequencies: np.ndarray
    beamspace: Optional[np.ndarray] = None

    def stacked(self, k: int) -> np.ndarray:
        """Concatenated channel ``[H_1[k] ... H_U[k]]`` for DFT bin ``k``."""
        return np.concatenate(list(self.H[:, k]), axis=1)

    def stacked_all(self) -> np.ndarray:
        """All concatenated channels, shape ``(K, n_bs, n_t)``."""
        return np.concatenate(list(self.H), axis=2)

    def taps(self) -> np.ndarray:
        """Time-domain taps ``H_u(n)``, shape ``(U, K, n_bs, n_u)``.

        The inverse DFT of the per-subcarrier channels, so that the forward
        DFT of the taps reproduces ``H`` exactly.
        """
        return np.fft.ifft(self.H, axis=1)


def beamspace_index(config: SystemConfig, user: int, aoa_bin: int, aod_bin: int) -> int:
    return user * config.grid_bs * config.grid_tu + aod_bin * config.grid_bs + aoa_bin


def generate_channel(
    config: SystemConfig,
    rng: np.random.Generator,
    materials: Sequence[Material] = MATERIALS,
    gmm_aoa: Optional[GmmAngleParams] = None,
    gmm_aod: Optional[GmmAngleParams] = None,
    absorption: Optional[Callable] = None,
) -> ChannelRealization:
    cfg = config
    gmm_aoa = gmm_aoa or cfg.gmm_aoa
    gmm_aod = gmm_aod or cfg.gmm_aod
    K, U = cfg.num_subcarriers, cfg.num_users
    freqs = subcarrier_frequencies(cfg)
    rho = freqs / cfg.carrier_freq
    bins = np.arange(K)
    Ts = cfg.symbol_period
    mu = absorption(freqs) if absorption is not None else np.full(K, cfg.absorption_coeff)
    amp_gain = 10 ** (cfg.tx_gain / 20) * 10 ** (cfg.rx_gain / 20)
    n_nlos_paths = cfg.n_nlos * cfg.n_ray
    scale_los = math.sqrt(cfg.n_u * cfg.n_bs)
    scale_nlos = math.sqrt(cfg.n_u * cfg.n_bs / n_nlos_paths) if n_nlos_paths else 0.0

    H = np.zeros((U, K, cfg.n_bs, cfg.n_u), dtype=complex)
    beamspace = np.zeros((cfg.num_groups, K), dtype=complex) if cfg.on_grid else None
    m_bs = np.arange(cfg.n_bs)[:, None]
    m_u = np.arange(cfg.n_u)[:, None]
    all_paths = []
    for u in range(U):
        user_paths = []
        kinds = ["LoS"] * cfg.n_los + ["NLoS"] * n_nlos_paths
        for kind in kinds:
            tau = rng.uniform(0, (cfg.num_taps - 1) * Ts)
            aoa = sample_angles_gmm(gmm_aoa, rng)
            aod = sample_angles_gmm(gmm_aod, rng)
            phase = rng.uniform(0, 2 * np.pi)
            dist = cfg.distance + SPEED_OF_LIGHT * tau
            path = PathParams(kind, tau, aoa, aod, dist, phase)
            if kind == "NLoS":
                path.incidence_angle = rng.uniform(0, np.pi / 2)
                path.material = materials[rng.integers(len(materials))]
            if cfg.on_grid:
                path.aoa_bin = snap_to_grid(aoa, cfg.grid_bs)
                path.aod_bin = snap_to_grid(aod, cfg.grid_tu)
                path.aoa_sine = float(grid_sines(cfg.grid_bs)[path.aoa_bin])
                path.aod_sine = float(grid_sines(cfg.grid_tu)[path.aod_bin])

            if kind == "NLoS":
                refl = np.empty(K, dtype=complex)
                for k in range(K):
                    refl[k], tir = reflection_coefficient(freqs[k], path.incidence_angle, path.material)
                    path.total_internal_reflection |= tir
                mag = path_gain_magnitude(freqs, dist, mu) * np.abs(refl)
                scale = scale_nlos
            else:
                mag = path_gain_magnitude(freqs, dist, mu)
                scale = scale_los
            beta = pulse_shaping_coeff(tau, bins, K, Ts, cfg.psf)
            coeff = scale * amp_gain * mag * np.exp(1j * phase) * beta
            a_r = np.exp(-1j * np.pi * rho[None, :] * m_bs * path.aoa_sine) / math.sqrt(cfg.n_bs)
            a_t = np.exp(-1j * np.pi * rho[None, :] * m_u * path.aod_sine) / math.sqrt(cfg.n_u)
            H[u] += coeff[:, None, None] * np.einsum("ik,jk->kij", a_r, a_t.conj())
            if beamspace is not None:
                beamspace[beamspace_index(cfg, u, path.aoa_bin, path.aod_bin)] += coeff
            user_paths.append(path)
        all_paths.append(user_paths)

        if cfg.normalize_channel:
            energy = np.sum(np.abs(H[u]) ** 2)
            if energy > 0:
                s = math.sqrt(K * cfg.n_bs * cfg.n_u / energy)
                H[u] *= s
                if beamspace is not None:
                    lo = u * cfg.grid_bs * cfg.grid_tu
                    beamspace[lo:lo + cfg.grid_bs * cfg.grid_tu] *= s
    if not np.all(np.isfinite(H)):
        raise FloatingPointError("non-finite channel coefficients")
    return ChannelRealization(H, all_paths, cfg, freqs, beamspace)
