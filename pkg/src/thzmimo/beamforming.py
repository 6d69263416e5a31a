"""True-time-delay hybrid combining, link metrics and BER simulation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelRealization, array_response, subcarrier_frequencies
from .config import ConfigError, SystemConfig
from .estimation import AngleSelection
from .frontend import QuantizationParams, quantization_params

BITS_PER_SYMBOL = 3


def dirichlet_kernel(N: int, x):
    """``sin(N pi x / 2) / sin(pi x / 2)`` with the limits at ``x in 2Z`` filled in."""
    x = np.asarray(x, dtype=float)
    m = np.round(x / 2)
    r = x - 2 * m  # exact; keeps the ratio well conditioned near x in 2Z
    sign = np.where(np.mod(m * (N - 1), 2) == 0, 1.0, -1.0)
    singular = np.abs(r) < 1e-12
    safe = np.where(singular, 1.0, np.sin(np.pi * r / 2))
    val = sign * np.where(singular, N, np.sin(N * np.pi * r / 2) / safe)
    return val[()] if val.ndim == 0 else val


def normalized_array_gain(psi_target, psi_k, f_k, f_c, N: int, S: Optional[int] = None,
                          P: Optional[int] = None, v_k=0.0):
    """Normalized gain of a combiner steered to ``psi_target`` towards a path at ``psi_k``.

    Without ``S``/``P`` this is the plain phased-array form
    ``|Xi_N(psi_target - rho psi_k)| / N``; otherwise the subarray form with
    per-subarray phase offset ``v_k``.
    """
    rho = f_k / f_c
    if S is None:
        return np.abs(dirichlet_kernel(N, np.asarray(psi_target) - rho * np.asarray(psi_k))) / N
    if P is None:
        P = N // S
    if S * P != N:
        raise ConfigError("N must equal S * P")
    a = dirichlet_kernel(S, P * np.asarray(psi_target) - rho * P * np.asarray(psi_k) - v_k)
    b = dirichlet_kernel(P, -np.asarray(psi_target) + rho * np.asarray(psi_k))
    return np.abs(a * b) / N


def ttd_delays(psi: float, P: int, S: int, carrier_period: float, resolution: float = 0.0) -> np.ndarray:
    """Delay schedule of one RF chain, nonnegative for either sign of ``psi``.

    A positive ``resolution`` rounds every delay to that step.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    s = np.arange(S)
    step = P * psi / 2 * carrier_period
    d = s * step if psi >= 0 else (S - 1) * abs(step) + s * step
    if resolution > 0:
        d = np.round(d / resolution) * resolution
    return d


def max_delay_bound(N: int, carrier_period: float) -> float:
    """Upper end ``(N/2) T_c`` of the delay range for steering sines in [-1, 1]."""
    return N / 2 * carrier_period


def min_td_elements(N: int, rho_k: float) -> int:
    return max(math.ceil(N * (1 - rho_k) - 1e-12), 1)


def ttd_column(psi: float, f_k: float, config: SystemConfig, S: Optional[int] = None) -> np.ndarray:
    """Analog combining vector for one RF chain at subcarrier frequency ``f_k``."""
    S = config.tds_per_chain if S is None else S
    N = config.n_bs
    if N % S:
        raise ConfigError(f"n_bs ({N}) must be divisible by the number of delay elements ({S})")
    P = N // S
    a = array_response(psi, config.carrier_freq, config.carrier_freq, N)
    t = ttd_delays(psi, P, S, config.carrier_period, config.delay_resolution)
    s = np.repeat(np.arange(S), P)
    return a * np.exp(1j * np.pi * s * P * psi) * np.exp(-2j * np.pi * f_k * t[s])


@dataclass(frozen=True)
class TTDBeamformer:
    """Frequency-dependent hybrid combiner plus the users' precoders.

    ``W_rf (K, n_bs, n_rf_bs)``, ``W_bb (K, n_rf_bs, N_s)``,
    ``F (U, n_u, n_s_u)``; ``delays (n_rf_bs, S)`` in seconds.
    """

    steering: np.ndarray
    delays: np.ndarray
    W_rf: np.ndarray
    W_bb: np.ndarray
    F: np.ndarray

    def combiner(self) -> np.ndarray:
        return self.W_rf @ self.W_bb


def user_precoders(angles: AngleSelection, H_est: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Frequency-flat user precoders steered to the selected AoD bins."""
    cfg = config
    F = np.empty((cfg.num_users, cfg.n_u, cfg.n_s_u), dtype=complex)
    for u in range(cfg.num_users):
        sines = 2.0 * np.asarray(angles.tx_bins[u]) / cfg.grid_tu - 1.0
        F_rf = array_response(sines, cfg.carrier_freq, cfg.carrier_freq, cfg.n_u).reshape(cfg.n_u, -1)
        HF = H_est[u] @ F_rf
        gram = np.einsum("kai,kaj->ij", HF.conj(), HF)
        _, vecs = np.linalg.eigh(gram)
        Fu = F_rf @ vecs[:, ::-1][:, :cfg.n_s_u]
        F[u] = Fu * math.sqrt(cfg.n_s_u) / np.linalg.norm(Fu)
    return F


def _baseband(W_rf: np.ndarray, H_est: np.ndarray, F: np.ndarray, config: SystemConfig) -> np.ndarray:
    cfg = config
    K = W_rf.shape[0]
    W_bb = np.empty((K, cfg.n_rf_bs, cfg.n_s), dtype=complex)
    for k in range(K):
        for u in range(cfg.num_users):
            Heq = H_est[u, k].conj().T @ W_rf[k]
            _, _, Vh = np.linalg.svd(Heq)
            W_bb[k, :, u * cfg.n_s_u:(u + 1) * cfg.n_s_u] = Vh.conj().T[:, :cfg.n_s_u]
    return W_bb


def build_ttd_hybrid_combiner(angles: AngleSelection, H_est: np.ndarray, config: SystemConfig,
                              S: Optional[int] = None) -> TTDBeamformer:
    """Hybrid combiner from the selected AoA bins and a channel estimate ``(U, K, n_bs, n_u)``.

    ``S=1`` gives the frequency-flat phased-array combiner.
    """
    cfg = config
    S = cfg.tds_per_chain if S is None else S
    if cfg.n_bs % S:
        raise ConfigError(f"n_bs ({cfg.n_bs}) must be divisible by the number of delay elements ({S})")
    P = cfg.n_bs // S
    sines = angles.rx_sines(cfg.grid_bs)
    if sines.size != cfg.n_rf_bs:
        raise ValueError(f"expected {cfg.n_rf_bs} steering angles, got {sines.size}")
    freqs = subcarrier_frequencies(cfg)
    W_rf = np.stack([np.stack([ttd_column(p, f, cfg, S) for p in sines], axis=1) for f in freqs])
    delays = np.stack([ttd_delays(p, P, S, cfg.carrier_period, cfg.delay_resolution) for p in sines])
    F = user_precoders(angles, H_est, cfg)
    W_bb = _baseband(W_rf, H_est, F, cfg)
    return TTDBeamformer(sines, delays, W_rf, W_bb, F)


def build_flat_combiner(angles: AngleSelection, H_est: np.ndarray, config: SystemConfig) -> TTDBeamformer:
    return build_ttd_hybrid_combiner(angles, H_est, config, S=1)


def optimal_digital_baseline(H: np.ndarray, noise_power: float, n_s_u: int):
    """Dominant-eigenmode precoder and MMSE combiner for one user and subcarrier.

    ``H`` is ``n_bs x n_u``; returns ``(F, W)`` with ``F`` of size
    ``n_u x n_s_u`` and ``W = H_eq (H_eq^H H_eq + sigma^2 n_s_u I)^-1``.
    """
    if n_s_u > min(H.shape):
        raise ValueError("n_s_u exceeds the channel dimensions")
    _, _, Vh = np.linalg.svd(H)
    F = Vh.conj().T[:, :n_s_u]
    Heq = H @ F
    W = Heq @ np.linalg.inv(Heq.conj().T @ Heq + noise_power * n_s_u * np.eye(n_s_u))
    return F, W


def spectral_efficiency(H_eff: np.ndarray, noise_cov: np.ndarray, n_s: int) -> float:
    """``(1/K) sum_k log2 det(I + P^-1 H_eff H_eff^H / N_s)`` for stacks ``(K, n, n_s)``."""
    H_eff = np.asarray(H_eff)
    noise_cov = np.asarray(noise_cov)
    if H_eff.ndim == 2:
        H_eff, noise_cov = H_eff[None], noise_cov[None]
    n = H_eff.shape[1]
    try:
        L = np.linalg.cholesky(noise_cov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("noise covariance must be positive definite") from exc
    A = np.linalg.solve(L, H_eff)
    M = np.eye(n) + A @ A.conj().transpose(0, 2, 1) / n_s
    _, logdet = np.linalg.slogdet(M)
    return float(max(np.mean(logdet) / math.log(2), 0.0))


# --- link-level evaluation --------------------------------------------------------------

@dataclass
class EffectiveLink:
    """Per-subcarrier equivalent model ``y = H_eff s + eta`` with ``eta ~ CN(0, P)``."""

    H_eff: np.ndarray
    noise_cov: np.ndarray
    n_s: int


def stacked_precoder(F: np.ndarray) -> np.ndarray:
    U, n_u, n_s_u = F.shape
    out = np.zeros((U * n_u, U * n_s_u), dtype=complex)
    for u in range(U):
        out[u * n_u:(u + 1) * n_u, u * n_s_u:(u + 1) * n_s_u] = F[u]
    return out


def effective_link(channel: ChannelRealization, W: np.ndarray, F: np.ndarray, config: SystemConfig,
                   noise_power: float, qp: Optional[QuantizationParams] = None,
                   W_analog: Optional[np.ndarray] = None) -> EffectiveLink:
    """Equivalent data model after combining and (optionally) low-resolution ADCs.

    ``W (K, n_bs, N_s)`` is the full combiner.  When ``W_analog`` is given,
    ``W`` is the baseband stage and the ADCs sit behind the analog stage and the distortion is computed per RF
    chain from the band-averaged input power; streams carry power ``1/N_s``.
    """
    qp = quantization_params(math.inf) if qp is None else qp
    kappa = qp.kappa
    H = channel.stacked_all()
    Fs = stacked_precoder(F)
    n_s = Fs.shape[1]
    HF = H @ Fs
    K = H.shape[0]
    if W_analog is None:
        H_eff = np.einsum("kai,kaj->kij", W.conj(), HF)
        cov = noise_power * W.conj().transpose(0, 2, 1) @ W
        return EffectiveLink(H_eff, cov, n_s)
    W_bb = W  # baseband stage, (K, n_rf_bs, N_s)
    A = W_analog.conj().transpose(0, 2, 1)
    AHF = A @ HF
    in_cov = AHF @ AHF.conj().transpose(0, 2, 1) / n_s + noise_power * A @ W_analog
    J = kappa * (1 - kappa) * np.real(np.diagonal(in_cov.mean(axis=0)))
    H_eff = kappa * W_bb.conj().transpose(0, 2, 1) @ AHF
    P_an = kappa**2 * noise_power * A @ W_analog + np.diag(J)
    cov = W_bb.conj().transpose(0, 2, 1) @ P_an @ W_bb
    return EffectiveLink(H_eff, cov, n_s)


def hybrid_link(channel: ChannelRealization, bf: TTDBeamformer, config: SystemConfig, noise_power: float,
                qp: Optional[QuantizationParams] = None) -> EffectiveLink:
    return effective_link(channel, bf.W_bb, bf.F, config, noise_power, qp, W_analog=bf.W_rf)


def digital_link(channel: ChannelRealization, H_est: np.ndarray, config: SystemConfig,
                 noise_power: float) -> EffectiveLink:
    """Fully digital MMSE reference with per-user dominant-eigenmode precoding."""
    cfg = config
    K = cfg.num_subcarriers
    W = np.empty((K, cfg.n_bs, cfg.n_s), dtype=complex)
    F = np.empty((cfg.num_users, cfg.n_u, cfg.n_s_u), dtype=complex)
    # one frequency-flat precoder per user from the band-averaged Gram matrix
    for u in range(cfg.num_users):
        gram = np.einsum("kai,kaj->ij", H_est[u].conj(), H_est[u])
        _, vecs = np.linalg.eigh(gram)
        F[u] = vecs[:, ::-1][:, :cfg.n_s_u]
    for k in range(K):
        for u in range(cfg.num_users):
            Heq = H_est[u, k] @ F[u]
            W[k, :, u * cfg.n_s_u:(u + 1) * cfg.n_s_u] = Heq @ np.linalg.inv(
                Heq.conj().T @ Heq + noise_power * cfg.n_s_u * np.eye(cfg.n_s_u))
    return effective_link(channel, W, F, cfg, noise_power)


def psk8_constellation() -> tuple[np.ndarray, np.ndarray]:
    """Unit-energy 8-PSK points and their Gray labels (3 bits, MSB first)."""
    idx = np.arange(8)
    points = np.exp(2j * np.pi * idx / 8)
    gray = idx ^ (idx >> 1)
    bits = (gray[:, None] >> np.arange(BITS_PER_SYMBOL - 1, -1, -1)) & 1
    return points, bits


def mmse_equalizer(link: EffectiveLink) -> np.ndarray:
    """Linear MMSE filters ``(K, N_s, n)`` for streams of power ``1/N_s``."""
    H, P, ns = link.H_eff, link.noise_cov, link.n_s
    C = H @ H.conj().transpose(0, 2, 1) / ns + P
    return np.linalg.solve(C, H / ns).conj().transpose(0, 2, 1)


def ber_simulation(link: EffectiveLink, n_data: int, rng: np.random.Generator) -> float:
    """Bit error fraction of Gray-mapped 8-PSK over ``n_data`` vectors per subcarrier."""
    points, bits = psk8_constellation()
    K, n, ns = link.H_eff.shape
    sym = rng.integers(0, 8, size=(K, ns, n_data))
    s = points[sym] / math.sqrt(ns)
    Lc = np.linalg.cholesky(link.noise_cov)
    w = (rng.standard_normal((K, n, n_data)) + 1j * rng.standard_normal((K, n, n_data))) / math.sqrt(2)
    y = link.H_eff @ s + Lc @ w
    s_hat = mmse_equalizer(link) @ y
    det = np.mod(np.round(np.angle(s_hat) / (2 * np.pi / 8)).astype(int), 8)
    errors = np.sum(bits[det] != bits[sym])
    return float(errors / (K * ns * n_data * BITS_PER_SYMBOL))


@dataclass
class LinkMetrics:
    nmse: float
    se_per_snr: np.ndarray
    ber_per_snr: np.ndarray
    array_gain_profile: Optional[np.ndarray] = None


def gain_profile(sines: Sequence[float], config: SystemConfig, S: Optional[int] = None) -> np.ndarray:
    """Gain ``|w_k^H a(psi, f_k)|`` of a combiner steered to each ``psi``, shape ``(len(sines), K)``."""
    cfg = config
    freqs = subcarrier_frequencies(cfg)
    out = np.empty((len(sines), len(freqs)))
    for i, psi in enumerate(sines):
        for k, f in enumerate(freqs):
            w = ttd_column(psi, f, cfg, S)
            a = array_response(psi, f, cfg.carrier_freq, cfg.n_bs)
            out[i, k] = abs(np.vdot(w, a))
    return out


def write_gain_profile_csv(path, sines: Sequence[float], profile: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["angle_sine", "subcarrier_index", "gain"])
        for i, psi in enumerate(sines):
            for k in range(profile.shape[1]):
                wr.writerow([f"{psi:.9e}", k + 1, f"{profile[i, k]:.9e}"])
