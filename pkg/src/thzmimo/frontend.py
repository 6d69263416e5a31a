"""Pilot transmission chain: hybrid precoding/combining, circular convolution,
Bussgang-linearized low-resolution ADCs, FFT and the stacked sensing model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .channel import ChannelRealization, array_response, grid_sines, subcarrier_frequencies
from .config import SystemConfig

# Distortion factor of the MSE-optimal quantizer for Gaussian input.
RHO_TABLE = {1: 0.3634, 2: 0.1175, 3: 0.03454, 4: 0.009497, 5: 0.002499}

# Step size (in units of the per-dimension standard deviation) of the
# MSE-optimal uniform quantizer for Gaussian input.
UNIFORM_STEP = {1: 1.596, 2: 0.9957, 3: 0.5860, 4: 0.3352, 5: 0.1881, 6: 0.1041, 7: 0.0569, 8: 0.0308}


@dataclass(frozen=True)
class QuantizationParams:
    """Bussgang parameters of a b-bit ADC: ``Q = kappa * I``, ``kappa = 1 - rho``."""

    bits: float
    rho: float
    kappa: float


def quantization_params(bits) -> QuantizationParams:
    if bits is None or (isinstance(bits, float) and math.isinf(bits)):
        return QuantizationParams(math.inf, 0.0, 1.0)
    if bits <= 0 or not float(bits).is_integer():
        raise ValueError(f"ADC resolution must be a positive integer, got {bits!r}")
    b = int(bits)
    rho = RHO_TABLE[b] if b <= 5 else (math.pi * math.sqrt(3) / 2) * 2.0 ** (-2 * b)
    return QuantizationParams(b, rho, 1.0 - rho)


def midrise_quantize(x: np.ndarray, bits: int, variance) -> np.ndarray:
    """Uniform mid-rise quantizer applied separately to real and imaginary parts.

    ``variance`` is the complex input variance (per column when an array);
    the step is scaled to the per-dimension standard deviation.
    """
    b = int(bits)
    step = UNIFORM_STEP.get(b, UNIFORM_STEP[8] * 2.0 ** (8 - b))
    delta = step * np.sqrt(np.asarray(variance) / 2)
    half = 2 ** (b - 1)

    def q(v):
        idx = np.clip(np.floor(v / delta), -half, half - 1)
        return (idx + 0.5) * delta

    return q(x.real) + 1j * q(x.imag)


def random_phase_beamformer(rows: int, cols: int, phase_bits: int, scale: float,
                            rng: np.random.Generator) -> np.ndarray:
    """Constant-modulus matrix with phases drawn uniformly from a 2**phase_bits grid."""
    if phase_bits < 1:
        raise ValueError("phase_bits must be >= 1")
    levels = 2**phase_bits
    idx = rng.integers(levels, size=(rows, cols))
    return scale * np.exp(2j * np.pi * idx / levels)


def circular_convolve(taps: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """Length-K circular convolution ``out[q] = sum_n taps[n] @ blocks[(q-n) % K]``.

    ``taps`` has shape ``(K, a, b)`` (zero-padded to K) and ``blocks`` shape
    ``(K, b)``.
    """
    taps = np.asarray(taps)
    blocks = np.asarray(blocks)
    if taps.ndim != 3 or blocks.ndim != 2:
        raise ValueError("taps must be (K, a, b) and blocks (K, b)")
    K = taps.shape[0]
    if blocks.shape[0] != K or blocks.shape[1] != taps.shape[2]:
        raise ValueError(f"shape mismatch: taps {taps.shape}, blocks {blocks.shape}")
    idx = (np.arange(K)[:, None] - np.arange(K)[None, :]) % K
    return np.einsum("nab,qnb->qa", taps, blocks[idx])


# --- dictionaries --------------------------------------------------------------

def build_dictionary(grid_size: int, n: int, f_k: float, f_c: float) -> np.ndarray:
    if grid_size < n:
        raise ValueError("grid size must be >= antenna count")
    return array_response(grid_sines(grid_size), f_k, f_c, n)


def dictionaries(config: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """Receive ``(K, n_bs, G_BS)`` and per-user transmit ``(K, n_u, G_Tu)`` dictionaries."""
    freqs = subcarrier_frequencies(config)
    fc = config.carrier_freq
    A_B = np.stack([build_dictionary(config.grid_bs, config.n_bs, f, fc) for f in freqs])
    A_T = np.stack([build_dictionary(config.grid_tu, config.n_u, f, fc) for f in freqs])
    return A_B, A_T


def sparsifying_dictionary(A_B: np.ndarray, A_T: np.ndarray, num_users: int) -> np.ndarray:
    """``blkdiag(conj(A_T) kron A_B, ...)`` for one subcarrier."""
    block = np.kron(A_T.conj(), A_B)
    return scipy.linalg.block_diag(*([block] * num_users))


# --- pilot frames ------------------------------------------------------------------

@dataclass
class PilotFrame:
    """Training-phase transmit/receive matrices and zero-padded pilot blocks.

    Shapes: ``pilots (M, U, K, n_s_u)`` time-domain blocks whose last D-1
    rows are zero; ``F_rf (M, U, n_u, n_rf_u)``; ``F_bb (M, U, n_rf_u, n_s_u)``;
    ``W_rf (M, n_bs, n_rf_bs)``; ``W_bb (M, K, n_rf_bs, N_s)``.
    """

    pilots: np.ndarray
    F_rf: np.ndarray
    F_bb: np.ndarray
    W_rf: np.ndarray
    W_bb: np.ndarray

    def transmit_vectors(self) -> np.ndarray:
        """Equivalent transmit blocks ``F_rf F_bb g``, shape ``(M, U, K, n_u)``."""
        F = self.F_rf @ self.F_bb
        return np.einsum("muij,mukj->muki", F, self.pilots)


def make_pilot_frame(config: SystemConfig, rng: np.random.Generator) -> PilotFrame:
    cfg = config
    M, U, K, P = cfg.num_blocks, cfg.num_users, cfg.num_subcarriers, cfg.num_pilot_vectors
    qpsk = np.exp(1j * np.pi * (2 * rng.integers(4, size=(M, U, P, cfg.n_s_u)) + 1) / 4)
    pilots = np.zeros((M, U, K, cfg.n_s_u), dtype=complex)
    pilots[:, :, :P] = math.sqrt(cfg.pilot_power) * qpsk
    F_rf = np.stack([
        np.stack([random_phase_beamformer(cfg.n_u, cfg.n_rf_u, cfg.phase_bits, 1 / math.sqrt(cfg.n_u), rng)
                  for _ in range(U)])
        for _ in range(M)
    ])
    F_bb = np.broadcast_to(np.eye(cfg.n_rf_u, cfg.n_s_u), (M, U, cfg.n_rf_u, cfg.n_s_u)).astype(complex)
    W_rf = np.stack([
        random_phase_beamformer(cfg.n_bs, cfg.n_rf_bs, cfg.phase_bits, 1 / math.sqrt(cfg.n_bs), rng)
        for _ in range(M)
    ])
    W_bb = np.broadcast_to(np.eye(cfg.n_rf_bs, cfg.n_s), (M, K, cfg.n_rf_bs, cfg.n_s)).astype(complex)
    return PilotFrame(pilots, F_rf, F_bb, W_rf, W_bb)


# --- noise statistics -------------------------------------------------------------

def quantized_noise_covariance(channel: ChannelRealization, frame: PilotFrame, config: SystemConfig,
                               qp: QuantizationParams):
    """Quantization-noise and equivalent-noise covariances of every block.

    Returns ``(J, P_eta, R)`` with ``J`` and ``P_eta`` of shape
    ``(M, n_rf_bs, n_rf_bs)`` and ``R`` the ``M*N_s``-square block-diagonal
    covariance of the stacked, baseband-combined noise.
    """
    cfg = config
    taps = channel.taps()
    F = frame.F_rf @ frame.F_bb
    kappa = qp.kappa
    J, P_eta, blocks = [], [], []
    for m in range(cfg.num_blocks):
        L = np.zeros((cfg.n_bs, cfg.n_bs), dtype=complex)
        for u in range(cfg.num_users):
            T = cfg.pilot_power * F[m, u] @ F[m, u].conj().T
            L += np.einsum("nab,bc,ndc->ad", taps[u], T, taps[u].conj())
        W = frame.W_rf[m]
        WhW = W.conj().T @ W
        J_tilde = W.conj().T @ L @ W + cfg.noise_power * WhW
        J_m = kappa * (1 - kappa) * np.diag(np.real(np.diag(J_tilde))).astype(complex)
        P_m = kappa**2 * cfg.noise_power * WhW + J_m
        J.append(J_m)
        P_eta.append(P_m)
        Wb = frame.W_bb[m, 0]
        blocks.append(Wb.conj().T @ P_m @ Wb)
    R = scipy.linalg.block_diag(*blocks)
    return np.array(J), np.array(P_eta), R


# --- observation -----------------------------------------------------------------

@dataclass
class PilotObservation:
    """Stacked pilot outputs ``Y (M*N_s, K)`` and the matching sensing model.

    ``omega[k]`` maps the concatenated beamspace vector to ``Y[:, k]``;
    ``psi[k]`` maps ``vec(H_U[k])`` (the non-sparse basis) to ``Y[:, k]``.
    ``A_B`` / ``A_T`` are the dictionaries used to build ``omega``.
    """

    Y: np.ndarray
    omega: np.ndarray
    psi: np.ndarray
    R: np.ndarray
    J: np.ndarray
    P_eta: np.ndarray
    A_B: np.ndarray
    A_T: np.ndarray
    config: SystemConfig
    qp: QuantizationParams

    @property
    def num_subcarriers(self) -> int:
        return self.Y.shape[1]


def simulate_received_pilots(channel: ChannelRealization, frame: PilotFrame, config: SystemConfig,
                             qp: Optional[QuantizationParams], rng: np.random.Generator,
                             quantizer: str = "bussgang") -> PilotObservation:
    """Run the pilot chain and assemble the stacked sensing model.

    ``qp=None`` skips the ADC stage entirely (the unquantized pipeline).
    ``quantizer="midrise"`` replaces the Bussgang model by a uniform mid-rise
    quantizer; it exists only to validate the linear model.
    """
    cfg = config
    if channel.H.shape != (cfg.num_users, cfg.num_subcarriers, cfg.n_bs, cfg.n_u):
        raise ValueError(f"channel shape {channel.H.shape} does not match the configuration")
    if frame.pilots.shape[:3] != (cfg.num_blocks, cfg.num_users, cfg.num_subcarriers):
        raise ValueError("pilot frame does not match the configuration")
    if quantizer not in ("bussgang", "midrise"):
        raise ValueError(f"unknown quantizer {quantizer!r}")
    quantize = qp is not None
    eff_qp = qp if quantize else quantization_params(math.inf)
    kappa = eff_qp.kappa
    M, K, U, Ns = cfg.num_blocks, cfg.num_subcarriers, cfg.num_users, cfg.n_s
    J, P_eta, R = quantized_noise_covariance(channel, frame, cfg, eff_qp)
    taps = channel.taps()
    g_tilde = frame.transmit_vectors()
    sigma = math.sqrt(cfg.noise_power)

    A_B, A_T = dictionaries(cfg)
    G_block = cfg.grid_bs * cfg.grid_tu
    Y = np.empty((M * Ns, K), dtype=complex)
    omega = np.empty((K, M * Ns, cfg.num_groups), dtype=complex)
    psi = np.empty((K, M * Ns, cfg.n_bs * cfg.n_t), dtype=complex)
    for m in range(M):
        W = frame.W_rf[m]
        r = sum(circular_convolve(taps[u], g_tilde[m, u]) for u in range(U))
        v = sigma * (rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape)) / math.sqrt(2)
        x = (r + v) @ W.conj()
        z = (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)) / math.sqrt(2)
        if quantize:
            if quantizer == "midrise" and not math.isinf(eff_qp.bits):
                in_var = np.real(np.diag(J[m])) / (kappa * (1 - kappa))
                y_t = midrise_quantize(x, eff_qp.bits, in_var)
            else:
                y_t = kappa * x + np.sqrt(np.real(np.diag(J[m]))) * z
        else:
            y_t = x
        y_f = np.fft.fft(y_t, axis=0, norm="ortho")
        rows = slice(m * Ns, (m + 1) * Ns)
        Y[rows] = np.einsum("kij,ki->jk", frame.W_bb[m].conj(), y_f)

        t_f = np.fft.fft(g_tilde[m], axis=1, norm="ortho")  # (U, K, n_u)
        for k in range(K):
            Wb = frame.W_bb[m, k]
            B = Wb.conj().T @ W.conj().T
            if quantize:
                B = kappa * B
            t_k = t_f[:, k].reshape(-1)
            psi[k, rows] = np.kron(t_k[None, :], B)
            BA = B @ A_B[k]
            for u in range(U):
                tu = t_f[u, k] @ A_T[k].conj()
                omega[k, rows, u * G_block:(u + 1) * G_block] = np.kron(tu[None, :], BA)
    return PilotObservation(Y, omega, psi, R, J, P_eta, A_B, A_T, cfg, eff_qp)


def noiseless_observation(obs: PilotObservation, beamspace: np.ndarray) -> np.ndarray:
    """``Omega[k] @ h_b[:, k]`` for every subcarrier, shape ``(M*N_s, K)``."""
    return np.einsum("kij,jk->ik", obs.omega, beamspace)

