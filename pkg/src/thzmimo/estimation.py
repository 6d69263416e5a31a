"""Group-sparse Bayesian channel estimation and baselines."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import SystemConfig
from .frontend import PilotObservation, sparsifying_dictionary

log = logging.getLogger(__name__)

GAMMA_FLOOR = 1e-12
LOADING = 1e-12


class EstimationError(FloatingPointError):
    """Non-finite values encountered during the EM iterations."""

    def __init__(self, iteration: int, what: str = "posterior"):
        super().__init__(f"non-finite {what} at EM iteration {iteration}")
        self.iteration = iteration


@dataclass
class BeamspaceEstimate:
    """Posterior means ``H_b (G, K)`` plus the learned hyperparameters.

    ``gamma`` has shape ``(G,)`` for the group estimator and ``(K, G)`` when
    hyperparameters are learned per subcarrier.  ``trace`` holds one record
    per EM iteration: ``(iteration, delta_gamma_sq, log_evidence)``.
    """

    H_b: np.ndarray
    gamma: np.ndarray
    post_cov_diag: np.ndarray
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)


@dataclass
class AngleSelection:
    """Dominant angular bins per user (0-based indices into the grids)."""

    tx_bins: list
    rx_bins: list
    flat: list

    def rx_sines(self, grid_size: int) -> np.ndarray:
        return np.concatenate([2.0 * np.asarray(r) / grid_size - 1.0 for r in self.rx_bins])

    def tx_sines(self, grid_size: int) -> list:
        return [2.0 * np.asarray(t) / grid_size - 1.0 for t in self.tx_bins]


# --- posterior -------------------------------------------------------------------------

def _loaded(C: np.ndarray):
    """Diagonally loaded covariance and its Cholesky factor."""
    n = C.shape[-1]
    tr = np.real(np.trace(C, axis1=-2, axis2=-1))
    load = LOADING * np.maximum(tr, np.finfo(float).tiny) / n
    C = C + load[..., None, None] * np.eye(n)
    return C, np.linalg.cholesky(C)


def _cholesky_loaded(C: np.ndarray) -> np.ndarray:
    return _loaded(C)[1]


def posterior(omega: np.ndarray, R: np.ndarray, Y: np.ndarray, gamma: np.ndarray, full: bool = False,
              omega_h: Optional[np.ndarray] = None):
    """Gaussian posterior of the beamspace columns for every subcarrier.

    ``omega (K, n, G)``, ``Y (n, K)``, ``gamma (G,)`` or ``(K, G)``.
    Uses the ``n x n`` form ``Gamma - Gamma Omega^H C^-1 Omega Gamma`` with
    ``C = R + Omega Gamma Omega^H`` when ``n < G`` and the ``G x G``
    information form otherwise.  Returns ``(mean (G, K), cov_diag (K, G),
    log_evidence)`` and, if ``full``, the covariances ``(K, G, G)`` as a
    fourth item.  ``omega_h`` optionally supplies the precomputed conjugate
    transposes of ``omega``.
    """
    K, n, G = omega.shape
    gamma = np.asarray(gamma, dtype=float)
    g = gamma if gamma.ndim == 2 else gamma[None, :]
    if n < G:
        OH = omega.conj().transpose(0, 2, 1) if omega_h is None else omega_h
        C = (omega * g[:, None, :]) @ OH
        C += R
        C, L = _loaded(C)
        Ci = np.linalg.inv(C)
        X = Ci @ omega  # C^-1 Omega
        Ciy = (Ci @ Y.T[..., None])[..., 0]
        mean = g * (OH @ Ciy[..., None])[..., 0]
        cov_diag = g - g * g * np.einsum("kgi,kig->kg", OH, X).real
        logdet = 2 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2).real), axis=1)
        quad = np.einsum("ik,ki->k", Y.conj(), Ciy).real
        log_ev = -np.sum(logdet + quad + n * np.log(np.pi))
        cov = None
        if full:
            gk = np.broadcast_to(g, (K, G))
            cov = np.einsum("kg,gh->kgh", gk, np.eye(G)) - (gk[:, :, None] * (OH @ X)) * gk[:, None, :]
    else:
        Lr = _cholesky_loaded(R)
        Wo = np.linalg.solve(Lr, omega)  # R^{-1/2} Omega
        wy = np.linalg.solve(Lr, Y)  # (n, K)
        info = Wo.conj().transpose(0, 2, 1) @ Wo + np.einsum("kg,gh->kgh", 1.0 / g, np.eye(G))
        cov = np.linalg.inv(info)
        cov = 0.5 * (cov + cov.conj().transpose(0, 2, 1))
        rhs = np.einsum("kig,ik->kg", Wo.conj(), wy)
        mean = np.einsum("kgh,kh->kg", cov, rhs)
        cov_diag = np.real(np.diagonal(cov, axis1=1, axis2=2))
        # evidence via the n x n covariance, only needed for monitoring
        C = (omega * g[:, None, :]) @ omega.conj().transpose(0, 2, 1) + R
        L = _cholesky_loaded(C)
        b = np.linalg.solve(L, Y.T[..., None])[..., 0]
        logdet = 2 * np.sum(np.log(np.real(np.diagonal(L, axis1=1, axis2=2))), axis=1)
        log_ev = -np.sum(logdet + np.sum(np.abs(b) ** 2, axis=1) + n * np.log(np.pi))
    out = (mean.T, np.real(cov_diag), float(log_ev))
    return out + (cov,) if full else out


def m_step(cov_diag: np.ndarray, mean: np.ndarray, shared: bool = True) -> np.ndarray:
    """Hyperparameter update from posterior moments.

    ``cov_diag (K, G)`` and ``mean (G, K)``; the group update averages the
    second moments over subcarriers.
    """
    second = cov_diag + np.abs(mean.T) ** 2
    gamma = second.mean(axis=0) if shared else second
    return np.maximum(gamma, GAMMA_FLOOR)


def hbg_sr_estimate(obs: PilotObservation, eps: Optional[float] = None, max_iter: Optional[int] = None,
                    shared: bool = True, prune_tol: float = 1e-8) -> BeamspaceEstimate:
    """EM estimate of the group-sparse beamspace channel.

    With ``shared=False`` every subcarrier learns its own hyperparameters,
    which is the conventional per-subcarrier SBL baseline.
    """
    cfg = obs.config
    eps = cfg.em_tol if eps is None else eps
    max_iter = cfg.em_max_iter if max_iter is None else max_iter
    K, _, G = obs.omega.shape
    gamma = np.ones(G) if shared else np.ones((K, G))
    trace = []
    converged = False
    mean = cov_diag = None
    OH = np.ascontiguousarray(obs.omega.conj().transpose(0, 2, 1))
    j = 0
    for j in range(1, max_iter + 1):
        mean, cov_diag, log_ev = posterior(obs.omega, obs.R, obs.Y, gamma, omega_h=OH)
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov_diag))):
            raise EstimationError(j)
        new = m_step(cov_diag, mean, shared)
        if not np.all(np.isfinite(new)):
            raise EstimationError(j, "hyperparameters")
        delta = float(np.sum((new - gamma) ** 2))
        trace.append((j, delta, log_ev))
        gamma = new
        if delta <= eps:
            converged = True
            break
    H_b = mean.copy()
    g_rows = gamma if shared else gamma.T
    pruned = g_rows < prune_tol * np.max(g_rows, axis=0 if not shared else None)
    H_b[pruned] = 0
    log.debug("EM stopped after %d iterations (converged=%s)", j, converged)
    return BeamspaceEstimate(H_b, gamma, cov_diag, j, converged, trace)


def sbl_per_subcarrier_estimate(obs: PilotObservation, eps=None, max_iter=None) -> BeamspaceEstimate:
    return hbg_sr_estimate(obs, eps, max_iter, shared=False)


# --- baselines --------------------------------------------------------------------------

@dataclass
class LSEstimate:
    """Least-squares estimate of ``vec(H_U[k])`` as columns of ``h``."""

    h: np.ndarray
    rank_deficient: bool

    def channels(self, config: SystemConfig) -> np.ndarray:
        K = self.h.shape[1]
        H = self.h.T.reshape(K, config.n_t, config.n_bs).transpose(0, 2, 1)
        return H.reshape(K, config.n_bs, config.num_users, config.n_u).transpose(2, 0, 1, 3)


def mmv_ls_estimate(obs: PilotObservation) -> LSEstimate:
    """Per-subcarrier least squares over the non-sparse channel basis."""
    K, n, p = obs.psi.shape
    h = np.empty((p, K), dtype=complex)
    deficient = False
    for k in range(K):
        Psi = obs.psi[k]
        rank = np.linalg.matrix_rank(Psi)
        if rank < p:
            deficient = True
            h[:, k] = np.linalg.pinv(Psi) @ obs.Y[:, k]
        else:
            h[:, k] = np.linalg.solve(Psi.conj().T @ Psi, Psi.conj().T @ obs.Y[:, k])
    if deficient:
        warnings.warn("sensing matrix is column-rank deficient; using the pseudo-inverse", RuntimeWarning,
                      stacklevel=2)
    return LSEstimate(h, deficient)


def gsomp_estimate(obs: PilotObservation, max_support: int, residual_tol: float = 0.0) -> BeamspaceEstimate:
    """Greedy joint-support recovery across all subcarriers.

    Stops after ``max_support`` atoms or once ``||residual||_F^2 <=
    residual_tol``.
    """
    K, n, G = obs.omega.shape
    if max_support > n:
        raise ValueError(f"max_support ({max_support}) exceeds the number of measurements ({n})")
    Y = obs.Y
    T = Y.copy()
    active: list[int] = []
    coef = np.zeros((0, K), dtype=complex)
    trace = []
    while len(active) < max_support and np.sum(np.abs(T) ** 2) > residual_tol:
        corr = np.sum(np.abs(np.einsum("kig,ik->gk", obs.omega.conj(), T)), axis=1)
        corr[active] = -np.inf
        active.append(int(np.argmax(corr)))
        coef = np.empty((len(active), K), dtype=complex)
        for k in range(K):
            OA = obs.omega[k][:, active]
            coef[:, k] = np.linalg.lstsq(OA, Y[:, k], rcond=None)[0]
            T[:, k] = Y[:, k] - OA @ coef[:, k]
        trace.append((len(active), float(np.sum(np.abs(T) ** 2)), active[-1]))
    H_b = np.zeros((G, K), dtype=complex)
    H_b[active] = coef
    gamma = np.zeros(G)
    gamma[active] = np.mean(np.abs(coef) ** 2, axis=1) if active else 0
    return BeamspaceEstimate(H_b, gamma, np.zeros((K, G)), len(active), True, trace)


# --- reconstruction and post-processing ------------------------------------------------

def reconstruct_channel(H_b: np.ndarray, A_B: np.ndarray, A_T: np.ndarray, num_users: int) -> np.ndarray:
    """Per-user channels ``A_B[k] unvec(h_b,u[:, k]) A_T[k]^H``, shape ``(U, K, n_bs, n_u)``."""
    if isinstance(H_b, BeamspaceEstimate):
        H_b = H_b.H_b
    K, n_bs, G_bs = A_B.shape
    _, n_u, G_tu = A_T.shape
    if H_b.shape != (num_users * G_bs * G_tu, K):
        raise ValueError(f"beamspace shape {H_b.shape} does not match dictionaries")
    blocks = H_b.reshape(num_users, G_tu, G_bs, K)  # column-major unvec per user
    return np.einsum("kag,ubgk,knb->ukan", A_B, blocks.transpose(0, 1, 2, 3), A_T.conj())


def _first_distinct(values: np.ndarray, count: int, taken=()) -> np.ndarray:
    out = []
    seen = set(taken)
    for v in values:
        if v not in seen:
            out.append(int(v))
            seen.add(int(v))
            if len(out) == count:
                break
    return np.array(out, dtype=int)


def extract_dominant_angles(H_b, config: SystemConfig, distinct: bool = True) -> AngleSelection:
    """Top AoD/AoA bins per user ranked by beamspace row energy.

    Ties resolve to the lower flat index.  With ``distinct`` the ranking is
    walked until the bins are distinct: AoD bins within a user and AoA bins
    across all users, so that no two RF chains share a steering direction.
    """
    if isinstance(H_b, BeamspaceEstimate):
        H_b = H_b.H_b
    cfg = config
    block = cfg.grid_bs * cfg.grid_tu
    energy = np.sum(np.abs(np.asarray(H_b)) ** 2, axis=1)
    tx, rx, flat = [], [], []
    used_rx: set = set()
    for u in range(cfg.num_users):
        e = energy[u * block:(u + 1) * block]
        order = np.argsort(-e, kind="stable")
        if not distinct:
            tx.append(order[:cfg.n_rf_u] // cfg.grid_bs)
            rx.append(order[:cfg.rx_chains_per_user[u]] % cfg.grid_bs)
            flat.append(u * block + order[:cfg.n_rf_u])
            continue
        t_bins = _first_distinct(order // cfg.grid_bs, cfg.n_rf_u)
        r_bins = _first_distinct(order % cfg.grid_bs, cfg.rx_chains_per_user[u], used_rx)
        used_rx.update(r_bins.tolist())
        # flat index of the strongest entry in each selected AoD bin
        best = [order[np.flatnonzero(order // cfg.grid_bs == t)[0]] for t in t_bins]
        tx.append(t_bins)
        rx.append(r_bins)
        flat.append(u * block + np.array(best, dtype=int))
    return AngleSelection(tx, rx, flat)


def _user_dictionary(A_B_k: np.ndarray, A_T_k: np.ndarray, num_users: int) -> np.ndarray:
    return sparsifying_dictionary(A_B_k, A_T_k, num_users)


def bcrlb(obs: PilotObservation, gamma) -> float:
    """Bayesian CRLB on ``sum_k ||h_U[k] - h_U_hat[k]||^2``.

    Evaluates ``Tr(S J^-1 S^H)`` blockwise per subcarrier, using
    ``J_k^-1 = Gamma - Gamma Omega^H (R + Omega Gamma Omega^H)^-1 Omega Gamma``.
    """
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0) or not np.all(np.isfinite(gamma)):
        raise ValueError("hyperparameters must be positive and finite")
    K, n, G = obs.omega.shape
    g = np.broadcast_to(gamma, (K, G))
    cfg = obs.config
    total = 0.0
    for k in range(K):
        D = _user_dictionary(obs.A_B[k], obs.A_T[k], cfg.num_users)
        Om = obs.omega[k]
        C = (Om * g[k]) @ Om.conj().T + obs.R
        L = _cholesky_loaded(C)
        V = np.linalg.solve(L, Om * g[k])  # L^-1 Omega Gamma
        col_norms = np.sum(np.abs(D) ** 2, axis=0)
        total += float(np.sum(g[k] * col_norms) - np.sum(np.abs(V @ D.conj().T) ** 2))
    return total


def nmse_metric(H_hat: np.ndarray, H_true: np.ndarray) -> float:
    H_hat = np.asarray(H_hat)
    H_true = np.asarray(H_true)
    if H_hat.shape != H_true.shape:
        raise ValueError(f"shape mismatch {H_hat.shape} vs {H_true.shape}")
    den = np.sum(np.abs(H_true) ** 2)
    if den == 0:
        raise ValueError("reference channel has zero energy")
    return float(np.sum(np.abs(H_hat - H_true) ** 2) / den)


def genie_gamma(beamspace: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Group powers of a known beamspace matrix, floored relative to the maximum."""
    p = np.mean(np.abs(beamspace) ** 2, axis=1)
    return np.maximum(p, floor * max(p.max(), GAMMA_FLOOR))
