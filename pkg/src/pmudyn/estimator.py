"""Measurement-only estimation of the dynamic state matrix.

The state matrix of a stable linear system driven by white noise can be
recovered from the stationary statistics of its output: with covariance C
and one-lag correlation G(dt), A = log(G C^-1) / dt. This module provides
the batch estimator, a per-sample recursive variant (exponentially weighted
statistics, Sherman-Morrison inverse maintenance, adaptive forgetting after
disturbances) and the covariance-only hybrid baseline that additionally
uses known inertia/damping.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .model_matrix import SystemMatrix
from .simulator import Trajectory

LOG_BRANCH_MSG = "log branch violation - window too short or dt too large"


@dataclass
class EstimatorConfig:
    n_init: int               # initialization window, samples
    dt: float                 # sampling interval = lag of G
    beta: float = 200.0       # adaptive smoothing: alpha jumps to 1/beta at an event
    w: float = 2.0            # per-sample decay rate back towards 1/N
    alpha_policy: str = "adaptive"   # "adaptive" or "fixed"
    alpha_fixed: Optional[float] = None
    recompute_every: int = 1  # matrix recomputation cadence, samples

    def __post_init__(self):
        if self.n_init < 2:
            raise ValueError("n_init must be at least 2")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.beta < 1 or self.w < 0:
            raise ValueError("beta >= 1 and w >= 0 required")
        if self.alpha_policy not in ("adaptive", "fixed"):
            raise ValueError("alpha_policy must be 'adaptive' or 'fixed'")
        if self.alpha_policy == "fixed":
            if self.alpha_fixed is None or not 0 < self.alpha_fixed <= 1:
                raise ValueError("fixed policy needs alpha_fixed in (0, 1]")
        if self.recompute_every < 1:
            raise ValueError("recompute_every must be >= 1")


@dataclass
class EstimatorState:
    """Running statistics of the recursive estimator (single writer)."""

    xbar: np.ndarray
    cinv: np.ndarray
    glag: np.ndarray
    x_prev: np.ndarray
    j: int = 0
    j_c: int = 0
    flag: bool = False
    alpha: float = 0.0

    def snapshot(self) -> "EstimatorState":
        return EstimatorState(self.xbar.copy(), self.cinv.copy(),
                              self.glag.copy(), self.x_prev.copy(),
                              self.j, self.j_c, self.flag, self.alpha)


def _window_array(window) -> np.ndarray:
    if isinstance(window, Trajectory):
        return window.samples
    return np.asarray(window, dtype=float)


def batch_stats(window):
    """Sample mean, covariance and one-lag correlation of a window.

    Both divisors are N: C = (1/N) Xc Xc^T and
    G = (1/N) sum_{i=2..N} (x_i - xbar)(x_{i-1} - xbar)^T.
    """
    x = _window_array(window)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("window must hold at least two samples")
    n = x.shape[0]
    xbar = x.mean(axis=0)
    xc = (x - xbar).T  # state-dim x N
    c = xc @ xc.T / n
    g = xc[:, 1:] @ xc[:, :-1].T / n
    return xbar, c, g


def invert_covariance(c: np.ndarray) -> np.ndarray:
    """Inverse of a sample covariance; refuses nearly singular input."""
    cond = np.linalg.cond(c)
    if not np.isfinite(cond) or cond > 1e12:
        raise RuntimeError("insufficient excitation")
    return np.linalg.inv(c)


def real_matrix_log(p: np.ndarray) -> np.ndarray:
    """Principal real logarithm via complex eigendecomposition.

    Falls back to the Schur-based scipy implementation when the eigenbasis
    is ill-conditioned. Raises if an eigenvalue sits on the closed negative
    real axis or the imaginary residual exceeds 1e-8 of the result norm.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("matrix log needs a square matrix")
    w, v = np.linalg.eig(p)
    if np.any(np.abs(w) < 1e-300):
        raise RuntimeError(LOG_BRANCH_MSG)
    on_negative_axis = (w.real < 0) & (np.abs(w.imag) <= 1e-12 * np.abs(w))
    if np.any(on_negative_axis):
        raise RuntimeError(LOG_BRANCH_MSG)
    if np.linalg.cond(v) < 1e8:
        log_p = v @ (np.log(w)[:, None] * np.linalg.inv(v))
    else:  # (nearly) defective eigenbasis
        log_p = scipy.linalg.logm(p)
    scale = np.linalg.norm(log_p, "fro")
    if scale > 0 and np.linalg.norm(np.imag(log_p), "fro") > 1e-8 * scale:
        log_p = scipy.linalg.logm(p)
        if np.linalg.norm(np.imag(log_p), "fro") > 1e-8 * np.linalg.norm(log_p, "fro"):
            raise RuntimeError(LOG_BRANCH_MSG)
    return np.real(log_p)


def estimate_a(g_hat: np.ndarray, c_inv: np.ndarray, dt: float,
               gen_ids: Optional[tuple] = None,
               reference: Optional[int] = None):
    """State matrix from the lag correlation and inverse covariance.

    A = log(G C^-1) / dt. Returns a labeled SystemMatrix when gen_ids is
    given, otherwise a plain array.
    """
    a = real_matrix_log(g_hat @ c_inv) / dt
    if gen_ids is None:
        return a
    return SystemMatrix(matrix=a, gen_ids=tuple(gen_ids), reference=reference)


def batch_estimate(window, dt: float, gen_ids=None, reference=None):
    """Convenience: batch_stats + inversion + estimate_a on one window."""
    _, c, g = batch_stats(window)
    return estimate_a(g, invert_covariance(c), dt, gen_ids, reference)


def init_state(window, n_init: Optional[int] = None) -> EstimatorState:
    """Step-1 initialization from the first n_init samples of a stream."""
    x = _window_array(window)
    if n_init is not None:
        x = x[:n_init]
    if x.shape[0] < 2 * x.shape[1]:
        raise ValueError("initialization window shorter than twice the state dim")
    xbar, c, g = batch_stats(x)
    return EstimatorState(xbar=xbar, cinv=invert_covariance(c), glag=g,
                          x_prev=x[-1].copy())


def recursive_update(state: EstimatorState, x_j: np.ndarray,
                     alpha: float) -> EstimatorState:
    """One exponentially weighted update of mean, lag correlation, inverse covariance.

    Implements the recursion C_j = (1-a)(C_{j-1} + a z z^T) with
    z = x_j - xbar_{j-1}, whose Sherman-Morrison inverse uses the
    denominator 1 + a z^T C^-1 z; the inverse is re-symmetrized every step.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    x_j = np.asarray(x_j, dtype=float)
    z = x_j - state.xbar
    xbar_prev = state.xbar
    xbar = (1 - alpha) * xbar_prev + alpha * x_j
    state.glag = (1 - alpha) * (
        state.glag + alpha * np.outer(x_j - xbar, state.x_prev - xbar_prev))
    if alpha == 1:
        # limiting case: only the newest observation survives; the
        # covariance collapses and its inverse is unbounded
        state.cinv = np.full_like(state.cinv, np.inf)
    else:
        cz = state.cinv @ z
        den = 1.0 + alpha * float(z @ cz)
        if abs(den) < 1e-12:
            raise RuntimeError("update singular")
        cinv = (state.cinv - (alpha / den) * np.outer(cz, cz)) / (1 - alpha)
        state.cinv = 0.5 * (cinv + cinv.T)
    state.xbar = xbar
    state.x_prev = x_j.copy()
    state.j += 1
    state.alpha = alpha
    return state


def adaptive_alpha(state: EstimatorState, event_seen: bool,
                   cfg: EstimatorConfig) -> float:
    """Smoothing factor schedule: jump to 1/beta at an event, decay to 1/N."""
    if event_seen:
        state.j_c = state.j
        state.flag = True
    floor = 1.0 / cfg.n_init
    if state.flag:
        a = 1.0 / (cfg.beta + (state.j - state.j_c) * cfg.w)
        if a <= floor:
            a = floor
            state.flag = False
    else:
        a = floor
    state.alpha = a
    return a


@dataclass
class RecursiveTrace:
    """Per-emission output of the streaming estimator."""

    sample_idx: np.ndarray          # absolute sample index of each emission
    times: np.ndarray
    alphas: np.ndarray
    matrices: list                  # ndarray per emission, None on a log gap
    means: np.ndarray               # running mean snapshot per emission
    step_seconds: np.ndarray        # wall time of each step-2 update
    state: EstimatorState
    gen_ids: tuple = ()
    reference: Optional[int] = None

    def gap_count(self) -> int:
        return sum(mat is None for mat in self.matrices)


def run_recursive(traj, cfg: EstimatorConfig, event_markers=(),
                  gen_ids=None, reference=None) -> RecursiveTrace:
    """Step-1 initialization then per-sample step-2 updates over a stream.

    event_markers are absolute sample indices at which the adaptive alpha
    schedule restarts. The matrix is recomputed every cfg.recompute_every
    samples; a log branch violation is recorded as a gap, not an error.
    """
    x = _window_array(traj)
    t0, dt = (traj.t0, traj.dt_sample) if isinstance(traj, Trajectory) else (0.0, cfg.dt)
    if isinstance(traj, Trajectory) and abs(dt - cfg.dt) > 1e-12:
        raise ValueError("trajectory sampling interval differs from cfg.dt")
    if gen_ids is None and isinstance(traj, Trajectory):
        gen_ids = traj.gen_ids()
    n, d = x.shape
    if cfg.n_init < 2 * d:
        raise ValueError("initialization window shorter than twice the state dim")
    if n <= cfg.n_init:
        raise ValueError("stream shorter than the initialization window")
    state = init_state(x, cfg.n_init)
    markers = set(int(k) for k in event_markers)

    idxs, times, alphas, mats, means, costs = [], [], [], [], [], []

    def emit(k, alpha):
        idxs.append(k)
        times.append(t0 + k * dt)
        alphas.append(alpha)
        means.append(state.xbar.copy())
        try:
            mats.append(estimate_a(state.glag, state.cinv, cfg.dt))
        except RuntimeError:
            mats.append(None)

    emit(cfg.n_init - 1, 1.0 / cfg.n_init)
    for k in range(cfg.n_init, n):
        tic = time.perf_counter()
        if cfg.alpha_policy == "fixed":
            alpha = cfg.alpha_fixed
        else:
            alpha = adaptive_alpha(state, k in markers, cfg)
        recursive_update(state, x[k], alpha)
        recompute = (k - cfg.n_init + 1) % cfg.recompute_every == 0 or k == n - 1
        if recompute:
            emit(k, alpha)
        costs.append(time.perf_counter() - tic)

    return RecursiveTrace(
        sample_idx=np.asarray(idxs), times=np.asarray(times),
        alphas=np.asarray(alphas), matrices=mats,
        means=np.asarray(means), step_seconds=np.asarray(costs),
        state=state, gen_ids=tuple(gen_ids) if gen_ids else (),
        reference=reference)


def lyapunov_estimate(c: np.ndarray, m: np.ndarray, d: np.ndarray):
    """Coupling matrix dPe/ddelta from the stationary covariance blocks.

    Returns (full, simplified): full = M Cww Cdd^-1 + D Cdw Cdd^-1 per the
    Lyapunov-equation reduction, simplified drops the Cdw term.
    """
    c = np.asarray(c, dtype=float)
    m = np.asarray(m, dtype=float)
    d = np.asarray(d, dtype=float)
    dim = m.shape[0]
    if c.shape != (2 * dim, 2 * dim):
        raise ValueError("covariance must be 2m x 2m")
    c_dd = c[:dim, :dim]
    c_dw = c[:dim, dim:]
    c_ww = c[dim:, dim:]
    cond = np.linalg.cond(c_dd)
    if not np.isfinite(cond) or cond > 1e12:
        raise RuntimeError("singular angle-covariance block")
    cdd_inv = np.linalg.inv(c_dd)
    simplified = m[:, None] * (c_ww @ cdd_inv)
    full = simplified + d[:, None] * (c_dw @ cdd_inv)
    return full, simplified


def hybrid_state_matrix(coupling: np.ndarray, m: np.ndarray, d: np.ndarray,
                        gen_ids=None, reference=None):
    """Assemble [0 I; -M^-1 K -M^-1 D] around an estimated coupling matrix."""
    m = np.asarray(m, dtype=float)
    d = np.asarray(d, dtype=float)
    dim = m.shape[0]
    a = np.zeros((2 * dim, 2 * dim))
    a[:dim, dim:] = np.eye(dim)
    a[dim:, :dim] = -np.asarray(coupling, dtype=float) / m[:, None]
    a[dim:, dim:] = -np.diag(d / m)
    if gen_ids is None:
        return a
    return SystemMatrix(matrix=a, gen_ids=tuple(gen_ids), reference=reference)
