"""Analytic dynamic state matrix for the COI swing model.

Given the reduced network and generator parameters, this module finds the
COI equilibrium, assembles the linearized block matrix
[0 I; -M^-1 dPe/ddelta  -M^-1 D] over the retained generators (one
generator acts as the angle reference and its state pair is eliminated),
and solves the continuous Lyapunov equation for the stationary covariance
of the ambient fluctuations.
"""

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .network import ReducedNetwork
from .simulator import GeneratorParams, electrical_power


@dataclass
class SystemMatrix:
    """2m x 2m real state matrix with (generator, delta|omega) row labels."""

    matrix: np.ndarray
    gen_ids: tuple[int, ...]
    reference: Optional[int] = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        m = len(self.gen_ids)
        if self.matrix.shape != (2 * m, 2 * m):
            raise ValueError("matrix must be 2m x 2m for m labeled generators")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("state matrix has non-finite entries")

    @property
    def m(self) -> int:
        return len(self.gen_ids)

    def labels(self) -> tuple[tuple[int, str], ...]:
        return tuple((g, "delta") for g in self.gen_ids) + \
            tuple((g, "omega") for g in self.gen_ids)

    def lower_left(self) -> np.ndarray:
        return self.matrix[self.m:, :self.m]

    def block_map(self) -> dict:
        return {
            "m": self.m,
            "gen_ids": list(self.gen_ids),
            "reference": self.reference,
            "labels": [[g, kind] for g, kind in self.labels()],
        }


@dataclass
class NoiseInputMatrix:
    """2m x n diffusion matrix; the delta rows are structurally zero."""

    matrix: np.ndarray
    gen_ids: tuple[int, ...]
    channel_ids: tuple[int, ...]

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        m = len(self.gen_ids)
        if self.matrix.shape != (2 * m, len(self.channel_ids)):
            raise ValueError("matrix must be 2m x n_channels")
        if np.any(self.matrix[:m, :] != 0.0):
            raise ValueError("delta rows of the noise input matrix must be zero")


def _as_array(mat):
    return mat.matrix if hasattr(mat, "matrix") else np.asarray(mat, dtype=float)


def _reference_split(gen_ids, reference):
    """Positions of retained generators and of the reference within gen_ids."""
    if reference is None:
        return list(range(len(gen_ids))), None
    if reference not in gen_ids:
        raise KeyError(f"reference generator {reference} not in network")
    ref_pos = gen_ids.index(reference)
    retained = [k for k in range(len(gen_ids)) if k != ref_pos]
    return retained, ref_pos


def coupling_jacobian(net: ReducedNetwork, m_inertia: np.ndarray,
                      delta_tilde: np.ndarray) -> np.ndarray:
    """Full n x n Jacobian of the COI electrical power w.r.t. the angles.

    Entry (i, j) of dPe_i/ddelta_j including the COI feedback
    -(M_i/M_T) dP_coi/ddelta_j; rows sum to zero (uniform angle shifts are
    unobservable).
    """
    delta_tilde = np.asarray(delta_tilde, dtype=float)
    ee = np.outer(net.e, net.e)
    dd = delta_tilde[:, None] - delta_tilde[None, :]
    sin_dd, cos_dd = np.sin(dd), np.cos(dd)
    k0 = ee * net.g * sin_dd - ee * net.b * cos_dd
    np.fill_diagonal(k0, 0.0)
    np.fill_diagonal(k0, -k0.sum(axis=1))
    s = (ee * net.g * sin_dd).sum(axis=1)
    mt = m_inertia.sum()
    return k0 + (2.0 / mt) * np.outer(m_inertia, s)


def _reduced_coupling(net, params, delta_tilde, retained, ref_pos):
    """Coupling Jacobian restricted to retained angles.

    The reference angle is bound by sum(M_i delta_i) = 0, so its column is
    folded into the retained ones with weight -M_j/M_ref.
    """
    k_full = coupling_jacobian(net, params.m, delta_tilde)
    k = k_full[np.ix_(retained, retained)]
    if ref_pos is not None:
        w = params.m[retained] / params.m[ref_pos]
        k = k - np.outer(k_full[retained, ref_pos], w)
    return k


def _reconstruct_full(delta_retained, m, retained, ref_pos):
    full = np.empty(len(retained) + (0 if ref_pos is None else 1))
    full[retained] = delta_retained
    if ref_pos is not None:
        full[ref_pos] = -(m[retained] @ delta_retained) / m[ref_pos]
    return full


def equilibrium_solve(params: GeneratorParams, net: ReducedNetwork,
                      guess: Optional[np.ndarray] = None,
                      reference: Optional[int] = None,
                      tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
    """Newton solve of Pm - Pe - (M/M_T) P_coi = 0 in COI coordinates.

    reference defaults to the last generator; the returned full angle vector
    satisfies the COI constraint sum(M_i delta_i) = 0.
    """
    gen_ids = list(net.gen_ids)
    if reference is None:
        reference = gen_ids[-1]
    retained, ref_pos = _reference_split(gen_ids, reference)
    m, mt = params.m, params.m_total
    if guess is None:
        delta = np.zeros(net.n)
    else:
        delta = np.asarray(guess, dtype=float).copy()
        delta -= m @ delta / mt
    d_ret = delta[retained]
    for _ in range(max_iter):
        full = _reconstruct_full(d_ret, m, retained, ref_pos)
        pe, pcoi = electrical_power(full, net, params.pm)
        mism = (params.pm - pe - m * (pcoi / mt))[retained]
        if np.max(np.abs(mism)) <= tol:
            return full
        k_red = _reduced_coupling(net, params, full, retained, ref_pos)
        try:
            step = np.linalg.solve(k_red, mism)
        except np.linalg.LinAlgError:
            raise RuntimeError("equilibrium solve: singular Jacobian") from None
        d_ret = d_ret + step
    raise RuntimeError(f"equilibrium not found in {max_iter} iterations")


def coi_jacobian(params: GeneratorParams, net: ReducedNetwork,
                 delta_tilde_star: np.ndarray,
                 reference: Optional[int] = None) -> SystemMatrix:
    """Assemble [0 I; -M^-1 K -M^-1 D] at an equilibrium.

    K is the reduced coupling Jacobian over the retained generators; with a
    reference generator its state pair is eliminated through the COI
    constraint.
    """
    gen_ids = list(net.gen_ids)
    retained, ref_pos = _reference_split(gen_ids, reference)
    k = _reduced_coupling(net, params, np.asarray(delta_tilde_star, float),
                          retained, ref_pos)
    m_ret = params.m[retained]
    d_ret = params.d[retained]
    dim = len(retained)
    a = np.zeros((2 * dim, 2 * dim))
    a[:dim, dim:] = np.eye(dim)
    a[dim:, :dim] = -k / m_ret[:, None]
    a[dim:, dim:] = -np.diag(d_ret / m_ret)
    return SystemMatrix(matrix=a, gen_ids=tuple(gen_ids[k] for k in retained),
                        reference=reference)


def noise_input_matrix(params: GeneratorParams, net: ReducedNetwork,
                       sigma: np.ndarray,
                       reference: Optional[int] = None) -> NoiseInputMatrix:
    """Diffusion matrix of the load-fluctuation model.

    Bottom-block entry (i, j) = E_j^2 G_jj sigma_j / M_T
    - delta_ij E_i^2 G_ii sigma_i / M_i; all n generator channels are kept
    as columns even when a reference pair is eliminated from the rows.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape[0] != net.n:
        raise ValueError("sigma must have one entry per generator")
    gen_ids = list(net.gen_ids)
    retained, _ = _reference_split(gen_ids, reference)
    e2gs = net.e ** 2 * np.diag(net.g) * sigma
    mt = params.m_total
    dim = len(retained)
    bot = np.tile(e2gs / mt, (dim, 1))
    for row, k in enumerate(retained):
        bot[row, k] -= e2gs[k] / params.m[k]
    mat = np.vstack([np.zeros((dim, net.n)), bot])
    return NoiseInputMatrix(matrix=mat, gen_ids=tuple(gen_ids[k] for k in retained),
                            channel_ids=tuple(gen_ids))


def stationary_covariance(a, b) -> np.ndarray:
    """Solve A C + C A^T = -B B^T for the stationary covariance.

    Requires A Hurwitz; the result is symmetrized and checked against the
    residual bound |AC + CA^T + BB^T|_F <= 1e-10 |BB^T|_F.
    """
    a = _as_array(a)
    b = _as_array(b)
    eig = np.linalg.eigvals(a)
    if np.any(eig.real >= 0):
        raise ValueError("unstable matrix; regression theorem inapplicable")
    q = b @ b.T
    c = scipy.linalg.solve_continuous_lyapunov(a, -q)
    c = 0.5 * (c + c.T)
    resid = np.linalg.norm(a @ c + c @ a.T + q, "fro")
    if resid > 1e-10 * max(np.linalg.norm(q, "fro"), 1e-300):
        raise RuntimeError("Lyapunov solve residual above tolerance")
    return c


def save_system_matrix(path_csv, sm: SystemMatrix) -> None:
    """Row-major full-precision CSV plus a .json sidecar with the block map."""
    mat = _as_array(sm)
    with open(path_csv, "w") as f:
        for row in mat:
            f.write(",".join(repr(float(v)) for v in row) + "\n")
    if hasattr(sm, "block_map"):
        sidecar = str(path_csv) + ".json"
        with open(sidecar, "w") as f:
            json.dump(sm.block_map(), f, indent=1)


def load_system_matrix(path_csv) -> SystemMatrix:
    mat = np.loadtxt(path_csv, delimiter=",", ndmin=2)
    with open(str(path_csv) + ".json") as f:
        meta = json.load(f)
    return SystemMatrix(matrix=mat, gen_ids=tuple(meta["gen_ids"]),
                        reference=meta["reference"])
