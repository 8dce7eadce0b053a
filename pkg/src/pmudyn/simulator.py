"""Stochastic swing-equation simulator in center-of-inertia coordinates.

Integrates the classical multi-machine model under Gaussian load
fluctuations with Euler-Maruyama, supports mid-run network switches, and
emits PMU-rate samples of the COI-referenced states [delta_tilde; omega_tilde].
"""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .network import ReducedNetwork


@dataclass
class GeneratorParams:
    """Per-generator inertia M = 2H/omega_s, damping D and mechanical power."""

    m: np.ndarray
    d: np.ndarray
    pm: np.ndarray

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        self.pm = np.asarray(self.pm, dtype=float)
        if not (self.m.shape == self.d.shape == self.pm.shape):
            raise ValueError("M, D, Pm must have equal length")
        if np.any(self.m <= 0):
            raise ValueError("inertia must be positive")
        if np.any(self.d < 0):
            raise ValueError("damping must be nonnegative")

    @property
    def n(self) -> int:
        return self.m.shape[0]

    @property
    def m_total(self) -> float:
        return float(self.m.sum())


@dataclass
class NoiseSpec:
    """Load-fluctuation std per generator, RNG seed, measurement-noise std."""

    sigma: np.ndarray
    seed: int = 0
    measurement_noise_std: float = 0.0

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        if np.any(self.sigma < 0) or self.measurement_noise_std < 0:
            raise ValueError("noise levels must be nonnegative")


@dataclass(frozen=True)
class Event:
    """Network switch applied at the first integration step at or after time."""

    time: float
    network: ReducedNetwork


@dataclass
class Trajectory:
    """Uniformly sampled COI-referenced states; one row per sample.

    labels maps each state-vector column to (generator id, "delta"|"omega").
    """

    t0: float
    dt_sample: float
    samples: np.ndarray
    labels: tuple[tuple[int, str], ...]

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[1] != len(self.labels):
            raise ValueError("samples must be (n_samples, n_states) matching labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate state labels")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("trajectory contains non-finite samples")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt_sample * np.arange(self.samples.shape[0])

    def gen_ids(self) -> tuple[int, ...]:
        return tuple(g for g, kind in self.labels if kind == "delta")


def coi_transform(delta: np.ndarray, omega: np.ndarray, m: np.ndarray):
    """Shift angles/speeds to the inertia-weighted center-of-inertia frame.

    Returns (delta_tilde, omega_tilde, delta0, omega0).
    """
    delta = np.asarray(delta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    m = np.asarray(m, dtype=float)
    if not (delta.shape == omega.shape == m.shape):
        raise ValueError("delta, omega, M must have equal length")
    mt = m.sum()
    if mt <= 0:
        raise ValueError("total inertia must be positive")
    delta0 = float(m @ delta / mt)
    omega0 = float(m @ omega / mt)
    return delta - delta0, omega - omega0, delta0, omega0


def electrical_power(delta_tilde: np.ndarray, net: ReducedNetwork,
                     pm: Optional[np.ndarray] = None):
    """Air-gap power P_e,i = sum_j E_i E_j (G_ij cos d_ij + B_ij sin d_ij).

    With pm supplied, also returns P_coi = sum(P_m - P_e).
    """
    delta_tilde = np.asarray(delta_tilde, dtype=float)
    if delta_tilde.shape[0] != net.n:
        raise ValueError("angle vector does not match network size")
    dd = delta_tilde[:, None] - delta_tilde[None, :]
    ee = np.outer(net.e, net.e)
    pe = (ee * net.g * np.cos(dd) + ee * net.b * np.sin(dd)).sum(axis=1)
    if pm is None:
        return pe
    return pe, float(np.sum(pm - pe))


def _coi_project(delta, omega, m, mt):
    delta -= (m @ delta / mt)
    omega -= (m @ omega / mt)


def simulate(params: GeneratorParams,
             net: ReducedNetwork,
             noise: NoiseSpec,
             events: tuple[Event, ...] = (),
             horizon: float = 100.0,
             dt_int: float = 1e-3,
             f_s: float = 50.0,
             x_init: Optional[np.ndarray] = None) -> Trajectory:
    """Euler-Maruyama integration of the stochastic COI swing equations.

    The diffusion follows the constant-impedance load-fluctuation model:
    generator i receives -E_i^2 G_ii sigma_i xi_i plus the COI feedback
    (M_i/M_T) sum_j E_j^2 G_jj sigma_j xi_j, with one independent standard
    normal xi_j per generator per step. Output is downsampled to f_s with
    the COI identities re-projected at every emitted sample.
    """
    n = params.n
    if net.n != n or noise.sigma.shape[0] != n:
        raise ValueError("network / noise size mismatch with params")
    steps_per_sample = round(1.0 / (f_s * dt_int))
    if steps_per_sample < 1 or abs(steps_per_sample * dt_int * f_s - 1.0) > 1e-9:
        raise ValueError("1/f_s must be an integer multiple of dt_int")
    if x_init is None:
        from .model_matrix import equilibrium_solve
        delta = equilibrium_solve(params, net)
        omega = np.zeros(n)
    else:
        x_init = np.asarray(x_init, dtype=float)
        if x_init.shape[0] != 2 * n or not np.all(np.isfinite(x_init)):
            raise ValueError("x_init must be a finite vector of length 2n")
        delta = x_init[:n].copy()
        omega = x_init[n:].copy()

    m, d, pm = params.m, params.d, params.pm
    mt = params.m_total
    rng = np.random.default_rng(np.random.SeedSequence(noise.seed))
    pending = sorted(events, key=lambda ev: ev.time)
    for k in range(1, len(pending)):
        if pending[k].time <= pending[k - 1].time:
            raise ValueError("event times must be strictly increasing")

    ee = np.outer(net.e, net.e)
    eeg, eeb = ee * net.g, ee * net.b
    e2gs = net.e ** 2 * np.diag(net.g) * noise.sigma  # diffusion scale per channel
    sqrt_dt = np.sqrt(dt_int)

    n_samples = int(round(horizon * f_s)) + 1
    out = np.empty((n_samples, 2 * n))
    _coi_project(delta, omega, m, mt)
    out[0, :n], out[0, n:] = delta, omega

    ev_idx = 0
    k_step = 0
    for s in range(1, n_samples):
        for _ in range(steps_per_sample):
            t = k_step * dt_int
            if ev_idx < len(pending) and t >= pending[ev_idx].time - 1e-12:
                net = pending[ev_idx].network
                ee = np.outer(net.e, net.e)
                eeg, eeb = ee * net.g, ee * net.b
                e2gs = net.e ** 2 * np.diag(net.g) * noise.sigma
                ev_idx += 1
            dd = delta[:, None] - delta[None, :]
            pe = (eeg * np.cos(dd) + eeb * np.sin(dd)).sum(axis=1)
            pcoi = np.sum(pm - pe)
            drift = (pm - pe - m * (pcoi / mt) - d * omega) / m
            xi = rng.standard_normal(n)
            shock = (-e2gs * xi + m * (e2gs @ xi / mt)) / m
            delta = delta + omega * dt_int
            omega = omega + drift * dt_int + shock * sqrt_dt
            k_step += 1
        _coi_project(delta, omega, m, mt)
        if not (np.all(np.isfinite(delta)) and np.all(np.isfinite(omega))):
            raise RuntimeError(f"simulation diverged at t={k_step * dt_int:.3f}")
        out[s, :n], out[s, n:] = delta, omega

    labels = tuple((g, "delta") for g in net.gen_ids) + \
        tuple((g, "omega") for g in net.gen_ids)
    return Trajectory(t0=0.0, dt_sample=1.0 / f_s, samples=out, labels=labels)


def add_measurement_noise(traj: Trajectory, noise: NoiseSpec) -> Trajectory:
    """Add i.i.d. Gaussian measurement noise to every channel.

    Seeded independently of the process noise (spawned child stream).
    """
    std = noise.measurement_noise_std
    if std == 0.0:
        return Trajectory(traj.t0, traj.dt_sample, traj.samples.copy(), traj.labels)
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=noise.seed, spawn_key=(1,)))
    noisy = traj.samples + std * rng.standard_normal(traj.samples.shape)
    return Trajectory(traj.t0, traj.dt_sample, noisy, traj.labels)


def drop_reference(traj: Trajectory, reference: int) -> Trajectory:
    """Remove the reference generator's (delta, omega) pair from the states."""
    keep = [k for k, (g, _) in enumerate(traj.labels) if g != reference]
    if len(keep) == len(traj.labels):
        raise KeyError(f"reference generator {reference} not in trajectory")
    labels = tuple(traj.labels[k] for k in keep)
    return Trajectory(traj.t0, traj.dt_sample, traj.samples[:, keep], labels)


def save_trajectory_csv(path, traj: Trajectory) -> None:
    """CSV export: header t, delta_<id>..., omega_<id>...; shortest round-trip floats."""
    header = ["t"] + [f"{kind}_{g}" for g, kind in traj.labels]
    times = traj.times
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for k in range(traj.samples.shape[0]):
            w.writerow([repr(float(times[k]))] +
                       [repr(float(v)) for v in traj.samples[k]])


def load_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    labels = []
    for name in header[1:]:
        kind, gid = name.rsplit("_", 1)
        labels.append((int(gid), kind))
    data = np.asarray(rows)
    if data.shape[0] < 2:
        raise ValueError("trajectory CSV needs at least two samples")
    return Trajectory(t0=data[0, 0], dt_sample=float(data[1, 0] - data[0, 0]),
                      samples=data[:, 1:], labels=tuple(labels))
