"""Bus-level network model: admittance assembly, load folding, Kron reduction.

Buses, branches and loads describe the physical grid. Generators are folded
in as internal EMF nodes behind their transient reactance, after which the
network is Kron-reduced to the generator-internal nodes only. All quantities
are per-unit on a single system base.
"""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

GENERATOR_INTERNAL = "generator-internal"
OTHER = "other"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str = OTHER


@dataclass(frozen=True)
class Branch:
    id: str
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_sh: float = 0.0  # total line-charging susceptance, split half per end
    in_service: bool = True


@dataclass(frozen=True)
class Load:
    bus: int
    p: float
    q: float
    v_nom: float = 1.0  # voltage magnitude at which the load is folded to a shunt


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    xd_prime: float


@dataclass(frozen=True)
class BusNetwork:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...]
    generators: tuple[Generator, ...]

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate bus ids")
        known = set(ids)
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise ValueError(f"branch {br.id}: endpoint not a known bus")
            if br.r ** 2 + br.x ** 2 == 0.0:
                raise ValueError(f"singular branch: {br.id} has zero impedance")
        for ld in self.loads:
            if ld.bus not in known:
                raise ValueError(f"load at unknown bus {ld.bus}")
        for g in self.generators:
            if g.bus not in known:
                raise ValueError(f"generator {g.id}: terminal bus {g.bus} unknown")
        gids = [g.id for g in self.generators]
        if len(set(gids)) != len(gids):
            raise ValueError("duplicate generator ids")

    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    def branch_by_id(self, branch_id: str) -> Branch:
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise KeyError(f"unknown branch id: {branch_id}")


@dataclass
class ReducedNetwork:
    """Admittance over generator-internal nodes plus internal EMF magnitudes.

    G/B are the real/imaginary parts of the reduced admittance matrix, E the
    internal voltage magnitudes, phi the angle of the diagonal admittances.
    """

    g: np.ndarray
    b: np.ndarray
    e: np.ndarray
    gen_ids: tuple[int, ...] = ()
    phi: np.ndarray = field(default=None)

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.e = np.asarray(self.e, dtype=float)
        n = self.n
        if self.g.shape != (n, n) or self.b.shape != (n, n):
            raise ValueError("G and B must be square and match E")
        if not self.gen_ids:
            self.gen_ids = tuple(range(1, n + 1))
        scale = max(np.abs(self.g).max(), np.abs(self.b).max(), 1.0)
        if (np.abs(self.g - self.g.T).max() > 1e-9 * scale
                or np.abs(self.b - self.b.T).max() > 1e-9 * scale):
            raise ValueError("reduced admittance must be symmetric")
        ydiag = np.hypot(np.diag(self.g), np.diag(self.b))
        if np.any(ydiag <= 0.0):
            raise ValueError("zero diagonal admittance in reduced network")
        if self.phi is None:
            self.phi = np.arctan2(np.diag(self.b), np.diag(self.g))

    @property
    def n(self) -> int:
        return self.e.shape[0]


def build_admittance(net: BusNetwork) -> np.ndarray:
    """Assemble the bus admittance matrix with loads folded as shunts.

    Series branch admittance y = 1/(r + jx); half of b_sh goes to each end.
    A load (p, q) at voltage v_nom becomes the shunt (p - jq)/v_nom**2.
    Out-of-service branches are skipped; parallel branches accumulate.
    """
    idx = net.bus_index()
    n = len(net.buses)
    y = np.zeros((n, n), dtype=complex)
    for br in net.branches:
        if not br.in_service:
            continue
        z = complex(br.r, br.x)
        if z == 0:
            raise ValueError(f"singular branch: {br.id}")
        ys = 1.0 / z
        i, j = idx[br.from_bus], idx[br.to_bus]
        y[i, i] += ys + 0.5j * br.b_sh
        y[j, j] += ys + 0.5j * br.b_sh
        y[i, j] -= ys
        y[j, i] -= ys
    for ld in net.loads:
        k = idx[ld.bus]
        y[k, k] += complex(ld.p, -ld.q) / ld.v_nom ** 2
    return y


def augmented_admittance(net: BusNetwork) -> tuple[np.ndarray, list[int]]:
    """Admittance extended with one internal node per generator.

    Each internal node couples to its terminal bus through 1/(j*xd_prime).
    Returns the extended matrix and the row indices of the internal nodes,
    ordered as net.generators.
    """
    y_bus = build_admittance(net)
    idx = net.bus_index()
    nb = len(net.buses)
    ng = len(net.generators)
    y = np.zeros((nb + ng, nb + ng), dtype=complex)
    y[:nb, :nb] = y_bus
    internal = []
    for k, g in enumerate(net.generators):
        if g.xd_prime <= 0:
            raise ValueError(f"generator {g.id}: xd_prime must be positive")
        yg = 1.0 / complex(0.0, g.xd_prime)
        t = idx[g.bus]
        m = nb + k
        y[m, m] += yg
        y[t, t] += yg
        y[m, t] -= yg
        y[t, m] -= yg
        internal.append(m)
    return y, internal


def kron_reduce(y_full: np.ndarray,
                internal_nodes,
                e: Optional[np.ndarray] = None,
                gen_ids: tuple[int, ...] = ()) -> ReducedNetwork:
    """Schur-complement elimination of all nodes except internal_nodes.

    Y_red = Y_GG - Y_GL Y_LL^-1 Y_LG. Raises if the eliminated block is
    singular (islanded or floating subnetwork).
    """
    y_full = np.asarray(y_full, dtype=complex)
    keep = np.asarray(list(internal_nodes), dtype=int)
    n = y_full.shape[0]
    drop = np.setdiff1d(np.arange(n), keep)
    y_gg = y_full[np.ix_(keep, keep)]
    if drop.size == 0:
        y_red = y_gg
    else:
        y_gl = y_full[np.ix_(keep, drop)]
        y_lg = y_full[np.ix_(drop, keep)]
        y_ll = y_full[np.ix_(drop, drop)]
        try:
            sol = np.linalg.solve(y_ll, y_lg)
        except np.linalg.LinAlgError:
            raise ValueError("islanded or degenerate network") from None
        if not np.all(np.isfinite(sol)) or np.linalg.cond(y_ll) > 1e13:
            raise ValueError("islanded or degenerate network")
        y_red = y_gg - y_gl @ sol
    m = keep.size
    if e is None:
        e = np.ones(m)
    return ReducedNetwork(g=y_red.real, b=y_red.imag, e=np.asarray(e, dtype=float),
                          gen_ids=gen_ids)


def apply_branch_outage(net: BusNetwork, branch_id: str) -> BusNetwork:
    """Copy of the network with one branch switched out of service."""
    br = net.branch_by_id(branch_id)
    if not br.in_service:
        raise ValueError(f"branch {branch_id} is already out of service")
    branches = tuple(replace(b, in_service=False) if b.id == branch_id else b
                     for b in net.branches)
    return replace(net, branches=branches)


def compute_internal_emf(v_terminal: complex, p: float, q: float,
                         xd_prime: float) -> tuple[float, float]:
    """Voltage behind the transient reactance: E∠δ0 = V + jx'_d conj(S/V).

    Returns (magnitude, angle in radians).
    """
    if abs(v_terminal) == 0:
        raise ValueError("terminal voltage magnitude must be positive")
    current = np.conj(complex(p, q) / v_terminal)
    emf = v_terminal + 1j * xd_prime * current
    return abs(emf), float(np.angle(emf))


def reduce_network(net: BusNetwork, operating_point: dict) -> tuple[ReducedNetwork, np.ndarray]:
    """Full classical-model reduction for a network at an operating point.

    operating_point maps generator id -> dict with keys v_mag, v_ang_rad,
    p, q (terminal phasor and injection). Returns the reduced network and
    the internal rotor angles delta0 (radians, ordered as net.generators).
    """
    y_aug, internal = augmented_admittance(net)
    e = np.empty(len(net.generators))
    delta0 = np.empty(len(net.generators))
    for k, g in enumerate(net.generators):
        try:
            op = operating_point[g.id]
        except KeyError:
            raise KeyError(f"operating point missing generator {g.id}") from None
        v = op["v_mag"] * np.exp(1j * op["v_ang_rad"])
        e[k], delta0[k] = compute_internal_emf(v, op["p"], op["q"], g.xd_prime)
    gen_ids = tuple(g.id for g in net.generators)
    red = kron_reduce(y_aug, internal, e=e, gen_ids=gen_ids)
    return red, delta0
