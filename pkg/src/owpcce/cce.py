"""Cluster correlation expansion for a mixed donor qubit in a nuclear bath.

Cluster problems come in two flavours:

``pure-dephasing``
    the bath evolves under h_i = P_i sum_a J_a Iz_a + H_bath, conditioned on
    the qubit level i in {u, l}; pi pulses swap the conditioning.
``full-hyperfine``
    the donor (electron and host nucleus) and the cluster evolve jointly,
    including the S+I- + S-I+ parts of the contact coupling; ideal pi pulses
    swap |u> and |l> and leave the other donor levels alone.

Both return L_K(t) = <B_u(t)|B_l(t)> normalized to the bath-free value.

The bath Hamiltonian is nuclear Zeeman plus dipolar coupling.  Dipolar terms
are included for pairs joined by an edge of the neighbor graph, so a cluster
made of disconnected parts factorizes exactly and its irreducible term is 1.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .analysis import CoherenceCurve
from .bath import BathRealization, dipolar_tensor
from .central import DonorParams, Transition, central_eigenbasis, spin_matrices
from .clusters import NeighborGraph, build_neighbor_graph, enumerate_clusters

log = logging.getLogger(__name__)

MODES = ("pure-dephasing", "full-hyperfine")
INITIAL_STATES = ("sampled", "average")
COUPLINGS = ("graph", "all")
EPS_DIV = 1e-10
DEFAULT_THRESHOLD = 0.05
MAX_CLUSTER = 5
_CHUNK_BUDGET = 1_500_000  # complex entries per (cluster, time, d, d) work array


# -- spin operators on k bath spins ---------------------------------------------

@lru_cache(maxsize=None)
def _bath_ops(k: int):
    """Single-spin operators (k, 3, d, d) and Iz eigenvalues (d, k); spin 0 is the leading factor."""
    s = [m.astype(complex) for m in spin_matrices(0.5)]
    d = 2**k
    ops = np.zeros((k, 3, d, d), dtype=complex)
    for a in range(k):
        for i in range(3):
            mats = [np.eye(2, dtype=complex)] * k
            mats = list(mats)
            mats[a] = s[i]
            m = mats[0]
            for x in mats[1:]:
                m = np.kron(m, x)
            ops[a, i] = m
    bits = (np.arange(d)[:, None] >> (k - 1 - np.arange(k))[None, :]) & 1
    mz = 0.5 - bits  # bit 0 -> up
    return ops, mz


@lru_cache(maxsize=None)
def _pair_ops(k: int):
    """I_a^i I_b^j for a < b as (npairs, 3, 3, d, d)."""
    ops, _ = _bath_ops(k)
    pairs = list(itertools.combinations(range(k), 2))
    d = 2**k
    out = np.zeros((len(pairs), 3, 3, d, d), dtype=complex)
    for p, (a, b) in enumerate(pairs):
        for i in range(3):
            for j in range(3):
                out[p, i, j] = ops[a, i] @ ops[b, j]
    return pairs, out


def _state_index(orientations) -> np.ndarray:
    """Basis index of a product state from +-1/2 orientations, shape (..., k)."""
    o = np.asarray(orientations)
    k = o.shape[-1]
    bits = (o < 0).astype(int)
    return (bits * (1 << (k - 1 - np.arange(k)))).sum(axis=-1)


def secular_part(D: np.ndarray) -> np.ndarray:
    """Keep D_zz Iz Iz and the flip-flop terms (field along z)."""
    out = np.zeros_like(D)
    t = 0.5 * (D[..., 0, 0] + D[..., 1, 1])
    out[..., 0, 0] = t
    out[..., 1, 1] = t
    out[..., 2, 2] = D[..., 2, 2]
    return out


# -- the system -------------------------------------------------------------------

@dataclass
class CCESystem:
    """Everything shared by the cluster problems of one (bath, donor, field, transition)."""

    bath: BathRealization
    donor: DonorParams
    B: float
    transition: Transition
    mode: str = "pure-dephasing"
    secular: bool = False
    initial_state: str = "sampled"
    graph: NeighborGraph | None = None
    couplings: str = "graph"
    P_u: float = field(init=False)
    P_l: float = field(init=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.initial_state not in INITIAL_STATES:
            raise ValueError(f"initial_state must be one of {INITIAL_STATES}")
        if self.couplings not in COUPLINGS:
            raise ValueError(f"couplings must be one of {COUPLINGS}")
        if self.graph is None:
            self.graph = build_neighbor_graph(self.bath.positions)
        E, V, P = central_eigenbasis(self.donor, self.B)
        u, l = self.transition.upper - 1, self.transition.lower - 1
        self.P_u, self.P_l = float(P[u]), float(P[l])
        self._central = (E, V)
        self._pos = self.bath.field_frame_positions()
        self._gB = self.bath.spec.gyromag * self.B

    def __getstate__(self):
        return self.__dict__

    def dipolar(self, members) -> tuple[list[tuple[int, int]], np.ndarray]:
        """Intra-cluster dipolar tensors (npairs, 3, 3) in the field frame, zero off-graph."""
        k = len(members)
        pairs = list(itertools.combinations(range(k), 2))
        D = np.zeros((len(pairs), 3, 3))
        for p, (a, b) in enumerate(pairs):
            ia, ib = members[a], members[b]
            if self.couplings == "all" or self.graph.adjacent(ia, ib):
                D[p] = dipolar_tensor(self._pos[ia] - self._pos[ib], self.bath.spec.gyromag)
        if self.secular:
            D = secular_part(D)
        return pairs, D

    def problem(self, cluster) -> "ClusterProblem":
        members = tuple(int(i) for i in cluster)
        if len(members) > MAX_CLUSTER + 3:
            raise ValueError(f"cluster of size {len(members)} is too large")
        _, D = self.dipolar(members)
        J = self.bath.J[list(members)]
        orient = self.bath.orientations[list(members)]
        if self.mode == "pure-dephasing":
            h_u, h_l = _pure_hamiltonians(J[None], D[None], self.P_u, self.P_l, self._gB)
            return ClusterProblem(members, self.transition, self.mode, h_u[0], h_l[0], orient,
                                  self.initial_state)
        H = _full_hamiltonian(self.donor, self.B, J, D, self._gB)
        return ClusterProblem(members, self.transition, self.mode, H, None, orient,
                              self.initial_state, central=self._central)


@dataclass
class ClusterProblem:
    cluster: tuple[int, ...]
    transition: Transition
    mode: str
    h_u: np.ndarray  # full mode: the joint Hamiltonian
    h_l: np.ndarray | None
    orientations: np.ndarray
    initial_state: str = "sampled"
    central: tuple | None = None

    def __post_init__(self):
        for h in (self.h_u, self.h_l):
            if h is not None and not np.allclose(h, h.conj().T, atol=1e-9 * max(1.0, np.abs(h).max())):
                raise ValueError("cluster Hamiltonian is not Hermitian")


def _pure_hamiltonians(J, D, P_u, P_l, gB):
    """Batched conditional Hamiltonians for clusters of one size.

    J: (C, k); D: (C, npairs, 3, 3).  Returns h_u, h_l of shape (C, d, d).
    """
    C, k = J.shape
    _, mz = _bath_ops(k)
    if k >= 2:
        _, popss = _pair_ops(k)
        Hd = np.einsum("cpij,pijxy->cxy", D, popss)
    else:
        Hd = np.zeros((C, 2, 2), dtype=complex)
    out = []
    for P in (P_u, P_l):
        diag = (P * J + gB) @ mz.T  # (C, d)
        h = Hd.copy()
        idx = np.arange(2**k)
        h[:, idx, idx] += diag
        out.append(h)
    return out


def _full_hamiltonian(donor, B, J, D, gB):
    """Joint donor (x) cluster Hamiltonian with the isotropic contact coupling."""
    from .central import donor_hamiltonian

    k = len(J)
    ops, _ = _bath_ops(k)
    dB = 2**k
    Hc = donor_hamiltonian(donor, B)
    nc = Hc.shape[0]
    S = spin_matrices(0.5)
    nI = nc // 2
    Sfull = [np.kron(s, np.eye(nI)) for s in S]
    H = np.kron(Hc, np.eye(dB))
    bath = np.zeros((dB, dB), dtype=complex)
    for a in range(k):
        bath += gB * ops[a, 2]
        for i in range(3):
            H = H + J[a] * np.kron(Sfull[i], ops[a, i])
    if k >= 2:
        _, popss = _pair_ops(k)
        bath += np.einsum("pij,pijxy->xy", D, popss)
    return H + np.kron(np.eye(nc), bath)


# -- propagation ---------------------------------------------------------------------

def _propagators(E, V, s):
    """exp(-i h s) for eigensystem (E (C,d), V (C,d,d)) and times s (T,) -> (C,T,d,d)."""
    ph = np.exp(-1j * E[:, None, :] * s[None, :, None])
    return np.einsum("cxk,ctk,cyk->ctxy", V, ph, V.conj(), optimize=True)


def _branch_unitaries(Eu, Vu, El, Vl, N, t):
    """U_u, U_l for every total time in ``t`` (N = 0 means FID)."""
    if N == 0:
        return _propagators(Eu, Vu, t), _propagators(El, Vl, t)
    tau = t / (2 * N)
    Pu, Pl = _propagators(Eu, Vu, tau), _propagators(El, Vl, tau)
    if N == 1:
        return Pl @ Pu, Pu @ Pl
    Pu2, Pl2 = _propagators(Eu, Vu, 2 * tau), _propagators(El, Vl, 2 * tau)
    Wu = Pu @ Pl2 @ Pu
    Wl = Pl @ Pu2 @ Pl
    Uu = np.linalg.matrix_power(Wu, N // 2)
    Ul = np.linalg.matrix_power(Wl, N // 2)
    if N % 2:
        Uu = (Pl @ Pu) @ np.linalg.matrix_power(Wu, (N - 1) // 2)
        Ul = (Pu @ Pl) @ np.linalg.matrix_power(Wl, (N - 1) // 2)
    return Uu, Ul


def _pure_batch(h_u, h_l, orient, N, t, initial_state):
    Eu, Vu = np.linalg.eigh(h_u)
    El, Vl = np.linalg.eigh(h_l)
    Uu, Ul = _branch_unitaries(Eu, Vu, El, Vl, N, t)
    if initial_state == "average":
        d = h_u.shape[-1]
        return np.einsum("ctxy,ctxy->ct", Uu.conj(), Ul) / d
    b = _state_index(orient)
    C = len(b)
    cu = Uu[np.arange(C), :, :, b]  # (C, T, d)
    cl = Ul[np.arange(C), :, :, b]
    return np.einsum("ctx,ctx->ct", cu.conj(), cl)


def _full_coherence(H, central, transition, orient, N, t, initial_state):
    """Joint propagation of (|u> + |l>)/sqrt2 (x) |b> with explicit pi pulses."""
    Ec, Vc = central
    nc = Vc.shape[0]
    dB = H.shape[0] // nc
    k = int(round(math.log2(dB)))
    u, l = transition.upper - 1, transition.lower - 1
    E, V = np.linalg.eigh(H)
    # pi pulse on the donor: |u><l| + |l><u| + sum_{i != u,l} |i><i|
    swap = np.eye(nc, dtype=complex)
    swap[[u, l], [u, l]] = 0
    swap[u, l] = swap[l, u] = 1
    pulse_c = Vc @ swap @ Vc.conj().T
    pulse = np.kron(pulse_c, np.eye(dB))
    pulse_e = V.conj().T @ pulse @ V
    psi_c = (Vc[:, u] + Vc[:, l]) / math.sqrt(2)
    if initial_state == "average":
        states = list(range(dB))
    else:
        states = [int(_state_index(orient))] if k else [0]
    a, b = (u, l) if N % 2 == 0 else (l, u)
    out = np.zeros(len(t), dtype=complex)
    for s in states:
        psi0 = np.kron(psi_c, np.eye(dB)[s])
        v0 = V.conj().T @ psi0
        vals = np.empty(len(t), dtype=complex)
        for it, tt in enumerate(t):
            if N == 0:
                v = np.exp(-1j * E * tt) * v0
            else:
                tau = tt / (2 * N)
                p1, p2 = np.exp(-1j * E * tau), np.exp(-2j * E * tau)
                v = p1 * v0
                for _ in range(N - 1):
                    v = p2 * (pulse_e @ v)
                v = p1 * (pulse_e @ v)
            psi = (V @ v).reshape(nc, dB)
            pa = Vc[:, a].conj() @ psi
            pb = Vc[:, b].conj() @ psi
            vals[it] = 2 * np.vdot(pa, pb)
        out += vals
    return out / len(states)


def _full_reference(central, transition, N, t):
    """Bath-free donor coherence used to normalize full-mode cluster curves."""
    Ec, Vc = central
    H0 = Vc @ np.diag(Ec) @ Vc.conj().T
    return _full_coherence(H0, central, transition, np.zeros(0), N, t, "sampled")


def cluster_coherence(problem: ClusterProblem, N: int, timepoints, reference=None) -> np.ndarray:
    """Complex L_K(t) over a total-time grid for FID (N = 0) or CPMG-N."""
    t = np.asarray(timepoints, dtype=float)
    if len(problem.cluster) > MAX_CLUSTER + 3:
        raise ValueError("cluster too large")
    if problem.mode == "pure-dephasing":
        return _pure_batch(problem.h_u[None], problem.h_l[None], problem.orientations[None],
                           N, t, problem.initial_state)[0]
    L = _full_coherence(problem.h_u, problem.central, problem.transition, problem.orientations,
                        N, t, problem.initial_state)
    if reference is None:
        reference = _full_reference(problem.central, problem.transition, N, t)
    return L / reference


# -- batched evaluation of many clusters ---------------------------------------------

def _chunk_size(k: int, T: int) -> int:
    d = 2**k
    return max(1, _CHUNK_BUDGET // (T * d * d))


def _eval_chunk(args):
    system, clusters, N, t = args
    k = len(clusters[0])
    idx = np.asarray(clusters, dtype=int)
    if system.mode == "pure-dephasing":
        J = system.bath.J[idx]
        D = np.stack([system.dipolar(c)[1] for c in clusters]) if k >= 2 else np.zeros((len(idx), 0, 3, 3))
        h_u, h_l = _pure_hamiltonians(J, D, system.P_u, system.P_l, system._gB)
        return _pure_batch(h_u, h_l, system.bath.orientations[idx], N, t, system.initial_state)
    ref = _full_reference(system._central, system.transition, N, t)
    return np.stack([cluster_coherence(system.problem(c), N, t, ref) for c in clusters])


def evaluate_clusters(system: CCESystem, clusters, N: int, timepoints, workers: int = 1) -> np.ndarray:
    """L_K(t) for a list of equal-size clusters, shape (len(clusters), T).

    Work is split into chunks whose size depends only on (k, T), so results
    are bit-identical for any worker count.
    """
    t = np.asarray(timepoints, dtype=float)
    clusters = [tuple(c) for c in clusters]
    if not clusters:
        return np.zeros((0, len(t)), dtype=complex)
    k = len(clusters[0])
    step = _chunk_size(k, len(t)) if system.mode == "pure-dephasing" else 64
    jobs = [(system, clusters[s:s + step], N, t) for s in range(0, len(clusters), step)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_eval_chunk, jobs))
    else:
        parts = [_eval_chunk(j) for j in jobs]
    return np.concatenate(parts, axis=0)


# -- recursion and assembly -------------------------------------------------------------

@dataclass
class TermCache:
    terms: dict = field(default_factory=dict)  # cluster tuple -> irreducible term (T,)
    raw: dict = field(default_factory=dict)  # cluster tuple -> L_K (T,)
    divergences: dict = field(default_factory=dict)  # size -> count of clamped timepoints


def cce_term(cluster, L_K: np.ndarray, cache: TermCache, eps_div: float = EPS_DIV) -> np.ndarray:
    """Irreducible term L_K / prod over proper subsets in the cache.

    Subsets absent from the cache (disconnected or outside the truncation)
    are unit factors.  Timepoints where the denominator magnitude drops
    below ``eps_div`` are clamped to 1 and counted.
    """
    members = tuple(cluster)
    k = len(members)
    denom = np.ones_like(L_K)
    for r in range(1, k):
        for sub in itertools.combinations(members, r):
            term = cache.terms.get(sub)
            if term is not None:
                denom = denom * term
    bad = np.abs(denom) < eps_div
    out = np.where(bad, 1.0, L_K / np.where(bad, 1.0, denom))
    if bad.any():
        cache.divergences[k] = cache.divergences.get(k, 0) + int(bad.sum())
    cache.terms[members] = out
    cache.raw[members] = L_K
    return out


@dataclass
class CCEResult:
    timepoints: np.ndarray
    orders: dict  # k -> complex L_[k](t)
    divergences: dict
    cluster_counts: dict
    threshold: float = DEFAULT_THRESHOLD
    metadata: dict = field(default_factory=dict)

    @property
    def k_max(self) -> int:
        return max(self.orders)

    def curve(self, k: int | None = None) -> CoherenceCurve:
        k = self.k_max if k is None else k
        meta = dict(self.metadata)
        meta["cce_order"] = k
        return CoherenceCurve(self.timepoints, np.abs(self.orders[k]), meta)

    def gap(self, k1: int, k2: int) -> float:
        return float(np.max(np.abs(np.abs(self.orders[k1]) - np.abs(self.orders[k2]))))

    @property
    def converged(self) -> dict:
        """k -> sup_t |L_[k] - L_[k+1]| < threshold."""
        ks = sorted(self.orders)
        return {k: self.gap(k, k2) < self.threshold for k, k2 in zip(ks, ks[1:])}


def assemble(cache: TermCache, clusters_by_size: dict, timepoints, k_max: int,
             threshold: float = DEFAULT_THRESHOLD, metadata: dict | None = None) -> CCEResult:
    """Truncated products L_[k] = prod_{|K| <= k} irreducible terms, k = 1..k_max."""
    t = np.asarray(timepoints, dtype=float)
    running = np.ones(len(t), dtype=complex)
    orders = {}
    for k in range(1, k_max + 1):
        for c in clusters_by_size.get(k, []):
            running = running * cache.terms[tuple(c)]
        orders[k] = running.copy()
    orders.pop(1, None)
    counts = {k: len(clusters_by_size.get(k, [])) for k in range(1, k_max + 1)}
    return CCEResult(t, orders, dict(cache.divergences), counts, threshold, dict(metadata or {}))


def run_cce(system: CCESystem, N: int, timepoints, k_max: int = 2, clusters=None,
            workers: int = 1, threshold: float = DEFAULT_THRESHOLD, eps_div: float = EPS_DIV,
            cache: TermCache | None = None) -> CCEResult:
    """Full expansion: singles, then clusters of size 2..k_max, then products."""
    t = np.asarray(timepoints, dtype=float)
    if not 2 <= k_max <= MAX_CLUSTER:
        raise ValueError(f"k_max must lie in [2, {MAX_CLUSTER}]")
    if clusters is None:
        clusters = enumerate_clusters(system.graph, k_max)
    by_size = {1: [(i,) for i in range(len(system.bath))]}
    for k in range(2, k_max + 1):
        by_size[k] = [tuple(c) for c in clusters.get(k, [])]
    cache = cache or TermCache()
    for k in range(1, k_max + 1):
        todo = [c for c in by_size[k] if c not in cache.terms]
        if todo:
            L = evaluate_clusters(system, todo, N, t, workers)
            for c, Lc in zip(todo, L):
                cce_term(c, Lc, cache, eps_div)
        log.info("CCE size %d: %d clusters", k, len(by_size[k]))
    meta = {
        "B": system.B, "transition": (system.transition.upper, system.transition.lower),
        "N": N, "mode": system.mode, "seed": system.bath.spec.seed,
    }
    res = assemble(cache, by_size, t, k_max, threshold, meta)
    if res.divergences:
        log.warning("divergence guard clamped %s timepoints (by cluster size)", res.divergences)
    return res


def exact_coherence(system: CCESystem, N: int, timepoints) -> np.ndarray:
    """Direct propagation of the whole (small) bath as one cluster."""
    return cluster_coherence(system.problem(tuple(range(len(system.bath)))), N, timepoints)
