"""Closed-form pair (pseudospin) model of qubit-conditioned flip-flop dynamics.

A flip-flop pair conditioned on qubit level i evolves in the two-state space
{|up,down>, |down,up>} under

    h_i = (Delta_i sz + C12 sx) / 4,    Delta_i = 2 P_i (J1 - J2)

with P_i = <Sz> of the level (so 2 P_i = cos beta) and C12 the flip-flop
coupling of :func:`owpcce.bath.flip_flop_coupling`.  ``sz = +1`` on
|up,down>.  With this choice h_i is exactly the pair block of the
pure-dephasing cluster Hamiltonian, up to a term proportional to identity
that is common to both qubit levels.

Coherences follow the engine convention L = <b| U_u^dagger U_l |b> for the
initial pair state |b> = |up,down>.  The Hahn-echo unitary of the branch that
starts in |u> is T_u = exp(-i h_l tau) exp(-i h_u tau) = A0 - i A.sigma.

Every function accepts numpy arrays for the pair fields and ``tau`` and
broadcasts them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import CoherenceCurve


@dataclass(frozen=True)
class PseudospinPair:
    delta_u: np.ndarray
    delta_l: np.ndarray
    c12: np.ndarray

    @property
    def omega_u(self):
        return 0.25 * np.hypot(self.delta_u, self.c12)

    @property
    def omega_l(self):
        return 0.25 * np.hypot(self.delta_l, self.c12)

    @property
    def theta_u(self):
        return np.arctan2(np.abs(self.c12), self.delta_u)

    @property
    def theta_l(self):
        return np.arctan2(np.abs(self.c12), self.delta_l)

    def __len__(self):
        return int(np.size(self.c12))


def pair_from_couplings(P_u, P_l, J1, J2, C12) -> PseudospinPair:
    dJ = np.asarray(J1, dtype=float) - np.asarray(J2, dtype=float)
    return PseudospinPair(2 * np.asarray(P_u) * dJ, 2 * np.asarray(P_l) * dJ, np.asarray(C12, dtype=float))


def _rot(pair, tau):
    tau = np.asarray(tau, dtype=float)
    wu, wl = pair.omega_u, pair.omega_l
    return (np.cos(wu * tau), np.sin(wu * tau), np.cos(wl * tau), np.sin(wl * tau))


def hahn_components(pair: PseudospinPair, tau):
    """(A0, Ax, Ay, Az) of T_u for free-evolution interval ``tau``.

    A_y = sin(w_u tau) sin(w_l tau) sin(theta_u - theta_l) is the only
    component that changes sign under u <-> l.
    """
    cu, su, cl, sl = _rot(pair, tau)
    tu, tl = pair.theta_u, pair.theta_l
    A0 = cu * cl - su * sl * np.cos(tu - tl)
    Ax = cl * su * np.sin(tu) + cu * sl * np.sin(tl)
    Ay = su * sl * np.sin(tu - tl)
    Az = cl * su * np.cos(tu) + cu * sl * np.cos(tl)
    return A0, Ax, Ay, Az


def _cos_phi(A0, Ay):
    # cos(phi) = A0(2 tau) = 2 (A0^2 + Ay^2) - 1
    return 2 * (A0 * A0 + Ay * Ay) - 1


def _chebyshev_u(n: int, x):
    """U_{n}(x) = sin((n+1) phi) / sin(phi) for x = cos(phi)."""
    u_prev, u = np.ones_like(x), 2 * x
    if n == 0:
        return u_prev
    for _ in range(n - 1):
        u_prev, u = u, 2 * x * u - u_prev
    return u


def envelope_cpmg1(pair: PseudospinPair, tau):
    """|L|^2 after tau - pi - tau for the initial state |up,down>.

    Equals 1 - 4 A_y^2 (A_0^2 + A_z^2).  In the unmixed regime
    Delta_u = -Delta_l one has A_z = 0 and this reduces to 1 - 4 A_y^2 A_0^2.
    """
    A0, _, Ay, Az = hahn_components(pair, tau)
    return 1 - 4 * Ay**2 * (A0**2 + Az**2)


def envelope_cpmg_even(pair: PseudospinPair, tau, N: int):
    """Real coherence after (tau - pi - tau)^N, N even.

    L = 1 - [2 A_y^2 / (A_y^2 + A_0^2)] sin^2(N phi / 2), cos(phi) = A_0(2 tau).
    This is the real part of the single-state coherence, i.e. the average
    over the two flip-flop initial states |up,down> and |down,up>.
    """
    if N < 2 or N % 2:
        raise ValueError("envelope_cpmg_even needs an even N >= 2")
    A0, _, Ay, _ = hahn_components(pair, tau)
    denom = Ay**2 + A0**2
    cphi = np.clip(_cos_phi(A0, Ay), -1.0, 1.0)
    # sin^2(N phi / 2) = (1 - T_N(cos phi)) / 2
    phi = np.arccos(cphi)
    s2 = np.sin(N * phi / 2) ** 2
    ratio = np.divide(2 * Ay**2, denom, out=np.zeros_like(denom * 1.0), where=denom > 0)
    return 1 - ratio * s2


def envelope_cpmg2(pair: PseudospinPair, tau):
    """|L|^2 for CPMG2 and the initial state |up,down>.

    (1 - 8 A_y^2 (A_x^2 + A_z^2))^2 + 16 A_x^2 A_y^2 cos^2(phi); with A_z = 0
    (unmixed regime) this is 1 - 64 A_y^2 A_0^2 A_x^4.
    """
    A0, Ax, Ay, Az = hahn_components(pair, tau)
    re = 1 - 8 * Ay**2 * (Ax**2 + Az**2)
    return re**2 + 16 * Ax**2 * Ay**2 * _cos_phi(A0, Ay) ** 2


def envelope_cpmg1_unmixed(pair: PseudospinPair, tau):
    """1 - 4 A_y^2 A_0^2; exact only when Delta_u = -Delta_l."""
    A0, _, Ay, _ = hahn_components(pair, tau)
    return 1 - 4 * Ay**2 * A0**2


def envelope_cpmg2_unmixed(pair: PseudospinPair, tau):
    """1 - 64 A_y^2 A_0^2 A_x^4; exact only when Delta_u = -Delta_l."""
    A0, Ax, Ay, _ = hahn_components(pair, tau)
    return 1 - 64 * Ay**2 * A0**2 * Ax**4


def _pauli_matrix(a0, ax, ay, az):
    """a0 - i (a.sigma) as (..., 2, 2)."""
    m = np.empty(np.broadcast(a0, ax, ay, az).shape + (2, 2), dtype=complex)
    m[..., 0, 0] = a0 - 1j * az
    m[..., 1, 1] = a0 + 1j * az
    m[..., 0, 1] = -1j * ax - ay
    m[..., 1, 0] = -1j * ax + ay
    return m


def _free(pair, which, t):
    w = pair.omega_u if which == "u" else pair.omega_l
    th = pair.theta_u if which == "u" else pair.theta_l
    c, s = np.cos(w * t), np.sin(w * t)
    return _pauli_matrix(c, s * np.sin(th), 0 * c, s * np.cos(th))


def pair_coherence(pair: PseudospinPair, tau, N: int):
    """Complex <up,down| U_u^dagger U_l |up,down> after N pulses at spacing 2 tau.

    N = 0 is free evolution for time ``tau``.  Closed forms are used for
    N = 0, 1 and even N; odd N > 1 composes the Hahn blocks numerically.
    """
    if N == 0:
        cu, su, cl, sl = _rot(pair, tau)
        tu, tl = pair.theta_u, pair.theta_l
        return cu * cl + su * sl * np.cos(tu - tl) + 1j * (su * cl * np.cos(tu) - cu * sl * np.cos(tl))
    A0, Ax, Ay, Az = hahn_components(pair, tau)
    if N == 1:
        return (1 - 2 * Ay**2) - 2j * Ax * Ay
    if N % 2 == 0:
        re = envelope_cpmg_even(pair, tau, N)
        cphi = np.clip(_cos_phi(A0, Ay), -1.0, 1.0)
        return re + 2j * Ax * Ay * _chebyshev_u(N - 1, cphi)
    tau = np.asarray(tau, dtype=float)
    Pu, Pl = _free(pair, "u", tau), _free(pair, "l", tau)
    Tu, Tl = Pl @ Pu, Pu @ Pl
    Wu = Pu @ Pl @ Pl @ Pu
    Wl = Pl @ Pu @ Pu @ Pl
    Uu = Tu @ np.linalg.matrix_power(Wu, (N - 1) // 2)
    Ul = Tl @ np.linalg.matrix_power(Wl, (N - 1) // 2)
    return np.einsum("...i,...i->...", Uu[..., :, 0].conj(), Ul[..., :, 0])


def pair_envelope(pair: PseudospinPair, tau, N: int):
    """|L| for one pair; the quantity multiplied over pairs."""
    return np.abs(pair_coherence(pair, tau, N))


def pairs_from_bath(bath, pair_list, P_u: float, P_l: float, antiparallel_only: bool = True):
    """PseudospinPair batch for the given bath index pairs.

    Pairs with parallel initial orientations cannot flip-flop and contribute
    unit factors; they are dropped when ``antiparallel_only``.  The first spin
    of each pair is reordered to be the spin-up one so the initial state is
    |up,down>.
    """
    from .bath import dipolar_tensor, flip_flop_coupling

    pairs = np.asarray(pair_list, dtype=int).reshape(-1, 2)
    o = bath.orientations
    if antiparallel_only:
        pairs = pairs[o[pairs[:, 0]] != o[pairs[:, 1]]]
    swap = o[pairs[:, 0]] < o[pairs[:, 1]]
    pairs = np.where(swap[:, None], pairs[:, ::-1], pairs)
    r = bath.positions[pairs[:, 0]] - bath.positions[pairs[:, 1]]
    D = dipolar_tensor(r, bath.spec.gyromag)
    c12 = flip_flop_coupling(D, bath.spec.field_direction)
    return pair_from_couplings(P_u, P_l, bath.J[pairs[:, 0]], bath.J[pairs[:, 1]], np.atleast_1d(c12))


def product_over_pairs(pairs: PseudospinPair, N: int, timepoints, metadata: dict | None = None,
                       chunk: int = 2048) -> CoherenceCurve:
    """Coherence as the product of pair envelopes over a total-time grid.

    ``N`` = 0 for FID, otherwise CPMG-N with tau = t / 2N at every gridpoint.
    """
    t = np.asarray(timepoints, dtype=float)
    tau = t if N == 0 else t / (2 * N)
    logL = np.zeros_like(t)
    n = len(pairs)
    du, dl, c = (np.atleast_1d(x) for x in (pairs.delta_u, pairs.delta_l, pairs.c12))
    for s in range(0, n, chunk):
        sub = PseudospinPair(du[s:s + chunk, None], dl[s:s + chunk, None], c[s:s + chunk, None])
        env = pair_envelope(sub, tau[None, :], N)
        logL += np.log(np.maximum(env, 1e-300)).sum(axis=0)
    meta = {"method": "pair-product", "N": N}
    meta.update(metadata or {})
    return CoherenceCurve(t, np.exp(logL), meta)
