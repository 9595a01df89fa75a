"""Mixed electron/host-nuclear donor spectrum.

The donor Hamiltonian is

    H = w0 Sz - delta w0 Iz + A I.S,      w0 = gamma_e B,  delta = gamma_n / gamma_e

which conserves m = mS + mI.  Each m with |m| < I + 1/2 gives a doublet
rotated by the mixing angle ``beta_m`` out of the Zeeman pair
{|+1/2, m-1/2>, |-1/2, m+1/2>}; the two |m| = I + 1/2 states are unmixed.

Levels are numbered 1..2(2I+1) by ascending energy at a reference field of
0.6 T and keep their (m, branch) label at every other field, so level
numbers are adiabatic.  For bismuth this reproduces the usual numbering
where levels 10 and 20 are the unmixed states.

Energies are angular frequencies (rad/s); fields are in tesla.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .kvfile import read_kv

REFERENCE_FIELD = 0.6  # T, fixes level numbering
OWP_XTOL = 1e-12  # T
DERIVATIVE_STEP = 1e-5  # T


class NoSignChange(ValueError):
    """The requested root is not bracketed by the field range."""


@dataclass(frozen=True)
class DonorParams:
    label: str
    host_spin: float
    hyperfine_A: float  # rad/s
    electron_gyromag: float  # rad s^-1 T^-1
    host_nuclear_gyromag: float  # rad s^-1 T^-1
    ionization_energy: float = 0.069  # eV, used by the bath wavefunction

    def __post_init__(self):
        twice = Fraction(self.host_spin).limit_denominator(8) * 2
        if twice.denominator != 1 or twice < 1 or abs(float(twice) / 2 - self.host_spin) > 1e-12:
            raise ValueError(f"host spin must be a positive half-integer, got {self.host_spin}")
        if not self.hyperfine_A > 0:
            raise ValueError("hyperfine_A must be positive")

    @property
    def n_levels(self) -> int:
        return int(round(2 * (2 * self.host_spin + 1)))

    @property
    def delta(self) -> float:
        """Host-nuclear to electron gyromagnetic ratio."""
        return self.host_nuclear_gyromag / self.electron_gyromag

    def with_delta_zero(self) -> "DonorParams":
        return replace(self, host_nuclear_gyromag=0.0)


def donor_from_mapping(kv: dict, label: str = "donor") -> DonorParams:
    """DonorParams from donor-file keys (frequencies in Hz, gyromagnetic ratios in rad/s/T)."""
    try:
        return DonorParams(
            label=kv.get("label", label),
            host_spin=float(kv["host_spin"]),
            hyperfine_A=2 * math.pi * float(kv["hyperfine_A_hz"]),
            electron_gyromag=float(kv["electron_gyromag"]),
            host_nuclear_gyromag=float(kv["host_nuclear_gyromag"]),
            ionization_energy=float(kv.get("ionization_energy_ev", 0.069)),
        )
    except KeyError as exc:
        raise ValueError(f"donor {label!r} is missing key {exc.args[0]!r}") from None


def load_donor(name_or_path: str | Path) -> DonorParams:
    """Load a donor parameter file (``bismuth``/``arsenic`` presets or a path)."""
    s = str(name_or_path)
    if "/" not in s and not s.endswith(".donor") and not Path(s).exists():
        s = s + ".donor"
    return donor_from_mapping(read_kv(s), Path(s).stem)


@dataclass(frozen=True)
class AdiabaticLevel:
    index: int
    m: float
    branch: int  # +1 or -1
    beta: float
    energy: float
    P: float  # <Sz>


@dataclass(frozen=True)
class Transition:
    upper: int
    lower: int
    delta_m: int

    @classmethod
    def between(cls, donor: DonorParams, upper: int, lower: int) -> "Transition":
        if upper == lower:
            raise ValueError("transition needs two distinct levels")
        labels = level_labels(donor)
        for i in (upper, lower):
            if not 1 <= i <= donor.n_levels:
                raise ValueError(f"level index {i} outside 1..{donor.n_levels}")
        mu, ml = labels[upper - 1][0], labels[lower - 1][0]
        return cls(upper, lower, int(round(mu - ml)))


def _check_field(B):
    if np.any(np.asarray(B) < 0):
        raise ValueError("magnetic field must be non-negative")


def _doublet(donor: DonorParams, m: float, B):
    """Mixing angle and energies of the (+, -) doublet members for given m."""
    I, A = donor.host_spin, donor.hyperfine_A
    w0 = donor.electron_gyromag * np.asarray(B, dtype=float)
    d = donor.delta
    X = I * (I + 1) - m * m + 0.25
    Z = m + w0 * (1 + d) / A
    centre = -A / 4 - d * w0 * m
    if X <= 1e-12:  # unmixed edge state
        sign = 1.0 if m > 0 else -1.0
        e = centre + sign * (A / 2) * Z
        return np.zeros_like(Z), e, e
    beta = np.arctan2(np.sqrt(X), Z)
    half = (A / 2) * np.sqrt(Z * Z + X)
    return beta, centre + half, centre - half


@lru_cache(maxsize=None)
def _labels_cached(key) -> tuple[tuple[float, int], ...]:
    donor = DonorParams(*key)
    I = donor.host_spin
    mmax = I + 0.5
    entries = []
    nm = int(round(2 * mmax))
    for k in range(nm + 1):
        m = -mmax + k
        beta, ep, em = _doublet(donor, m, REFERENCE_FIELD)
        if abs(abs(m) - mmax) < 1e-9:
            branch = 1 if m > 0 else -1
            entries.append((float(ep), m, branch))
        else:
            entries.append((float(ep), m, 1))
            entries.append((float(em), m, -1))
    entries.sort()
    return tuple((m, b) for _, m, b in entries)


def level_labels(donor: DonorParams) -> tuple[tuple[float, int], ...]:
    """(m, branch) for level indices 1..n (element 0 is level 1)."""
    return _labels_cached(
        (donor.label, donor.host_spin, donor.hyperfine_A, donor.electron_gyromag,
         donor.host_nuclear_gyromag, donor.ionization_energy)
    )


def _level(donor: DonorParams, index: int, B):
    labels = level_labels(donor)
    if not 1 <= index <= len(labels):
        raise IndexError(f"level index {index} outside 1..{len(labels)}")
    m, branch = labels[index - 1]
    beta, ep, em = _doublet(donor, m, B)
    energy = ep if branch > 0 else em
    P = branch * 0.5 * np.cos(beta)
    return m, branch, beta, energy, P


def build_spectrum(donor: DonorParams, B: float) -> list[AdiabaticLevel]:
    _check_field(B)
    out = []
    for i in range(1, donor.n_levels + 1):
        m, branch, beta, energy, P = _level(donor, i, B)
        out.append(AdiabaticLevel(i, m, branch, float(beta), float(energy), float(P)))
    return out


def polarization(donor: DonorParams, B, index: int):
    """P = <i|Sz|i> for level ``index``; ``B`` may be an array."""
    _check_field(B)
    P = _level(donor, index, B)[4]
    return float(P) if np.ndim(P) == 0 else P


def level_energy(donor: DonorParams, B, index: int):
    _check_field(B)
    e = _level(donor, index, B)[3]
    return float(e) if np.ndim(e) == 0 else e


# -- direct diagonalization ---------------------------------------------------

def spin_matrices(s: float):
    """(Sx, Sy, Sz) for spin ``s`` in the |s, ms> basis, ms descending."""
    n = int(round(2 * s + 1))
    ms = s - np.arange(n)
    sp = np.zeros((n, n))
    for k in range(1, n):
        sp[k - 1, k] = math.sqrt(s * (s + 1) - ms[k] * (ms[k] + 1))
    sx = (sp + sp.T) / 2
    sy = (sp - sp.T) / 2j
    return sx.astype(complex), sy, np.diag(ms).astype(complex)


def donor_hamiltonian(donor: DonorParams, B: float) -> np.ndarray:
    """Full Hamiltonian in the |mS> (x) |mI> product basis."""
    S = spin_matrices(0.5)
    I = spin_matrices(donor.host_spin)
    w0 = donor.electron_gyromag * B
    nI = I[0].shape[0]
    H = w0 * np.kron(S[2], np.eye(nI)) - donor.delta * w0 * np.kron(np.eye(2), I[2])
    for a in range(3):
        H = H + donor.hyperfine_A * np.kron(S[a], I[a])
    return H


def central_eigenbasis(donor: DonorParams, B: float):
    """Diagonalize the donor Hamiltonian and order eigenpairs by level index.

    Returns (energies, vectors, P) with ``vectors[:, i-1]`` the level-i state.
    """
    _check_field(B)
    H = donor_hamiltonian(donor, B)
    S = spin_matrices(0.5)
    I = spin_matrices(donor.host_spin)
    nI = I[0].shape[0]
    Mz = np.kron(S[2], np.eye(nI)) + np.kron(np.eye(2), I[2])
    Sz = np.kron(S[2], np.eye(nI))
    # Mz commutes with H; the shift lifts accidental degeneracies between m-sectors
    shift = 1e-3 * math.sqrt(2) * donor.hyperfine_A
    _, vecs = np.linalg.eigh(H + shift * Mz)
    energies = np.real(np.einsum("ji,jk,ki->i", vecs.conj(), H, vecs))
    ms = np.real(np.einsum("ji,jk,ki->i", vecs.conj(), Mz, vecs))
    labels = level_labels(donor)
    order = np.empty(len(labels), dtype=int)
    for m in sorted({lab[0] for lab in labels}):
        cols = [c for c in range(len(ms)) if abs(ms[c] - m) < 1e-6]
        cols.sort(key=lambda c: energies[c])
        idx = [i for i, lab in enumerate(labels) if abs(lab[0] - m) < 1e-9]
        idx.sort(key=lambda i: labels[i][1])  # branch -1 then +1
        if len(cols) != len(idx):
            raise RuntimeError("m-sector bookkeeping failed")
        for i, c in zip(idx, cols):
            order[i] = c
    vecs = vecs[:, order]
    energies = energies[order]
    P = np.real(np.einsum("ji,jk,ki->i", vecs.conj(), Sz, vecs))
    return energies, vecs, P


# -- transitions, OWPs, clock transitions --------------------------------------

def transition_frequency(donor: DonorParams, B, transition: Transition):
    """Angular transition frequency E_upper - E_lower."""
    if transition.upper == transition.lower:
        raise ValueError("transition needs two distinct levels")
    return level_energy(donor, B, transition.upper) - level_energy(donor, B, transition.lower)


def polarization_difference(donor: DonorParams, B, transition: Transition):
    return polarization(donor, B, transition.upper) - polarization(donor, B, transition.lower)


def _bracketed_root(fun, lo, hi, what):
    flo, fhi = fun(lo), fun(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoSignChange(f"{what} has no sign change in [{lo}, {hi}] T")
    return brentq(fun, lo, hi, xtol=OWP_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)


def find_owp(donor: DonorParams, transition: Transition, B_range=(0.0, 0.3)) -> float:
    """Field where P_upper = P_lower inside ``B_range``."""
    lo, hi = B_range
    _check_field(lo)
    return _bracketed_root(
        lambda B: polarization_difference(donor, B, transition), lo, hi, "P_u - P_l"
    )


def df_dB(donor: DonorParams, B: float, transition: Transition, step: float = DERIVATIVE_STEP):
    """Central-difference derivative of the angular transition frequency."""
    lo = max(B - step, 0.0)
    hi = B + step
    return (transition_frequency(donor, hi, transition)
            - transition_frequency(donor, lo, transition)) / (hi - lo)


def find_clock_transition(donor: DonorParams, transition: Transition, B_range=(0.0, 0.3)) -> float:
    """Field where df/dB = 0 inside ``B_range``."""
    lo, hi = B_range
    _check_field(lo)
    return _bracketed_root(lambda B: df_dB(donor, B, transition), lo, hi, "df/dB")


def clock_identity_residual(donor: DonorParams, B: float, transition: Transition) -> float:
    """P_u - P_l - delta*dm/(1+delta); vanishes where df/dB = 0.

    With dm = m_upper - m_lower this follows from dE_i/dB = gamma_e[(1+delta) P_i - delta m_i].
    """
    d = donor.delta
    return float(polarization_difference(donor, B, transition) - d * transition.delta_m / (1 + d))
