"""Random 29Si baths on the diamond-cubic silicon lattice.

Positions are stored in the crystal frame (Angstrom).  Couplings are angular
frequencies (rad/s).  The contact hyperfine J of each bath site follows the
six-valley Kohn-Luttinger donor envelope.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import CONSTANTS, HBAR, MU0_OVER_4PI, SI29_ABUNDANCE, SI29_GYROMAG, SI_LATTICE_CONSTANT

ANGSTROM = 1e-10
_E_GYROMAG_FREE = 2 * math.pi * CONSTANTS["bohr_magneton_over_h"] * 2.0023193


@dataclass(frozen=True)
class WavefunctionParams:
    """Kohn-Luttinger envelope; radii are scaled by sqrt(E_ref / E_ion)."""

    ionization_energy: float = 0.069  # eV
    radius_transverse: float = CONSTANTS["kl_radius_transverse"]
    radius_longitudinal: float = CONSTANTS["kl_radius_longitudinal"]
    reference_energy: float = CONSTANTS["kl_reference_energy"]
    k0: float = CONSTANTS["kl_valley_k0"]  # units of 2 pi / a0
    eta: float = CONSTANTS["kl_bloch_density"]
    valley_interference: bool = True
    electron_gyromag: float = _E_GYROMAG_FREE

    @property
    def scale(self) -> float:
        return math.sqrt(self.reference_energy / self.ionization_energy)


@dataclass(frozen=True)
class LatticeSpec:
    lattice_constant: float = SI_LATTICE_CONSTANT  # Angstrom
    superlattice_side: float = 160.0  # Angstrom
    abundance: float = SI29_ABUNDANCE
    field_direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    seed: int = 0
    gyromag: float = SI29_GYROMAG
    wavefunction: WavefunctionParams = field(default_factory=WavefunctionParams)

    def __post_init__(self):
        if not 0.0 <= self.abundance <= 1.0:
            raise ValueError("abundance must lie in [0, 1]")
        if not self.superlattice_side > 0:
            raise ValueError("superlattice_side must be positive")
        if not self.lattice_constant > 0:
            raise ValueError("lattice_constant must be positive")
        n = np.linalg.norm(self.field_direction)
        if not n > 0:
            raise ValueError("field_direction must be non-zero")
        object.__setattr__(self, "field_direction", tuple(float(x) / n for x in self.field_direction))


@dataclass
class BathRealization:
    positions: np.ndarray  # (n, 3) Angstrom, crystal frame
    J: np.ndarray  # (n,) rad/s
    orientations: np.ndarray  # (n,) +-0.5
    site_index: np.ndarray  # (n,) int, index into the enumerated lattice
    spec: LatticeSpec

    def __len__(self):
        return len(self.J)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.positions, self.J, self.orientations):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        return h.hexdigest()[:16]

    def subset(self, idx) -> "BathRealization":
        idx = np.asarray(idx, dtype=int)
        return BathRealization(self.positions[idx], self.J[idx], self.orientations[idx],
                               self.site_index[idx], self.spec)

    def field_frame_positions(self) -> np.ndarray:
        """Positions rotated so the field direction is +z."""
        return self.positions @ field_frame_rotation(self.spec.field_direction).T


def field_frame_rotation(direction) -> np.ndarray:
    """Rotation matrix ``R`` with ``R @ direction = z``."""
    b = np.asarray(direction, dtype=float)
    b = b / np.linalg.norm(b)
    z = np.array([0.0, 0.0, 1.0])
    v = np.cross(b, z)
    c = float(b @ z)
    if np.linalg.norm(v) < 1e-14:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1 + c)


def diamond_sites(side: float, lattice_constant: float) -> np.ndarray:
    """Integer coordinates (units of a0/4) of diamond sites in the cube
    ``-side/2 <= x < side/2`` around a lattice site at the origin.

    The half-open box holds exactly 8 sites per conventional cell when
    ``side`` is a multiple of ``a0``.
    """
    h = 2.0 * side / lattice_constant  # half-side in quarter units
    lo = math.ceil(-h - 1e-9)
    hi = math.ceil(h - 1e-9)  # exclusive
    r = np.arange(lo, hi)
    g = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    even = np.all(g % 2 == 0, axis=1) & (g.sum(axis=1) % 4 == 0)
    odd = np.all(g % 2 == 1, axis=1) & (g.sum(axis=1) % 4 == 3)
    return g[even | odd]


def generate_bath(spec: LatticeSpec, donor_site=(0.0, 0.0, 0.0)) -> BathRealization:
    """Occupy each lattice site with a bath spin with probability ``abundance``.

    Occupation and initial orientation use independent streams spawned from
    ``spec.seed``, so the result is bit-reproducible.
    """
    sites = diamond_sites(spec.superlattice_side, spec.lattice_constant)
    sites = sites[np.any(sites != 0, axis=1)]  # donor site
    occ_ss, orient_ss = np.random.SeedSequence(spec.seed).spawn(2)
    occupied = np.random.default_rng(occ_ss).random(len(sites)) < spec.abundance
    idx = np.nonzero(occupied)[0]
    pos = sites[idx] * (spec.lattice_constant / 4.0) + np.asarray(donor_site, dtype=float)
    orient = np.where(np.random.default_rng(orient_ss).random(len(idx)) < 0.5, 0.5, -0.5)
    J = hyperfine_coupling(spec, pos - np.asarray(donor_site, dtype=float))
    return BathRealization(pos, J, orient, idx, spec)


def kl_density(spec: LatticeSpec, position) -> np.ndarray:
    """|Psi(r)|^2 in m^-3 at lattice sites ``position`` (Angstrom, donor at origin)."""
    wf = spec.wavefunction
    r = np.atleast_2d(np.asarray(position, dtype=float))
    na = wf.scale * wf.radius_transverse
    nb = wf.scale * wf.radius_longitudinal
    norm = 1.0 / math.sqrt(math.pi * na * na * nb)
    k0 = wf.k0 * 2 * math.pi / spec.lattice_constant
    total = np.zeros(len(r))
    sq = r * r
    for axis in range(3):
        others = sq.sum(axis=1) - sq[:, axis]
        F = norm * np.exp(-np.sqrt(others / na**2 + sq[:, axis] / nb**2))
        phase = np.cos(k0 * r[:, axis]) if wf.valley_interference else 1.0
        total += F * phase
    # six valleys with equal weight: Psi = (2/sqrt6) sqrt(eta) sum_axes F cos(k0 x)
    dens = (2.0 / 3.0) * wf.eta * total**2
    return dens / ANGSTROM**3


def hyperfine_coupling(spec: LatticeSpec, position) -> np.ndarray | float:
    """Fermi-contact coupling J = (2 mu0 / 3) hbar gamma_e |gamma_n| |Psi|^2."""
    r = np.atleast_2d(np.asarray(position, dtype=float))
    if np.any(np.linalg.norm(r, axis=1) < 1e-9):
        raise ValueError("hyperfine coupling is undefined at the donor site")
    wf = spec.wavefunction
    J = (8 * math.pi / 3) * MU0_OVER_4PI * HBAR * wf.electron_gyromag * abs(spec.gyromag) * kl_density(spec, r)
    return float(J[0]) if np.ndim(position) == 1 else J


def dipolar_tensor(r_ab, gamma_N: float = SI29_GYROMAG) -> np.ndarray:
    """D_ij = (mu0/4pi) hbar gamma^2 (delta_ij / r^3 - 3 r_i r_j / r^5), rad/s.

    ``r_ab`` in Angstrom; works on a single vector or a stack of shape (..., 3).
    """
    r = np.asarray(r_ab, dtype=float) * ANGSTROM
    d = np.linalg.norm(r, axis=-1)
    if np.any(d == 0):
        raise ValueError("dipolar tensor needs non-zero separation")
    pref = MU0_OVER_4PI * HBAR * gamma_N**2
    d = d[..., None, None]
    return pref * (np.eye(3) / d**3 - 3 * r[..., :, None] * r[..., None, :] / d**5)


def flip_flop_coupling(D, field_direction=(0.0, 0.0, 1.0)) -> np.ndarray | float:
    """Flip-flop strength C12 in the pseudospin convention h = (Delta sz + C12 sx)/4.

    C12 = 4 <up,down| I1.D.I2 |down,up> with quantization along the field,
    which equals D_xx + D_yy in the field frame.
    """
    D = np.asarray(D, dtype=float)
    R = field_frame_rotation(field_direction)
    Df = R @ D @ R.T
    c = Df[..., 0, 0] + Df[..., 1, 1]
    return float(c) if c.ndim == 0 else c


# -- serialization --------------------------------------------------------------

BATH_COLUMNS = ("site_index", "x", "y", "z", "J", "orientation")


def save_bath(bath: BathRealization, path: str | Path, header: dict | None = None) -> None:
    """Write the documented column format: site_index, x, y, z (Angstrom), J (rad/s), orientation."""
    lines = [f"# owpcce bath realization hash={bath.content_hash()}"]
    for k, v in (header or {}).items():
        lines.append(f"# {k} = {v}")
    lines.append(",".join(BATH_COLUMNS))
    for i in range(len(bath)):
        x, y, z = bath.positions[i]
        vals = (float(x), float(y), float(z), float(bath.J[i]), float(bath.orientations[i]))
        lines.append(f"{int(bath.site_index[i])}," + ",".join(repr(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def load_bath(path: str | Path, spec: LatticeSpec | None = None) -> BathRealization:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if not rows or tuple(rows[0].split(",")) != BATH_COLUMNS:
        raise ValueError(f"{path}: not a bath file (expected header {','.join(BATH_COLUMNS)})")
    data = np.array([[float(x) for x in ln.split(",")] for ln in rows[1:]]).reshape(-1, 6)
    return BathRealization(
        positions=data[:, 1:4].copy(),
        J=data[:, 4].copy(),
        orientations=data[:, 5].copy(),
        site_index=data[:, 0].astype(int),
        spec=spec or LatticeSpec(),
    )
