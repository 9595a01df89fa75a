"""Physical constants, loaded once from the versioned ``data/constants.txt``."""
from __future__ import annotations

from types import MappingProxyType

from .kvfile import data_path, read_kv


def _load():
    raw = read_kv(data_path("constants.txt"))
    return MappingProxyType({k: float(v) for k, v in raw.items()})


CONSTANTS = _load()

HBAR = CONSTANTS["hbar"]
MU0_OVER_4PI = CONSTANTS["mu0_over_4pi"]
SI29_GYROMAG = CONSTANTS["si29_gyromag"]
SI_LATTICE_CONSTANT = CONSTANTS["si_lattice_constant"]
SI29_ABUNDANCE = CONSTANTS["si29_abundance"]
CONSTANTS_VERSION = int(CONSTANTS["version"])

GAUSS = 1e-4  # tesla
