"""Run configuration from a flat ``key = value`` file.

Every key has a default; an empty file reproduces the reference setup
(bismuth, |14> -> |7>, B along [100], 160 A superlattice, natural 29Si
abundance, third-shell cluster cutoff).  Donor parameters come from
``donor = NAME`` (a preset or a path); a donor file may also be spliced in
with ``include = bismuth.donor``, in which case its keys define the donor.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import cce
from .bath import LatticeSpec, WavefunctionParams
from .central import DonorParams, Transition, donor_from_mapping, load_donor
from .clusters import DEFAULT_CUTOFF, K_MAX_LIMIT
from .constants import GAUSS, SI29_ABUNDANCE, SI_LATTICE_CONSTANT
from .kvfile import KVError, parse_text, read_kv
from .pulses import parse_sequence


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.replace(",", " ").split()]


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.replace(",", " ").split()]


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


# key -> (attribute, parser); the attribute names are the RunConfig fields
_SCALARS = {
    "field": ("field", float),
    "field_gauss": ("field", lambda s: float(s) * GAUSS),
    "t_max": ("t_max", float),
    "gridpoints": ("gridpoints", int),
    "auto_extend": ("auto_extend", int),
    "lattice_side": ("lattice_side", float),
    "lattice_constant": ("lattice_constant", float),
    "abundance": ("abundance", float),
    "valley_interference": ("valley_interference", _bool),
    "cce_order": ("cce_order", int),
    "cutoff": ("cutoff", float),
    "mode": ("mode", str),
    "secular": ("secular", _bool),
    "couplings": ("couplings", str),
    "initial_state": ("initial_state", str),
    "convergence_threshold": ("convergence_threshold", float),
    "eps_div": ("eps_div", float),
    "divergence_budget": ("divergence_budget", int),
    "broadening": ("broadening", _bool),
    "broadening_width": ("broadening_width", float),
    "broadening_points": ("broadening_points", int),
    "output_dir": ("output_dir", str),
    "format": ("format", str),
    "workers": ("workers", int),
}
_DONOR_KEYS = {"label", "host_spin", "hyperfine_A_hz", "electron_gyromag", "host_nuclear_gyromag",
               "ionization_energy_ev"}


@dataclass
class RunConfig:
    donor: DonorParams = field(default_factory=lambda: load_donor("bismuth"))
    donor_source: str = "bismuth"
    transition_levels: tuple[int, int] | None = None  # default (14, 7) for 20-level donors
    field: float = 0.32  # T
    field_range: tuple[float, float, int] | None = None  # (lo, hi, count), T
    fields: tuple[float, ...] | None = None
    owp_range: tuple[float, float] = (0.0, 0.3)
    sequence: tuple[str, int] = ("CPMG", 1)
    pulse_numbers: tuple[int, ...] | None = None
    t_max: float = 3e-3  # s
    gridpoints: int = 64
    auto_extend: int = 0  # doublings of t_max allowed until the top order crosses 1/e
    lattice_side: float = 160.0
    lattice_constant: float = SI_LATTICE_CONSTANT
    abundance: float = SI29_ABUNDANCE
    field_direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    valley_interference: bool = True
    seeds: tuple[int, ...] = (1,)
    cce_order: int = 3
    cutoff: float = DEFAULT_CUTOFF
    cutoffs: tuple[float, ...] | None = None  # sweep axis for convergence scans
    mode: str = "pure-dephasing"
    secular: bool = False
    couplings: str = "graph"
    initial_state: str = "sampled"
    convergence_threshold: float = cce.DEFAULT_THRESHOLD
    eps_div: float = cce.EPS_DIV
    divergence_budget: int = 1000
    broadening: bool = False
    broadening_width: float = 2 * GAUSS
    broadening_points: int = 25
    output_dir: str = "out"
    format: str = "csv"
    workers: int = 1

    def __post_init__(self):
        self.validate()

    # -- derived ----------------------------------------------------------------
    @property
    def transition(self) -> Transition:
        if self.transition_levels is None:
            raise ConfigError(f"transition: no default for a {self.donor.n_levels}-level donor, set it explicitly")
        return Transition.between(self.donor, *self.transition_levels)

    @property
    def seed(self) -> int:
        return self.seeds[0]

    def lattice(self, seed: int | None = None) -> LatticeSpec:
        return LatticeSpec(
            lattice_constant=self.lattice_constant,
            superlattice_side=self.lattice_side,
            abundance=self.abundance,
            field_direction=self.field_direction,
            seed=self.seed if seed is None else seed,
            wavefunction=WavefunctionParams(ionization_energy=self.donor.ionization_energy,
                                            valley_interference=self.valley_interference),
        )

    def field_grid(self) -> list[float]:
        if self.fields is not None:
            return list(self.fields)
        if self.field_range is not None:
            lo, hi, n = self.field_range
            return [lo + (hi - lo) * i / max(n - 1, 1) for i in range(n)]
        return [self.field]

    def time_grid(self, t_max: float | None = None):
        import numpy as np

        return np.linspace(0.0, self.t_max if t_max is None else t_max, self.gridpoints)

    # -- checks -------------------------------------------------------------------
    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"{key}: {msg}")

        n = self.donor.n_levels
        if self.transition_levels is None and n == 20:
            self.transition_levels = (14, 7)
        if self.transition_levels is not None:
            u, l = self.transition_levels
            need(1 <= u <= n and 1 <= l <= n and u != l, "transition", f"levels must be distinct and in 1..{n}")
        for B in self.field_grid():
            need(B > 0, "field", "fields must be positive (tesla)")
        need(self.owp_range[1] > self.owp_range[0] >= 0, "owp_range", "need 0 <= lo < hi")
        need(self.t_max > 0, "t_max", "must be positive")
        need(self.gridpoints >= 3, "gridpoints", "need at least 3 points")
        need(self.auto_extend >= 0, "auto_extend", "must be >= 0")
        need(self.lattice_side > 0 and self.lattice_constant > 0, "lattice_side", "must be positive")
        need(0 < self.abundance <= 1, "abundance", "must lie in (0, 1]")
        need(math.hypot(*self.field_direction) > 0, "field_direction", "must be non-zero")
        need(len(self.seeds) >= 1, "seed", "at least one seed")
        need(2 <= self.cce_order <= K_MAX_LIMIT, "cce_order", f"must lie in [2, {K_MAX_LIMIT}]")
        need(self.cutoff > 0 and all(c > 0 for c in self.cutoffs or ()), "cutoff", "must be positive")
        need(self.mode in cce.MODES, "mode", f"one of {cce.MODES}")
        need(self.couplings in cce.COUPLINGS, "couplings", f"one of {cce.COUPLINGS}")
        need(self.initial_state in cce.INITIAL_STATES, "initial_state", f"one of {cce.INITIAL_STATES}")
        need(self.convergence_threshold > 0, "convergence_threshold", "must be positive")
        need(self.eps_div > 0, "eps_div", "must be positive")
        need(self.divergence_budget >= 0, "divergence_budget", "must be >= 0")
        need(self.broadening_width >= 0, "broadening_width", "must be >= 0")
        need(self.broadening_points >= 3, "broadening_points", "need at least 3 points")
        need(self.format in ("csv", "json"), "format", "csv or json")
        need(self.workers >= 1, "workers", "must be >= 1")
        kind, N = self.sequence
        for N_ in self.pulse_numbers or ():
            need(N_ >= 0, "pulses", "pulse numbers must be >= 0")
        need(kind in ("FID", "CPMG"), "sequence", "FID or CPMG")

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["donor"] = dataclasses.asdict(self.donor)
        return json.loads(json.dumps(d, default=list))


def from_mapping(kv: dict[str, str]) -> RunConfig:
    """Build a RunConfig from parsed key-value pairs (all strings)."""
    args: dict = {}
    kv = dict(kv)
    try:
        donor_kv = {k: kv.pop(k) for k in list(kv) if k in _DONOR_KEYS}
        if "donor" in kv:
            src = kv.pop("donor")
            args["donor"] = load_donor(src)
            args["donor_source"] = src
        elif donor_kv:
            args["donor"] = donor_from_mapping(donor_kv, "inline")
            args["donor_source"] = donor_kv.get("label", "inline")
        for key, raw in kv.items():
            if key in _SCALARS:
                attr, parse = _SCALARS[key]
                args[attr] = parse(raw)
            elif key == "transition":
                u, l = _ints(raw)
                args["transition_levels"] = (u, l)
            elif key == "field_range":
                lo, hi, n = _floats(raw)
                args["field_range"] = (lo, hi, int(n))
            elif key == "fields":
                args["fields"] = tuple(_floats(raw))
            elif key == "fields_gauss":
                args["fields"] = tuple(x * GAUSS for x in _floats(raw))
            elif key == "owp_range":
                lo, hi = _floats(raw)
                args["owp_range"] = (lo, hi)
            elif key == "sequence":
                args["sequence"] = parse_sequence(raw)
            elif key == "cutoffs":
                args["cutoffs"] = tuple(_floats(raw))
            elif key == "pulses":
                args["pulse_numbers"] = tuple(_ints(raw))
            elif key == "field_direction":
                x, y, z = _floats(raw)
                args["field_direction"] = (x, y, z)
            elif key in ("seed", "seeds"):
                args["seeds"] = tuple(_ints(raw))
            else:
                raise ConfigError(f"{key}: unknown key")
    except ConfigError:
        raise
    except (ValueError, KVError, KeyError) as exc:
        raise ConfigError(f"{key if 'key' in locals() else 'donor'}: {exc}") from None
    return RunConfig(**args)


def load_config(path: str | Path | None = None, text: str | None = None) -> RunConfig:
    if path is None and text is None:
        return RunConfig()
    try:
        kv = parse_text(text, Path.cwd()) if text is not None else read_kv(path)
    except (KVError, OSError) as exc:
        raise ConfigError(f"config: {exc}") from None
    return from_mapping(kv)
