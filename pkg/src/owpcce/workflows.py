"""Decays, sweeps and ensembles built from a RunConfig.

A :class:`Workspace` memoizes bath realizations, neighbor graphs and cluster
lists per seed, since these do not depend on the field or the sequence.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import cce
from .analysis import broadening_grid, convolve_broadening, ensemble_average, first_crossing
from .bath import BathRealization, generate_bath
from .clusters import build_neighbor_graph, enumerate_clusters
from .config import RunConfig

log = logging.getLogger(__name__)


@dataclass
class DecayRun:
    result: cce.CCEResult
    t_max: float
    seed: int
    bath_hash: str


@dataclass
class Workspace:
    config: RunConfig
    _baths: dict = field(default_factory=dict)

    def bath(self, seed: int) -> tuple[BathRealization, object, dict]:
        if seed not in self._baths:
            bath = generate_bath(self.config.lattice(seed))
            graph = build_neighbor_graph(bath.positions, self.config.cutoff)
            self._baths[seed] = (bath, graph, enumerate_clusters(graph, self.config.cce_order))
        return self._baths[seed]

    def system(self, B: float, seed: int) -> cce.CCESystem:
        bath, graph, _ = self.bath(seed)
        c = self.config
        return cce.CCESystem(bath, c.donor, B, c.transition, mode=c.mode, secular=c.secular,
                             initial_state=c.initial_state, graph=graph, couplings=c.couplings)

    def decay(self, B: float, N: int, seed: int, t_max: float | None = None,
              k_max: int | None = None) -> DecayRun:
        """One CCE decay; doubles t_max up to ``auto_extend`` times until the top order crosses 1/e."""
        c = self.config
        k_max = k_max or c.cce_order
        bath, graph, clusters = self.bath(seed)
        system = self.system(B, seed)
        t_max = t_max or c.t_max
        for attempt in range(c.auto_extend + 1):
            t = c.time_grid(t_max)
            res = cce.run_cce(system, N, t, k_max=k_max, clusters=clusters, workers=c.workers,
                              threshold=c.convergence_threshold, eps_div=c.eps_div)
            crossing = first_crossing(t, np.abs(res.orders[k_max]))
            if crossing is not None and crossing <= 0.75 * t_max or attempt == c.auto_extend:
                break
            t_max *= 2
        res.metadata["bath_hash"] = bath.content_hash()
        return DecayRun(res, t_max, seed, bath.content_hash())

    def ensemble(self, B: float, N: int, t_max: float | None = None) -> tuple[dict, list[DecayRun]]:
        """Per-order curves averaged over the configured seeds (common time grid)."""
        runs = []
        for s in self.config.seeds:
            run = self.decay(B, N, s, t_max=t_max)
            runs.append(run)
            t_max = run.t_max  # later seeds reuse the extended grid
        if len({r.t_max for r in runs}) > 1:
            runs = [self.decay(B, N, s, t_max=t_max) if r.t_max != t_max else r
                    for s, r in zip(self.config.seeds, runs)]
        curves = {}
        for k in runs[0].result.orders:
            per_seed = [r.result.curve(k) for r in runs]
            curves[f"cce{k}"] = ensemble_average(per_seed) if len(per_seed) > 1 else per_seed[0]
        return curves, runs

    def broadened(self, B: float, N: int, t_max: float) -> dict:
        """Gaussian field average of every order's curve around ``B``."""
        c = self.config
        grid = broadening_grid(B, c.broadening_width, c.broadening_points)
        fam = [self.ensemble(b, N, t_max=t_max)[0] for b in grid]
        return {lab: convolve_broadening([f[lab] for f in fam], grid, B, c.broadening_width)
                for lab in fam[0]}

