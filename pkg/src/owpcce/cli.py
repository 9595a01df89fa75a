"""Command-line entry point: ``owpcce {spectrum,owp-scan,decay,sweep}``.

Exit codes: 0 success, 2 configuration error, 3 physics failure (no root in
the requested field range), 4 numerical failure (divergence budget exceeded).
All computation finishes before any file is written.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import extract_t2
from .central import (NoSignChange, build_spectrum, clock_identity_residual, df_dB, find_clock_transition,
                      find_owp, polarization_difference, transition_frequency)
from .config import ConfigError, RunConfig, load_config
from .output import curve_columns, write_table
from .workflows import Workspace

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_NUMERICAL = 0, 2, 3, 4
TWO_PI = 2 * math.pi
log = logging.getLogger("owpcce")


class DivergenceBudgetExceeded(RuntimeError):
    pass


def _check_budget(cfg: RunConfig, runs) -> dict:
    events = {}
    for r in runs:
        for k, n in r.result.divergences.items():
            events[k] = events.get(k, 0) + n
    if sum(events.values()) > cfg.divergence_budget:
        raise DivergenceBudgetExceeded(f"{sum(events.values())} clamped timepoints exceed the budget "
                                       f"of {cfg.divergence_budget}")
    return events


def cmd_spectrum(cfg: RunConfig):
    rows = []
    for B in cfg.field_grid():
        for lv in build_spectrum(cfg.donor, B):
            rows.append([B, lv.index, lv.m, lv.branch, lv.beta, lv.energy / TWO_PI, lv.P])
    cols = ["B", "index", "m", "branch", "beta", "E_hz", "P"]
    return [("spectrum", cols, rows, None, {"levels_per_field": cfg.donor.n_levels})]


def cmd_owp_scan(cfg: RunConfig):
    tr = cfg.transition
    owp = find_owp(cfg.donor, tr, cfg.owp_range)
    clock = find_clock_transition(cfg.donor, tr, cfg.owp_range)
    summary = {
        "owp_field": owp, "clock_field": clock, "offset": clock - owp,
        "clock_identity_residual": clock_identity_residual(cfg.donor, clock, tr),
    }
    lo, hi = cfg.owp_range
    rows = []
    grid = cfg.field_grid() if (cfg.fields or cfg.field_range) else np.linspace(max(lo, 1e-4), hi, 301)
    for B in grid:
        rows.append([float(B), float(transition_frequency(cfg.donor, B, tr)) / TWO_PI,
                     float(df_dB(cfg.donor, B, tr)) / TWO_PI, float(polarization_difference(cfg.donor, B, tr))])
    return [("owp_scan", ["B", "f_hz", "df_dB_hz_per_T", "dP"], rows, None, summary)]


def _decay_summary(curves, runs):
    top = runs[0].result
    return {
        "t2": {lab: extract_t2(c).as_dict() for lab, c in curves.items()},
        "converged": {f"cce{k}": v for k, v in top.converged.items()},
        "gaps": {f"cce{k}-cce{k + 1}": top.gap(k, k + 1) for k in list(top.orders)[:-1]},
        "divergence_events": {str(r.seed): {f"cce{k}": n for k, n in r.result.divergences.items()} for r in runs},
        "cluster_counts": {str(k): n for k, n in top.cluster_counts.items()},
        "seeds": [r.seed for r in runs],
        "t_max": runs[0].t_max,
    }


def cmd_decay(cfg: RunConfig):
    ws = Workspace(cfg)
    kind, N = cfg.sequence
    curves, runs = ws.ensemble(cfg.field, N)
    events = _check_budget(cfg, runs)
    summary = _decay_summary(curves, runs)
    summary["divergence_total"] = events
    for lab, ok in summary["converged"].items():
        if not ok:
            log.warning("%s is not converged against the next order (threshold %g)", lab, cfg.convergence_threshold)
    out = []
    cols, rows = curve_columns(curves)
    out.append(("decay", cols, rows, runs[0].bath_hash, summary))
    if cfg.broadening:
        bc = ws.broadened(cfg.field, N, runs[0].t_max)
        cols, rows = curve_columns(bc)
        out.append(("decay_broadened", cols, rows, runs[0].bath_hash,
                    {"t2": {lab: extract_t2(c).as_dict() for lab, c in bc.items()},
                     "width": cfg.broadening_width}))
    return out


def cmd_sweep(cfg: RunConfig):
    """T2 against pulse number, field, or cluster cutoff (a convergence scan)."""
    kind, N0 = cfg.sequence
    top = f"cce{cfg.cce_order}"
    if cfg.pulse_numbers:
        xs, label = list(cfg.pulse_numbers), "N"
        points = [(cfg, cfg.field, N) for N in xs]
    elif cfg.fields or cfg.field_range:
        xs, label = cfg.field_grid(), "B"
        points = [(cfg, B, N0) for B in xs]
    elif cfg.cutoffs:
        xs, label = list(cfg.cutoffs), "cutoff"
        points = [(dataclasses.replace(cfg, cutoff=c), cfg.field, N0) for c in xs]
    else:
        raise ConfigError("sweep: give pulses, fields, field_range or cutoffs")
    rows, all_runs, spaces = [], [], {}
    for x, (c, B, N) in zip(xs, points):
        ws = spaces.setdefault(c.cutoff, Workspace(c))
        curves, runs = ws.ensemble(B, N)
        all_runs += runs
        rep = extract_t2(curves[top])
        res = runs[0].result
        ks = sorted(res.orders)
        row = [x, rep.t2_1e, rep.fit_t2, rep.fit_exponent, runs[0].t_max,
               bool(all(res.converged.values())), res.gap(ks[-2], ks[-1]) if len(ks) > 1 else 0.0]
        if cfg.broadening and label == "B":
            rb = extract_t2(ws.broadened(B, N, runs[0].t_max)[top])
            row += [rb.t2_1e, rb.fit_t2]
        rows.append(row)
    events = _check_budget(cfg, all_runs)
    cols = [label, "t2_1e", "fit_t2", "fit_exponent", "t_max", "converged", "top_gap"]
    if cfg.broadening and label == "B":
        cols += ["t2_1e_broadened", "fit_t2_broadened"]
    bath_hash = next(iter(spaces.values())).bath(cfg.seed)[0].content_hash()
    return [(f"sweep_{label}", cols, rows, bath_hash, {"order": top, "divergence_total": events})]


COMMANDS = {"spectrum": cmd_spectrum, "owp-scan": cmd_owp_scan, "decay": cmd_decay, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="owpcce", description="Donor-qubit decoherence near optimal working points.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="key = value run configuration")
    p.add_argument("--seed", type=int, help="override the bath seed")
    p.add_argument("--workers", type=int, help="worker processes for cluster evaluation")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    if args.format is not None:
        changes["format"] = args.format
    return dataclasses.replace(cfg, **changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        outputs = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoSignChange as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except DivergenceBudgetExceeded as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    conf = cfg.as_dict()
    for name, cols, rows, bath_hash, summary in outputs:
        path = write_table(Path(cfg.output_dir) / name, cols, rows, config=conf, bath_hash=bath_hash,
                           summary=summary, fmt=cfg.format)
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
