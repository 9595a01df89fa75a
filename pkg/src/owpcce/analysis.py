"""Reported quantities derived from coherence curves."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .central import DonorParams, Transition, polarization

INV_E = math.exp(-1.0)
FIT_FLOOR = 0.05
EXPONENT_BOUNDS = (1.0, 4.0)
OWP_TOL = 1e-12


@dataclass
class CoherenceCurve:
    timepoints: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.timepoints = np.asarray(self.timepoints, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.timepoints.shape != self.values.shape:
            raise ValueError("timepoints and values must have the same shape")
        if np.any(np.diff(self.timepoints) <= 0):
            raise ValueError("timepoints must be strictly increasing")


@dataclass
class T2Report:
    t2_1e: float | None
    fit_t2: float | None
    fit_exponent: float | None
    fit_residual: float | None
    fit_error: str | None = None

    def as_dict(self) -> dict:
        return {
            "t2_1e": self.t2_1e,
            "fit_t2": self.fit_t2,
            "fit_exponent": self.fit_exponent,
            "fit_residual": self.fit_residual,
            "fit_error": self.fit_error,
        }


def first_crossing(t, y, level: float = INV_E) -> float | None:
    """Linear-interpolated first downward crossing of ``level``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    below = np.nonzero(y <= level)[0]
    if len(below) == 0:
        return None
    i = below[0]
    if i == 0:
        return float(t[0])
    t0, t1, y0, y1 = t[i - 1], t[i], y[i - 1], y[i]
    return float(t0 + (level - y0) * (t1 - t0) / (y1 - y0))


def stretched_exponential(t, T2, n):
    return np.exp(-np.power(np.abs(t) / T2, n))


def fit_stretched(t, y, floor: float = FIT_FLOOR):
    """Least-squares fit of exp[-(t/T2)^n], n in [1, 4], to points above ``floor``.

    Returns (T2, n, rms residual).  Raises RuntimeError if there is nothing to fit.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (y > floor) & (t > 0)
    if keep.sum() < 3 or np.all(y[keep] > 0.999):
        raise RuntimeError("not enough decay above the fit floor")
    tk, yk = t[keep], y[keep]
    guess_T = first_crossing(t, y) or tk[np.argmin(yk)] / max(math.sqrt(-math.log(max(yk.min(), 1e-12))), 1e-3)
    best = None
    for n0 in (1.0, 2.0, 3.0):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OptimizeWarning)
                p, _ = curve_fit(stretched_exponential, tk, yk, p0=(guess_T, n0),
                                 bounds=([tk[0] * 1e-6, EXPONENT_BOUNDS[0]], [tk[-1] * 1e6, EXPONENT_BOUNDS[1]]),
                                 maxfev=20000, xtol=1e-14, ftol=1e-14, gtol=1e-14)
        except (RuntimeError, ValueError):
            continue
        res = float(np.sqrt(np.mean((stretched_exponential(tk, *p) - yk) ** 2)))
        if best is None or res < best[2]:
            best = (float(p[0]), float(p[1]), res)
    if best is None:
        raise RuntimeError("stretched-exponential fit did not converge")
    return best


def extract_t2(curve: CoherenceCurve, floor: float = FIT_FLOOR) -> T2Report:
    """1/e time plus a stretched-exponential fit.  ``t2_1e`` is None for a plateau."""
    t2 = first_crossing(curve.timepoints, curve.values)
    try:
        T, n, res = fit_stretched(curve.timepoints, curve.values, floor)
        return T2Report(t2, T, n, res)
    except RuntimeError as exc:
        return T2Report(t2, None, None, None, str(exc))


def envelope_factor(donor: DonorParams, transition: Transition, B) -> np.ndarray | float:
    """(|P_u| + |P_l|) / |P_u - P_l|; infinite at an OWP.

    P values are O(1), so |P_u - P_l| below ``OWP_TOL`` is round-off and is
    treated as the divergence itself.
    """
    Pu = polarization(donor, B, transition.upper)
    Pl = polarization(donor, B, transition.lower)
    num = np.abs(Pu) + np.abs(Pl)
    den = np.abs(np.asarray(Pu) - np.asarray(Pl))
    with np.errstate(divide="ignore"):
        out = np.where(den > OWP_TOL, num / np.where(den > OWP_TOL, den, 1.0), np.inf)
    return float(out) if np.ndim(out) == 0 else out


def analytic_t2_envelope(donor: DonorParams, transition: Transition, B, C_bar: float):
    """C_bar (|P_u| + |P_l|) / |P_u - P_l|.  Returns inf (with a warning) at an OWP."""
    f = envelope_factor(donor, transition, B)
    if np.any(np.isinf(f)):
        warnings.warn("analytic T2 envelope diverges at the OWP (P_u = P_l)", RuntimeWarning, stacklevel=2)
    return C_bar * f


def calibrate_c_bar(donor: DonorParams, transition: Transition, B_ref: float, t2_ref: float) -> float:
    """Prefactor matching the envelope to a computed T2 at a reference field."""
    return t2_ref / envelope_factor(donor, transition, B_ref)


def _quadrature_spacing(B: np.ndarray) -> np.ndarray:
    """Composite Simpson weights on a uniform odd-length grid, trapezoid otherwise."""
    gaps = np.diff(B)
    n = len(B)
    if n >= 3 and n % 2 == 1 and np.allclose(gaps, gaps[0], rtol=1e-9, atol=0):
        w = np.ones(n)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w * gaps[0] / 3.0
    dB = np.zeros(n)
    dB[:-1] += gaps / 2
    dB[1:] += gaps / 2
    return dB


def broadening_weights(fields, centre: float, width: float) -> np.ndarray:
    """Normalized quadrature weights for a Gaussian field distribution.

    Gaussian density times Simpson (uniform odd grid) or trapezoid spacing,
    renormalized to sum to 1 so the truncated tails do not bias the mean.
    """
    B = np.asarray(fields, dtype=float)
    if width == 0:
        w = np.zeros(len(B))
        w[np.argmin(np.abs(B - centre))] = 1.0
        return w
    if len(B) < 2:
        raise ValueError("need at least two field points")
    if np.any(np.diff(B) <= 0):
        raise ValueError("fields must be strictly increasing")
    w = np.exp(-((B - centre) ** 2) / (2 * width**2)) * _quadrature_spacing(B)
    return w / w.sum()


def broadening_grid(centre: float, width: float, n: int = 25, span: float = 4.0) -> np.ndarray:
    return centre + np.linspace(-span * width, span * width, n)


def convolve_broadening(curves, fields, centre: float, width: float, min_span: float = 3.0) -> CoherenceCurve:
    """Gaussian average over a family of curves indexed by ``fields``."""
    B = np.asarray(fields, dtype=float)
    order = np.argsort(B)
    B = B[order]
    curves = [curves[i] for i in order]
    if width > 0 and (B[0] > centre - min_span * width or B[-1] < centre + min_span * width):
        raise ValueError(f"field grid must cover +-{min_span} widths around the centre")
    t = curves[0].timepoints
    for c in curves:
        if c.timepoints.shape != t.shape or not np.allclose(c.timepoints, t, rtol=1e-12, atol=0):
            raise ValueError("curves must share one time grid")
    w = broadening_weights(B, centre, width)
    vals = np.einsum("i,ij->j", w, np.stack([c.values for c in curves]))
    meta = dict(curves[0].metadata)
    meta.update({"B": centre, "broadening_width": width})
    return CoherenceCurve(t, vals, meta)


def ensemble_average(curves) -> CoherenceCurve:
    """Pointwise mean and standard deviation over realizations."""
    curves = list(curves)
    if len(curves) < 2:
        raise ValueError("ensemble average needs at least two curves")
    t = curves[0].timepoints
    for c in curves[1:]:
        if c.timepoints.shape != t.shape or not np.allclose(c.timepoints, t, rtol=1e-12, atol=0):
            raise ValueError("curves must share one time grid")
    v = np.stack([c.values for c in curves])
    meta = dict(curves[0].metadata)
    meta["seeds"] = [c.metadata.get("seed") for c in curves]
    meta.pop("seed", None)
    return CoherenceCurve(t, v.mean(axis=0), meta, sigma=v.std(axis=0))
