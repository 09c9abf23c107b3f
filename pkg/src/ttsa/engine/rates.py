from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientPoints, NonPositiveValue

MIN_POINTS = 5


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through ``(ln n, ln mse)``; ``slope`` is the decay exponent."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple[int, int]
    n_points: int
    super_polynomial: bool = False

    def row(self):
        return [f"{self.slope:.17g}", f"{self.intercept:.17g}", f"{self.r_squared:.17g}",
                self.window[0], self.window[1]]


def _line(lx: np.ndarray, ly: np.ndarray) -> tuple[float, float, float]:
    xm, ym = lx.mean(), ly.mean()
    sxx = np.sum((lx - xm) ** 2)
    slope = float(np.sum((lx - xm) * (ly - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(np.sum((ly - ym) ** 2))
    ss_res = float(np.sum((ly - intercept - slope * lx) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return slope, intercept, r2


def last_decades(checkpoints, decades: float = 1.0) -> tuple[int, int]:
    """Window covering the final ``decades`` of the checkpoint range."""
    ck = np.asarray(checkpoints)
    hi = int(ck.max())
    return int(np.ceil(hi / 10.0**decades)), hi


def fit_rate(checkpoints, mse_values, window: tuple[int, int] | None = None) -> RateFit:
    """Fit ``ln mse = intercept + slope * ln n`` over checkpoints inside ``window``.

    The default window is the last decade of checkpoints. A fit is flagged
    ``super_polynomial`` when it is steeper than ``-2`` and the second half of
    the window decays faster than the first, the log-log signature of
    geometric or stretched-exponential decay.
    """
    n = np.asarray(checkpoints, dtype=float)
    v = np.asarray(mse_values, dtype=float)
    if n.shape != v.shape:
        raise ValueError("checkpoints and values differ in length")
    lo, hi = last_decades(n) if window is None else window
    sel = (n >= lo) & (n <= hi)
    if sel.sum() < MIN_POINTS:
        raise InsufficientPoints(f"{int(sel.sum())} points in window [{lo}, {hi}], need {MIN_POINTS}")
    if not np.all(v[sel] > 0) or not np.all(np.isfinite(v[sel])):
        raise NonPositiveValue("rate fit needs strictly positive finite values")
    lx, ly = np.log(n[sel]), np.log(v[sel])
    slope, intercept, r2 = _line(lx, ly)
    flag = False
    if slope <= -2.0 and lx.size >= 2 * 3:
        half = lx.size // 2
        first = _line(lx[:half + 1], ly[:half + 1])[0]
        second = _line(lx[half:], ly[half:])[0]
        flag = second < 1.1 * first
    return RateFit(slope, intercept, r2, (int(lo), int(hi)), int(sel.sum()), flag)
