"""Least-squares rate fits on log-transformed series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonPositiveSeries(ValueError):
    pass


@dataclass
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple
    mode: str
    n_points: int

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r_squared": self.r_squared,
                "window": list(self.window), "mode": self.mode, "n_points": self.n_points}


def fit_rate(xs, ys, window=None, mode="semilog") -> RateFit:
    """OLS of ``log y`` against ``x`` (``semilog``) or ``log x`` (``loglog``).

    Only points with ``window[0] <= x <= window[1]`` enter the fit and r^2.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if window is None:
        window = (float(xs.min()), float(xs.max()))
    sel = (xs >= window[0]) & (xs <= window[1])
    x, y = xs[sel], ys[sel]
    if x.size < 4:
        raise ValueError(f"need at least 4 points in the window, got {x.size}")
    if not (y > 0).all():
        raise NonPositiveSeries("series must be strictly positive on the fit window")
    if mode == "loglog":
        if not (x > 0).all():
            raise NonPositiveSeries("loglog mode needs positive abscissae")
        x = np.log(x)
    elif mode != "semilog":
        raise ValueError(f"unknown mode {mode!r}")
    ly = np.log(y)
    xm, ym = x.mean(), ly.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (ly - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(np.sum((ly - ym) ** 2))
    ss_res = float(np.sum((ly - (intercept + slope * x)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return RateFit(slope, intercept, r2, (float(window[0]), float(window[1])), mode, int(x.size))
