"""Power-law tail exponent from a return-time histogram."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StatisticsError


@dataclass(frozen=True)
class TailFit:
    exponent: float
    ci_low: float
    ci_high: float
    n_bins: int
    t_min: int
    t_max: int

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_bins": self.n_bins,
            "t_min": self.t_min,
            "t_max": self.t_max,
        }


def return_time_tail_fit(
    t: np.ndarray,
    mass: np.ndarray,
    t_min: int = 20,
    t_max: int = 400,
    min_mass: float = 0.0,
    min_bins: int = 50,
    weighted: bool = True,
) -> TailFit:
    """Least-squares slope of log(mass) against log(t) over [t_min, t_max].

    With weighted=True the fit weights each bin by its mass, the inverse
    variance of a log-count under Poisson noise, which removes the steepening
    bias of sparse far-tail bins.  Returns minus the slope with a 95%
    interval; requires at least min_bins occupied bins in the window.
    """
    t = np.asarray(t, dtype=float)
    mass = np.asarray(mass, dtype=float)
    sel = (t >= t_min) & (t <= t_max) & (mass > min_mass)
    if sel.sum() < min_bins:
        raise StatisticsError(
            f"only {int(sel.sum())} occupied tail bins in [{t_min}, {t_max}]; "
            f"need {min_bins}"
        )
    x = np.log(t[sel])
    y = np.log(mass[sel])
    n = x.size
    w = np.sqrt(mass[sel]) if weighted else np.ones(n)
    X = np.column_stack([x, np.ones(n)])
    coef, _, _, _ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
    slope = coef[0]
    resid = (y - X @ coef) * w
    s2 = float(resid @ resid) / max(n - 2, 1)
    xbar = float((w**2 * x).sum() / (w**2).sum())
    sxx = float((w**2 * (x - xbar) ** 2).sum())
    se = (s2 / sxx) ** 0.5 if sxx > 0 else float("inf")
    return TailFit(
        exponent=float(-slope),
        ci_low=float(-slope - 1.96 * se),
        ci_high=float(-slope + 1.96 * se),
        n_bins=int(n),
        t_min=int(t_min),
        t_max=int(t_max),
    )
