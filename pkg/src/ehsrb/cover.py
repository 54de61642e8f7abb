"""Bounded-multiplicity interval covering (one-dimensional case).

Given centers with parameter windows on a common curve, select a separated
subfamily whose windows still cover every center, then color the kept
windows so that same-color windows are pairwise disjoint.  For equal radii
the separation step guarantees two colors suffice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CoverResult:
    kept: np.ndarray  # indices of kept centers, sorted by position
    classes: list[np.ndarray]  # index arrays into the original centers
    p: int
    p_bound: int

    def to_dict(self) -> dict:
        return {
            "kept": self.kept.tolist(),
            "classes": [c.tolist() for c in self.classes],
            "p": self.p,
            "p_bound": self.p_bound,
        }


def besicovitch_cover(centers, windows) -> CoverResult:
    """Color classes for interval windows.

    centers: (n,) positions; windows: (n, 2) [lo, hi] with lo <= c <= hi.
    Every input center is covered by the union of kept windows; windows in
    one class are pairwise disjoint (half-open [lo, hi)).
    """
    centers = np.asarray(centers, dtype=float)
    windows = np.asarray(windows, dtype=float).reshape(-1, 2)
    n = centers.size
    if n == 0:
        return CoverResult(np.array([], dtype=int), [], 0, 0)
    if np.any(windows[:, 0] > centers) or np.any(windows[:, 1] < centers):
        raise ValueError("every window must contain its center")

    order = np.argsort(centers)
    sep = float(np.min(windows[:, 1] - centers))  # guaranteed right reach
    sep = max(sep, float(np.min(centers - windows[:, 0])))

    # greedy maximal separated subfamily, left to right: keep a center when
    # no kept window covers it yet
    kept: list[int] = []
    cover_hi = -np.inf
    for i in order:
        if centers[i] > cover_hi:
            kept.append(i)
            cover_hi = max(cover_hi, windows[i, 1])
    kept_arr = np.array(kept, dtype=int)

    # first-fit coloring by left endpoint; intervals treated half-open
    classes: list[list[int]] = []
    class_hi: list[float] = []
    for i in kept_arr:
        lo, hi = windows[i]
        placed = False
        for c in range(len(classes)):
            if lo >= class_hi[c] - 1e-15:
                classes[c].append(i)
                class_hi[c] = hi
                placed = True
                break
        if not placed:
            classes.append([i])
            class_hi.append(hi)

    # with equal radii, separated intervals two apart are disjoint
    radii = np.minimum(windows[:, 1] - centers, centers - windows[:, 0])
    equal = bool(np.ptp(radii) < 1e-12 * max(np.abs(radii).max(), 1.0))
    p_bound = 2 if equal else len(classes)
    return CoverResult(
        kept=kept_arr,
        classes=[np.array(c, dtype=int) for c in classes],
        p=len(classes),
        p_bound=max(p_bound, len(classes)),
    )


def verify_cover(centers, windows, result: CoverResult) -> dict:
    """Coverage of all centers plus within-class disjointness, by brute force."""
    centers = np.asarray(centers, dtype=float)
    windows = np.asarray(windows, dtype=float).reshape(-1, 2)
    kept_w = windows[result.kept]
    covered = np.array(
        [bool(np.any((kept_w[:, 0] <= c) & (c <= kept_w[:, 1]))) for c in centers]
    )
    disjoint = True
    for cls in result.classes:
        w = windows[cls]
        o = np.argsort(w[:, 0])
        w = w[o]
        if np.any(w[1:, 0] < w[:-1, 1] - 1e-15):
            disjoint = False
    return {
        "all_covered": bool(covered.all()),
        "within_class_disjoint": disjoint,
        "n_classes": result.p,
    }


def brute_force_chromatic(windows, idx) -> int:
    """Exact chromatic number of the interval overlap graph on idx (small n).

    Interval graphs are perfect, so the chromatic number equals the largest
    number of pairwise-overlapping intervals, found here by sweeping.
    """
    windows = np.asarray(windows, dtype=float).reshape(-1, 2)
    w = windows[np.asarray(idx, dtype=int)]
    events = []
    for lo, hi in w:
        events.append((lo, 1))
        events.append((hi, -1))
    events.sort(key=lambda e: (e[0], e[1]))
    depth = best = 0
    for _, d in events:
        depth += d
        best = max(best, depth)
    return best
