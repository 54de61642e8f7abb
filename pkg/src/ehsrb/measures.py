"""Empirical measures from pushforwards of leaf volume, Cesaro averaging,
Lyapunov spectra, and leaf-conditional absolute-continuity diagnostics.

Measures carry physical mass (curve length), not probability, until an
explicit normalization; grid histograms are axis-aligned boxes over the
solid torus (or the local plane) at configurable resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SrbConfig
from .curves import AdmissibleCurve
from .errors import StatisticsError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GridSpec:
    n: int
    lo: tuple
    hi: tuple

    @staticmethod
    def for_system(system, n: int) -> "GridSpec":
        if system.is_local:
            r = 1.5 * system.R_Z
            return GridSpec(n=n, lo=(-r, -r), hi=(r, r))
        return GridSpec(n=n, lo=(0.0, -1.0, -1.0), hi=(TWO_PI, 1.0, 1.0))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def edges(self):
        return [
            np.linspace(self.lo[j], self.hi[j], self.n + 1)
            for j in range(self.dim)
        ]


@dataclass
class EmpiricalMeasure:
    """Weighted sample cloud with a box-histogram view.

    sample_backed=True means the samples are complete and the histogram is a
    derived view (their masses agree exactly); otherwise only the histogram
    and total mass are authoritative and samples are a capped subsample.
    """

    points: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)
    grid: GridSpec
    box_masses: np.ndarray | None = None  # flattened, lazily built
    total: float | None = None
    sample_backed: bool = True
    leaf_ids: np.ndarray | None = None

    def __post_init__(self):
        if self.total is None:
            self.total = float(self.weights.sum())

    @property
    def mass(self) -> float:
        return float(self.total)

    def histogram(self) -> np.ndarray:
        if self.box_masses is None:
            self.box_masses = _bin_points(self.points, self.weights, self.grid)
        return self.box_masses

    def marginal(self, axis: int, bins: int | None = None):
        """(edges, masses) of the 1d marginal along a coordinate axis."""
        bins = bins or self.grid.n
        lo, hi = self.grid.lo[axis], self.grid.hi[axis]
        edges = np.linspace(lo, hi, bins + 1)
        masses, _ = np.histogram(
            self.points[:, axis], bins=edges, weights=self.weights
        )
        return edges, masses

    def normalized(self) -> "EmpiricalMeasure":
        w = self.weights / self.mass
        return EmpiricalMeasure(
            points=self.points,
            weights=w,
            grid=self.grid,
            total=1.0,
            sample_backed=self.sample_backed,
            leaf_ids=self.leaf_ids,
        )

    def conservation_report(self) -> dict:
        hist_mass = float(self.histogram().sum())
        sample_mass = float(self.weights.sum())
        return {
            "total": self.mass,
            "sample_mass": sample_mass,
            "histogram_mass": hist_mass,
            "rel_gap": abs(hist_mass - sample_mass) / max(self.mass, 1e-300),
        }


def _bin_points(points, weights, grid: GridSpec):
    pts = points.copy()
    if grid.dim == 3:
        pts[:, 0] = np.mod(pts[:, 0], TWO_PI)
    idx = np.empty((pts.shape[0], grid.dim), dtype=np.int64)
    for j in range(grid.dim):
        e = (pts[:, j] - grid.lo[j]) / (grid.hi[j] - grid.lo[j])
        idx[:, j] = np.clip((e * grid.n).astype(np.int64), 0, grid.n - 1)
    flat = np.ravel_multi_index(idx.T, (grid.n,) * grid.dim)
    out = np.zeros(grid.n**grid.dim)
    np.add.at(out, flat, weights)
    return out


def curve_sample_weights(curve: AdmissibleCurve) -> np.ndarray:
    """Trapezoid arc-length weights; total is the curve length."""
    s = curve.arc_params()
    w = np.zeros_like(s)
    w[1:-1] = 0.5 * (s[2:] - s[:-2])
    w[0] = 0.5 * (s[1] - s[0])
    w[-1] = 0.5 * (s[-1] - s[-2])
    return w


def pushforward_leaf_volume(
    system,
    curve: AdmissibleCurve,
    n: int,
    cfg: SrbConfig | None = None,
    leaf_id: int = 0,
) -> EmpiricalMeasure:
    """Transport the curve's leaf volume by n map steps; weights unchanged."""
    cfg = cfg or SrbConfig()
    pts = curve.points.copy()
    for _ in range(n):
        pts = system.step_many(pts)
    w = curve_sample_weights(curve)
    return EmpiricalMeasure(
        points=pts,
        weights=w,
        grid=GridSpec.for_system(system, cfg.grid_n),
        leaf_ids=np.full(pts.shape[0], leaf_id),
    )


def cesaro_measure(
    system,
    curve: AdmissibleCurve,
    n: int,
    cfg: SrbConfig | None = None,
    marginal_axis: int = 0,
) -> EmpiricalMeasure:
    """(1/n) sum of the first n pushforwards of leaf volume.

    Keeps all samples while below the configured cap, otherwise accumulates
    the histogram and a high-resolution marginal exactly and retains an
    evenly thinned subsample.
    """
    cfg = cfg or SrbConfig()
    grid = GridSpec.for_system(system, cfg.grid_n)
    w0 = curve_sample_weights(curve) / n
    pts = curve.points.copy()
    n_expect = curve.n * n
    keep_all = n_expect <= cfg.max_points
    stride = 1 if keep_all else int(math.ceil(n_expect / cfg.max_points))

    box = np.zeros(grid.n**grid.dim)
    marg = np.zeros(cfg.marginal_bins)
    lo, hi = grid.lo[marginal_axis], grid.hi[marginal_axis]
    kept_pts = []
    kept_w = []
    total = 0.0
    for k in range(n):
        if k > 0:
            pts = system.step_many(pts)
        box += _bin_points(pts, w0, grid)
        col = pts[:, marginal_axis]
        if grid.dim == 3 and marginal_axis == 0:
            col = np.mod(col, TWO_PI)
        e = np.clip(((col - lo) / (hi - lo) * cfg.marginal_bins).astype(int),
                    0, cfg.marginal_bins - 1)
        np.add.at(marg, e, w0)
        total += float(w0.sum())
        if k % stride == 0:
            kept_pts.append(pts.copy())
            kept_w.append(w0 * stride)
    meas = EmpiricalMeasure(
        points=np.concatenate(kept_pts, axis=0),
        weights=np.concatenate(kept_w),
        grid=grid,
        box_masses=box,
        total=total,
        sample_backed=keep_all,
    )
    meas.fine_marginal = (np.linspace(lo, hi, cfg.marginal_bins + 1), marg)
    return meas


def ks_to_uniform(edges: np.ndarray, masses: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance of a binned measure to uniform."""
    total = masses.sum()
    if total <= 0:
        return 1.0
    cdf = np.concatenate([[0.0], np.cumsum(masses) / total])
    u = (edges - edges[0]) / (edges[-1] - edges[0])
    return float(np.abs(cdf - u).max())


def lyapunov_exponents(
    system,
    x0: np.ndarray,
    n: int,
    reorth_every: int = 1,
    n_blocks: int = 20,
    discard: int = 100,
) -> dict:
    """Lyapunov spectrum by QR re-orthonormalization along an orbit.

    Returns d estimates with standard errors from block averages.
    """
    d = system.dim
    x = np.asarray(x0, dtype=float)
    Q = np.eye(d)
    sums = np.zeros(d)
    block_sums = []
    count = 0
    block = np.zeros(d)
    block_len = max((n - discard) // n_blocks, 1)
    for k in range(n):
        J = system.jacobian(x)
        Q = J @ Q
        if (k + 1) % reorth_every == 0:
            Q, R = np.linalg.qr(Q)
            logs = np.log(np.abs(np.diag(R)))
            sign = np.sign(np.diag(R))
            Q = Q * sign  # keep orientation deterministic
            if k >= discard:
                sums += logs
                block += logs
                count += 1
                if count % block_len == 0:
                    block_sums.append(block / block_len)
                    block = np.zeros(d)
        x = system.step(x)
    lam = sums / max(count, 1)
    blocks = np.array(block_sums) if block_sums else lam[None, :]
    se = blocks.std(axis=0, ddof=1) / math.sqrt(max(blocks.shape[0], 2) - 1)
    order = np.argsort(lam)[::-1]
    return {
        "exponents": lam[order].tolist(),
        "stderr": se[order].tolist(),
        "n_used": int(count),
        "discard": int(discard),
    }


def leaf_absolute_continuity_diagnostic(
    measure: EmpiricalMeasure,
    arc_positions: np.ndarray | None = None,
    bins: int = 32,
    smooth: int = 3,
    ratio_cap: float = 50.0,
    min_samples: int = 64,
) -> dict:
    """Per-leaf conditional density smoothness report.

    Samples must carry leaf provenance; each leaf's conditional measure is
    binned along its arc coordinate, smoothed, and flagged when the max/min
    density ratio exceeds the cap.  This per-piece conditioning is a finite-
    data surrogate for conditioning on unstable leaves and is flagged as
    such in the report.
    """
    if measure.leaf_ids is None:
        raise StatisticsError("measure lacks leaf provenance tags")
    ids = measure.leaf_ids
    leaves = np.unique(ids)
    reports = []
    skipped = 0
    for leaf in leaves:
        sel = ids == leaf
        if sel.sum() < min_samples:
            skipped += 1
            continue
        if arc_positions is not None:
            coord = arc_positions[sel]
        else:
            pts = measure.points[sel]
            # arc coordinate along the leaf's dominant direction
            c = pts - pts.mean(axis=0)
            _, _, vt = np.linalg.svd(c, full_matrices=False)
            coord = c @ vt[0]
        w = measure.weights[sel]
        hist, edges = np.histogram(coord, bins=bins, weights=w)
        widths = np.diff(edges)
        dens = hist / np.maximum(widths, 1e-300)
        if smooth > 1:
            kern = np.ones(smooth) / smooth
            dens = np.convolve(dens, kern, mode="same")
        pos = dens[dens > 0]
        if pos.size == 0:
            skipped += 1
            continue
        ratio = float(dens.max() / pos.min())
        reports.append(
            {
                "leaf": int(leaf),
                "density_max": float(dens.max()),
                "density_min": float(pos.min()),
                "ratio": ratio,
                "concentrated": bool(ratio > ratio_cap),
                "empty_bins": int((dens <= 0).sum()),
            }
        )
    return {
        "surrogate": "per-piece conditioning",
        "n_leaves": len(reports),
        "n_skipped": int(skipped),
        "max_ratio": max((r["ratio"] for r in reports), default=float("nan")),
        "any_concentrated": bool(any(r["concentrated"] for r in reports)),
        "leaves": reports,
    }


def invariance_defect(system, measure: EmpiricalMeasure, test_functions) -> dict:
    """max_f |int f d(g_* mu) - int f d(mu)| over the test family."""
    pts = measure.points
    w = measure.weights
    gpts = system.step_many(pts)
    worst = 0.0
    for f in test_functions:
        v1 = float(np.sum(f(gpts) * w))
        v0 = float(np.sum(f(pts) * w))
        worst = max(worst, abs(v1 - v0))
    return {"defect": worst, "mass": measure.mass, "n_functions": len(test_functions)}


def default_test_functions(system, n: int = 64, seed: int = 424242):
    """Fixed family of smooth trig-bump test functions, recorded by seed."""
    rng = np.random.default_rng(seed)
    funcs = []
    if system.is_local:
        scales = rng.uniform(0.5, 4.0, size=(n, 2))
        phases = rng.uniform(0, TWO_PI, size=(n, 2))

        def make(s, p):
            return lambda x: np.cos(s[0] * x[:, 0] * 4 + p[0]) * np.cos(
                s[1] * x[:, 1] * 4 + p[1]
            )

        for i in range(n):
            funcs.append(make(scales[i], phases[i]))
        return funcs
    ks = rng.integers(0, 4, size=(n, 3))
    phases = rng.uniform(0, TWO_PI, size=(n, 3))

    def make3(k, p):
        return lambda x: (
            np.cos(k[0] * np.mod(x[:, 0], TWO_PI) + p[0])
            * np.cos(k[1] * np.pi * x[:, 1] + p[1])
            * np.cos(k[2] * np.pi * x[:, 2] + p[2])
        )

    for i in range(n):
        funcs.append(make3(ks[i], phases[i]))
    return funcs
