"""Admissible curves: sampled chains, evolution with leaf-volume bookkeeping,
trimming to admissible pieces, and standard-pair verification.

Curves are adaptive sample chains with per-sample unit tangents; graph data
(slopes over the reference line, Hoelder quotients) is estimated from divided
differences with a fixed stencil.  On the solid torus the angular coordinate
of a chain is kept unwrapped (a lift), so chords and lengths are computed in
the flat metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import CurveConfig
from .errors import DomainError, IntegrityError, PreconditionError

TWO_PI = 2.0 * math.pi


@dataclass
class AdmissibleCurve:
    """Graph-like curve: points/tangents plus geometry caps.

    The curve is admissible when, written as a graph over the line G through
    its base point (with values in the stable reference F), the slope stays
    below gamma_geom, the slope's Hoelder quotient below kappa, and the
    parameter extent below r.
    """

    points: np.ndarray  # (n, d), angular coordinate unwrapped
    tangents: np.ndarray  # (n, d), unit
    base_index: int
    G: np.ndarray  # (d,)
    F: np.ndarray  # (d-1, d) orthonormal rows
    gamma_geom: float
    kappa: float
    r: float
    alpha: float

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def base_point(self) -> np.ndarray:
        return self.points[self.base_index]

    def arc_params(self) -> np.ndarray:
        """Cumulative chord length from the first sample."""
        gaps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(gaps)])

    def length(self) -> float:
        return float(self.arc_params()[-1])

    def graph_data(self):
        """(t, psi, slopes): graph coordinates over (G, F) based at the base
        point; slopes are the F-components of dpsi/dt."""
        rel = self.points - self.base_point
        t = rel @ self.G
        psi = rel @ self.F.T
        du = self.tangents @ self.G
        if np.any(du <= 0.0):
            raise IntegrityError("chain is not a graph over G (tangent folded)")
        slopes = (self.tangents @ self.F.T) / du[:, None]
        return t, psi, slopes

    def holder_quotient(self, stencil: int = 24) -> float:
        """Max Hoelder quotient of the slope field over nearby sample pairs."""
        t, _, slopes = self.graph_data()
        best = 0.0
        n = self.n
        for k in range(1, min(stencil, n - 1) + 1):
            dt = np.abs(t[k:] - t[:-k])
            ds = np.linalg.norm(slopes[k:] - slopes[:-k], axis=1)
            ok = dt > 1e-14
            if np.any(ok):
                best = max(best, float((ds[ok] / dt[ok] ** self.alpha).max()))
        return best

    def curvature_holder(self, stencil: int = 24) -> float:
        """Hoelder quotient of the unit tangent field (curvature bound)."""
        s = self.arc_params()
        best = 0.0
        n = self.n
        for k in range(1, min(stencil, n - 1) + 1):
            ds = np.abs(s[k:] - s[:-k])
            dtan = np.linalg.norm(self.tangents[k:] - self.tangents[:-k], axis=1)
            ok = ds > 1e-14
            if np.any(ok):
                best = max(best, float((dtan[ok] / ds[ok] ** self.alpha).max()))
        return best

    def check(self, theta_min: float = 0.0, stencil: int = 24) -> dict:
        """Admissibility report; all clauses must hold."""
        t, psi, slopes = self.graph_data()
        proj = self.F.T @ (self.F @ self.G)
        angle_gf = math.asin(min(1.0, float(np.linalg.norm(self.G - proj))))
        base_slope = float(np.linalg.norm(slopes[self.base_index]))
        report = {
            "psi0": float(np.linalg.norm(psi[self.base_index])),
            "dpsi0": base_slope,
            "max_slope": float(np.linalg.norm(slopes, axis=1).max()),
            "holder": self.holder_quotient(stencil),
            "extent": float(np.abs(t).max()),
            "angle_gf": angle_gf,
        }
        report["ok"] = bool(
            report["psi0"] < 1e-9
            and report["dpsi0"] < 1e-9
            and report["max_slope"] <= self.gamma_geom + 1e-12
            and report["holder"] <= self.kappa + 1e-12
            and report["extent"] <= self.r + 1e-12
            and angle_gf >= theta_min
        )
        return report


@dataclass
class StandardPair:
    curve: AdmissibleCurve
    rho: np.ndarray  # density samples, one per curve sample

    def mass(self) -> float:
        s = self.curve.arc_params()
        return float(np.trapz(self.rho, s))

    def density_report(self, cap_l: float, stencil: int = 24) -> dict:
        s = self.curve.arc_params()
        lo, hi = float(self.rho.min()), float(self.rho.max())
        best = 0.0
        for k in range(1, min(stencil, self.curve.n - 1) + 1):
            ds = np.abs(s[k:] - s[:-k])
            dr = np.abs(self.rho[k:] - self.rho[:-k])
            ok = ds > 1e-14
            if np.any(ok):
                best = max(best, float((dr[ok] / ds[ok] ** self.curve.alpha).max()))
        return {
            "rho_min": lo,
            "rho_max": hi,
            "holder": best,
            "in_bounds": bool(lo >= 1.0 / cap_l - 1e-12 and hi <= cap_l + 1e-12),
            "holder_ok": bool(best <= cap_l + 1e-12),
        }


def straight_seed(
    system,
    center,
    length: float,
    n_samples: int,
    direction=None,
    cfg: CurveConfig | None = None,
) -> AdmissibleCurve:
    """Straight admissible segment through a state, along the unstable axis
    by default."""
    cfg = cfg or CurveConfig()
    center = np.asarray(center, dtype=float)
    if direction is None:
        direction, _ = system.cone_axes(center)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    s = np.linspace(-length / 2, length / 2, n_samples)
    pts = center[None, :] + s[:, None] * direction
    tans = np.tile(direction, (n_samples, 1))
    _, frame = system.cone_axes(center)
    return AdmissibleCurve(
        points=pts,
        tangents=tans,
        base_index=n_samples // 2,
        G=direction,
        F=frame,
        gamma_geom=cfg.gamma_bar,
        kappa=cfg.kappa_bar,
        r=length,
        alpha=system.spec.alpha,
    )


@dataclass
class EvolvedCurve:
    """Image chain of a seed curve after n_steps applications of the map."""

    seed: AdmissibleCurve
    params: np.ndarray  # (n,) arc position on the seed
    points: np.ndarray
    tangents: np.ndarray
    logphi: np.ndarray  # accumulated log tangent stretch
    n_steps: int
    history: np.ndarray | None = None  # (n_steps+1, n, d) when retained

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def image_arc(self) -> np.ndarray:
        gaps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(gaps)])

    def length(self) -> float:
        return float(self.image_arc()[-1])


def _seed_eval(seed: AdmissibleCurve):
    s = seed.arc_params()

    def eval_at(params):
        params = np.asarray(params, dtype=float)
        pts = np.stack(
            [np.interp(params, s, seed.points[:, j]) for j in range(seed.dim)],
            axis=1,
        )
        tans = np.stack(
            [np.interp(params, s, seed.tangents[:, j]) for j in range(seed.dim)],
            axis=1,
        )
        tans /= np.linalg.norm(tans, axis=1)[:, None]
        return pts, tans

    return eval_at, float(s[-1])


def _advance(system, pts, tans, logphi):
    """One map step for a batch: points, unit tangents, accumulated stretch.

    On the torus the angular image is lifted per point to the branch nearest
    m*phi (the angular part of every regime differs from m*phi by less than
    pi), so chains keep a consistent lift without assuming batch adjacency.
    """
    J = system.jacobian_many(pts)
    raw = np.einsum("nij,nj->ni", J, tans)
    stretch = np.linalg.norm(raw, axis=1)
    new_pts = system.step_many(pts)
    if not system.is_local:
        new_pts = new_pts.copy()
        expected = system.spec.base_expansion * pts[:, 0]
        mod = new_pts[:, 0]
        new_pts[:, 0] = mod + TWO_PI * np.round((expected - mod) / TWO_PI)
    return new_pts, raw / stretch[:, None], logphi + np.log(stretch)


def evolve_curve(
    system,
    seed: AdmissibleCurve,
    n_steps: int,
    h_max: float | None = None,
    refine: bool = True,
    keep_history: bool = False,
    crop_radius: float | None = None,
    max_points: int = 400_000,
) -> EvolvedCurve:
    """Push a curve forward n_steps, accumulating log leaf-volume stretch.

    With refine=True, parameters are inserted wherever consecutive image
    samples drift more than h_max apart (inserted points are re-evolved from
    the seed, so the chain stays an exact sample of the true image).  With
    crop_radius set, samples farther than that from the base point's image
    are dropped; trimming only ever keeps a neighborhood of the base point,
    so a generous crop loses nothing.
    """
    from .config import CurveConfig

    h_max = h_max if h_max is not None else CurveConfig().h_max
    eval_seed, total_len = _seed_eval(seed)
    params = seed.arc_params()
    pts = seed.points.copy()
    tans = seed.tangents.copy()
    logphi = np.zeros(seed.n)
    hist = [pts.copy()] if keep_history else None
    if n_steps == 0:
        return EvolvedCurve(seed, params, pts, tans, logphi, 0,
                            np.array(hist) if hist else None)

    base_param = params[seed.base_index]
    for k in range(1, n_steps + 1):
        pts, tans, logphi = _advance(system, pts, tans, logphi)
        if not bool(np.all(system.in_domain(pts))):
            raise IntegrityError("curve sample escaped the trapping region")
        if hist is not None:
            hist.append(pts.copy())
        if refine:
            for _ in range(40):
                gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
                bad = np.flatnonzero(gaps > h_max)
                if bad.size == 0:
                    break
                if pts.shape[0] + bad.size > max_points:
                    raise IntegrityError(
                        "refinement exceeded the point budget; shorten the "
                        "seed or raise h_max"
                    )
                new_params = 0.5 * (params[bad] + params[bad + 1])
                np_pts, np_tans = eval_seed(new_params)
                np_logphi = np.zeros(new_params.size)
                for _k in range(k):
                    np_pts, np_tans, np_logphi = _advance(
                        system, np_pts, np_tans, np_logphi
                    )
                params = np.insert(params, bad + 1, new_params)
                pts = np.insert(pts, bad + 1, np_pts, axis=0)
                tans = np.insert(tans, bad + 1, np_tans, axis=0)
                logphi = np.insert(logphi, bad + 1, np_logphi)
                if hist is not None:
                    hist = None  # history not maintained across refinement
        if crop_radius is not None:
            b = int(np.searchsorted(params, base_param))
            b = min(max(b, 0), pts.shape[0] - 1)
            dist = np.linalg.norm(pts - pts[b], axis=1)
            keep = dist <= crop_radius
            # keep the contiguous run containing the base sample
            lo = b
            while lo > 0 and keep[lo - 1]:
                lo -= 1
            hi = b
            while hi < pts.shape[0] - 1 and keep[hi + 1]:
                hi += 1
            sl = slice(lo, hi + 1)
            params, pts, tans, logphi = (
                params[sl],
                pts[sl],
                tans[sl],
                logphi[sl],
            )
    return EvolvedCurve(
        seed=seed,
        params=params,
        points=pts,
        tangents=tans,
        logphi=logphi,
        n_steps=n_steps,
        history=np.array(hist) if hist is not None else None,
    )


def mass_check(ev: EvolvedCurve) -> dict:
    """Change-of-variables audit: integral of 1/phi over the image vs the
    seed length, and per-segment stretch vs accumulated log stretch."""
    src = ev.params
    img = ev.image_arc()
    inv_phi = np.exp(-ev.logphi)
    recovered = float(np.trapz(inv_phi, img))
    seg_ratio = np.diff(img) / np.maximum(np.diff(src), 1e-300)
    mid_phi = np.exp(0.5 * (ev.logphi[1:] + ev.logphi[:-1]))
    rel = np.abs(seg_ratio / mid_phi - 1.0)
    return {
        "seed_length": float(src[-1] - src[0]),
        "recovered_length": recovered,
        "mass_rel_error": abs(recovered - (src[-1] - src[0]))
        / max(src[-1] - src[0], 1e-300),
        "max_segment_rel_error": float(rel.max()),
    }


def trim_to_admissible(
    system,
    ev: EvolvedCurve,
    gamma_bar: float,
    kappa_bar: float,
    r_bar: float,
    stencil: int = 24,
    min_samples: int = 8,
) -> list[AdmissibleCurve]:
    """Split an image chain into maximal admissible subgraphs.

    Walk outward from the base sample, stopping at the first violation of
    the slope cap, the Hoelder cap, or the size cap; the kept window becomes
    an admissible curve over its own tangent line, and the remainders are
    re-based at their midpoints and processed recursively.
    """
    pieces: list[AdmissibleCurve] = []
    base_param = ev.seed.arc_params()[ev.seed.base_index]
    base_idx = int(np.argmin(np.abs(ev.params - base_param)))
    _trim_rec(
        system, ev.points, ev.tangents, gamma_bar, kappa_bar, r_bar,
        stencil, min_samples, pieces, 0, base_idx,
    )
    return pieces


def _trim_rec(
    system, pts, tans, gamma_bar, kappa_bar, r_bar,
    stencil, min_samples, out, depth, base_idx,
):
    n = pts.shape[0]
    if n < min_samples or depth > 200:
        return
    alpha = system.spec.alpha
    b = int(np.clip(base_idx, 0, n - 1))
    G = tans[b]
    _, F = system.cone_axes(pts[b])
    rel = pts - pts[b]
    t = rel @ G
    du = tans @ G
    ok_graph = du > 1e-9
    safe_du = np.where(ok_graph, du, 1.0)
    slopes = (tans @ F.T) / safe_du[:, None]
    slope_norm = np.where(ok_graph, np.linalg.norm(slopes, axis=1), np.inf)

    def violates(i, lo, hi) -> bool:
        if not ok_graph[i] or abs(t[i]) > r_bar or slope_norm[i] > gamma_bar:
            return True
        for j in range(max(lo, i - stencil), min(hi, i + stencil) + 1):
            dt = abs(t[i] - t[j])
            if dt > 1e-14:
                if np.linalg.norm(slopes[i] - slopes[j]) / dt**alpha > kappa_bar:
                    return True
        return False

    lo = hi = b
    grow = True
    while grow:
        grow = False
        if lo > 0 and not violates(lo - 1, lo, hi):
            lo -= 1
            grow = True
        if hi < n - 1 and not violates(hi + 1, lo, hi):
            hi += 1
            grow = True
    if hi - lo + 1 >= min_samples:
        out.append(
            AdmissibleCurve(
                points=pts[lo : hi + 1].copy(),
                tangents=tans[lo : hi + 1].copy(),
                base_index=b - lo,
                G=G,
                F=F,
                gamma_geom=gamma_bar,
                kappa=kappa_bar,
                r=r_bar,
                alpha=alpha,
            )
        )
    for a, z in ((0, lo - 1), (hi + 1, n - 1)):
        if z - a + 1 >= min_samples:
            mid = (a + z) // 2
            _trim_rec(
                system, pts[a : z + 1], tans[a : z + 1], gamma_bar, kappa_bar,
                r_bar, stencil, min_samples, out, depth + 1, mid - a,
            )


def verify_standard_pair(
    system,
    pair: StandardPair,
    ev: EvolvedCurve,
    big_c: float,
    lambda_bar: float,
    q: int,
    beta_frac: float,
    cap_l: float,
    theta_min: float = 0.0,
    n_probe: int = 24,
    cone_cfg=None,
) -> dict:
    """Clause-by-clause standard-pair check.

    (i) geometry caps; (ii) backward contraction along the retained history;
    (iii) density bounds and Hoelder constant; (iv) stable-control fraction
    over the backward window of length q.
    """
    from .cones import _s_boundary_rays, base_pair
    from .config import ConeConfig

    cone_cfg = cone_cfg or ConeConfig()
    if ev.history is None:
        raise PreconditionError("evolved curve must retain backward-orbit data")
    n_steps = ev.n_steps
    hist = ev.history  # (n_steps+1, n, d)
    geom = pair.curve.check(theta_min=theta_min)

    # (ii) backward contraction on sampled pairs
    npts = hist.shape[1]
    idx = np.linspace(0, npts - 1, min(n_probe, npts)).astype(int)
    worst_c = 0.0
    ok_contraction = True
    final = hist[n_steps]
    for a in range(len(idx) - 1):
        i, j = idx[a], idx[a + 1]
        dN = np.linalg.norm(final[i] - final[j])
        if dN < 1e-300:
            continue
        for k in range(n_steps + 1):
            dk = np.linalg.norm(hist[k][i] - hist[k][j])
            decay = math.exp(-lambda_bar * (n_steps - k)) * dN
            worst_c = max(worst_c, dk / max(decay, 1e-300))
            if dk > big_c * decay + 1e-12:
                ok_contraction = False

    dens = pair.density_report(cap_l)

    # (iv) stable-control fraction via the backward window
    qq = min(q, n_steps)
    controlled = 0
    for i in idx:
        bp = base_pair(system, hist[n_steps, i], cone_cfg.width_u, cone_cfg.width_s)
        V = _s_boundary_rays(bp, 16)
        good = True
        for k in range(1, qq + 1):
            Jk = system.jacobian(hist[n_steps - k, i])
            V = V @ np.linalg.inv(Jk).T
            if np.linalg.norm(V, axis=1).min() < big_c * math.exp(
                lambda_bar * k
            ) - 1e-12:
                good = False
                break
        controlled += int(good)
    frac = controlled / len(idx)

    return {
        "geometry": geom,
        "backward_contraction_ok": ok_contraction,
        "measured_contraction_constant": worst_c,
        "density": dens,
        "stable_fraction": frac,
        "stable_fraction_ok": bool(frac >= beta_frac),
        "q": int(qq),
        "pass": bool(
            geom["ok"]
            and ok_contraction
            and dens["in_bounds"]
            and dens["holder_ok"]
            and frac >= beta_frac
        ),
    }
