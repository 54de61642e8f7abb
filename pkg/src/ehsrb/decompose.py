"""Admissible decompositions: partition a curve into pieces with inducing
times so each piece's image lands outside the neutral region at uniform
scale, plus return-time statistics and induced-map distortion.

The natural partition is by first-exit level sets; runs whose image is still
shorter than the target scale stay active and their inducing time grows by
one per step, which realizes the merge-with-neighbor rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import CurveConfig
from .curves import AdmissibleCurve, _advance, _seed_eval
from .errors import DiagnosticsError, PreconditionError
from .flow import batch_exit_times


@dataclass
class CurvePiece:
    parent_id: int
    interval: tuple[float, float]  # seed arc-length span
    tau: int
    points: np.ndarray  # image chain under g^tau
    tangents: np.ndarray
    logphi: np.ndarray
    params: np.ndarray

    @property
    def mass(self) -> float:
        return self.interval[1] - self.interval[0]

    def image_length(self) -> float:
        return float(
            np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum()
        )

    def logphi_at(self, s) -> np.ndarray:
        return np.interp(s, self.params, self.logphi)

    def to_dict(self) -> dict:
        return {
            "parent_id": int(self.parent_id),
            "interval": [float(self.interval[0]), float(self.interval[1])],
            "tau": int(self.tau),
            "image_length": self.image_length(),
        }


def check_a_tilde(system, curve: AdmissibleCurve, cfg: CurveConfig, width: float):
    """Membership report for the set of uniform-scale admissible curves."""
    length = curve.length()
    tan_ang = np.linalg.norm(curve.tangents[:, 1:], axis=1) / np.abs(
        curve.tangents[:, 0]
    )
    in_cone = bool(np.all(tan_ang <= math.tan(width)))
    outside = bool(np.all(~system.in_Z(_wrapped(system, curve.points))))
    holder = curve.curvature_holder()
    return {
        "length": length,
        "length_ok": bool(cfg.epsilon <= length <= 2 * cfg.epsilon + 1e-12),
        "in_cone": in_cone,
        "outside_z": outside,
        "holder_curvature": holder,
        "holder_ok": bool(holder <= cfg.holder_l + 1e-12),
        "ok": bool(
            cfg.epsilon <= length <= 2 * cfg.epsilon + 1e-12
            and in_cone
            and outside
            and holder <= cfg.holder_l + 1e-12
        ),
    }


def _wrapped(system, pts):
    if system.is_local:
        return pts
    out = pts.copy()
    out[:, 0] = np.mod(out[:, 0], 2 * math.pi)
    return out


def admissible_decomposition(
    system,
    curve: AdmissibleCurve,
    cfg: CurveConfig | None = None,
    parent_id: int = 0,
    require_a_tilde: bool = True,
    cone_width: float | None = None,
    h_max: float | None = None,
    remainder: str = "error",
) -> list[CurvePiece]:
    """Decompose a uniform-scale curve into pieces with inducing times.

    Each emitted piece has its g^tau image outside Z with image length in
    [epsilon, 2*epsilon]; boundary runs too short to emit keep evolving with
    tau incremented, which is the merge rule.  Curves crossing the stable
    set decompose into infinitely many levels, so a finite run leaves a
    remainder beyond the tau cap: remainder='error' raises on one,
    remainder='drop' discards it (an endpoint-null set surrogate).
    """
    pieces, report = decomposition_with_report(
        system, curve, cfg, parent_id, require_a_tilde, cone_width, h_max
    )
    cfg = cfg or CurveConfig()
    if remainder == "error" and report["remainder_fraction"] > cfg.min_mass_fraction:
        raise DiagnosticsError(
            f"decomposition left mass fraction {report['remainder_fraction']:.3e} "
            f"active after tau cap {cfg.tau_cap}"
        )
    return pieces


def decomposition_with_report(
    system,
    curve: AdmissibleCurve,
    cfg: CurveConfig | None = None,
    parent_id: int = 0,
    require_a_tilde: bool = True,
    cone_width: float | None = None,
    h_max: float | None = None,
):
    from .config import ConeConfig

    cfg = cfg or CurveConfig()
    width = cone_width if cone_width is not None else ConeConfig().width_c1
    h_max = h_max if h_max is not None else max(cfg.epsilon / 20.0, 1e-4)
    if require_a_tilde:
        rep = check_a_tilde(system, curve, cfg, width)
        if not rep["ok"]:
            raise PreconditionError(f"curve not at uniform scale: {rep}")

    params = curve.arc_params()
    pts = curve.points.copy()
    tans = curve.tangents.copy()
    logphi = np.zeros(curve.n)
    active = np.ones(curve.n, dtype=bool)
    pieces: list[CurvePiece] = []
    total_mass = params[-1] - params[0]

    for tau in range(1, cfg.tau_cap + 1):
        if not np.any(active):
            break
        prev = (params.copy(), pts.copy(), tans.copy(), logphi.copy())
        idx = np.flatnonzero(active)
        new_pts, new_tans, new_logphi = _advance(
            system, pts[idx], tans[idx], logphi[idx]
        )
        pts[idx], tans[idx], logphi[idx] = new_pts, new_tans, new_logphi

        # coarse resolution while in transit, fine resolution on outside runs
        # and across the Z boundary, where cuts and crossings are localized
        params, pts, tans, logphi, active = _refine_active(
            system, prev, params, pts, tans, logphi, active, 8 * h_max
        )
        params, pts, tans, logphi, active = _refine_active(
            system, prev, params, pts, tans, logphi, active, h_max,
            only_near_exit=True,
        )

        outside = ~system.in_Z(_wrapped(system, pts))
        for lo, hi in _active_runs(active):
            sub = np.arange(lo, hi + 1)
            out_mask = outside[sub]
            for a, b in _true_runs(out_mask):
                seg = sub[a : b + 1]
                if seg.size < 2:
                    continue
                img_len = float(
                    np.linalg.norm(np.diff(pts[seg], axis=0), axis=1).sum()
                )
                if img_len < cfg.epsilon:
                    continue  # stays active: merged with neighbors, tau grows
                # the run owns the parameter interval out to the midpoints of
                # its boundary gaps (crossing gaps are null-set surrogates)
                lo_edge = (
                    0.5 * (params[seg[0] - 1] + params[seg[0]])
                    if seg[0] > lo
                    else params[seg[0]]
                )
                hi_edge = (
                    0.5 * (params[seg[-1]] + params[seg[-1] + 1])
                    if seg[-1] < hi
                    else params[seg[-1]]
                )
                pieces.extend(
                    _cut_and_emit(
                        parent_id, params, pts, tans, logphi, seg, tau, cfg,
                        lo_edge, hi_edge,
                    )
                )
                active[seg] = False
        # drop rows that can never matter again (keep one inactive neighbor
        # around each active run as an interpolation bracket)
        keep = active.copy()
        keep[:-1] |= active[1:]
        keep[1:] |= active[:-1]
        params, pts, tans, logphi, active = (
            params[keep], pts[keep], tans[keep], logphi[keep], active[keep],
        )
    remaining = _active_mass(params, active)
    report = {
        "remainder_fraction": remaining / max(total_mass, 1e-300),
        "emitted_mass": float(sum(p.mass for p in pieces)),
        "total_mass": float(total_mass),
        "tau_cap": int(cfg.tau_cap),
    }
    return pieces, report


def _active_runs(active: np.ndarray):
    runs = []
    n = active.size
    i = 0
    while i < n:
        if active[i]:
            j = i
            while j + 1 < n and active[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def _true_runs(mask: np.ndarray):
    return _active_runs(mask)


def _active_mass(params, active) -> float:
    if not np.any(active):
        return 0.0
    gaps = np.diff(params)
    both = active[:-1] & active[1:]
    return float(gaps[both].sum())


def _refine_active(system, prev, params, pts, tans, logphi, active,
                   h_max, only_near_exit: bool = False,
                   max_rounds: int = 40, max_points: int = 300_000):
    """Insert samples where active gaps exceed h_max.

    New samples are interpolated on the previous step's chain (itself a fine
    sample of the true image) and advanced one step, so the cost per insert
    is one map application and the placement error is second order in the
    previous chain's spacing.  With only_near_exit, restricts to gaps with at
    least one endpoint outside Z (covering outside runs and Z crossings).
    """
    pp, ppts, ptans, plog = prev

    def from_prev(new_params):
        d = ppts.shape[1]
        x = np.stack([np.interp(new_params, pp, ppts[:, j]) for j in range(d)], 1)
        t = np.stack([np.interp(new_params, pp, ptans[:, j]) for j in range(d)], 1)
        t /= np.linalg.norm(t, axis=1)[:, None]
        lp = np.interp(new_params, pp, plog)
        return _advance(system, x, t, lp)

    for _ in range(max_rounds):
        gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        both = active[:-1] & active[1:]
        if only_near_exit:
            out = ~system.in_Z(_wrapped(system, pts))
            both = both & (out[:-1] | out[1:])
        bad = np.flatnonzero(both & (gaps > h_max))
        if bad.size == 0:
            break
        if params.size + bad.size > max_points:
            raise DiagnosticsError("decomposition refinement point budget hit")
        new_params = 0.5 * (params[bad] + params[bad + 1])
        np_pts, np_tans, np_logphi = from_prev(new_params)
        params = np.insert(params, bad + 1, new_params)
        pts = np.insert(pts, bad + 1, np_pts, axis=0)
        tans = np.insert(tans, bad + 1, np_tans, axis=0)
        logphi = np.insert(logphi, bad + 1, np_logphi)
        active = np.insert(active, bad + 1, True)
    return params, pts, tans, logphi, active


def _cut_and_emit(parent_id, params, pts, tans, logphi, seg, tau, cfg,
                  lo_edge, hi_edge):
    """Cut an outside run into image pieces with length in [eps, 2eps].

    Piece intervals tile [lo_edge, hi_edge] exactly (cut positions are
    interpolated in parameter space), so the emitted masses partition the
    run's parameter span."""
    img_arc = np.concatenate(
        [[0.0], np.cumsum(np.linalg.norm(np.diff(pts[seg], axis=0), axis=1))]
    )
    total = img_arc[-1]
    n_pieces = max(1, int(math.ceil(total / (2 * cfg.epsilon))))
    cuts = np.linspace(0.0, total, n_pieces + 1)
    cut_params = np.interp(cuts, img_arc, params[seg])
    cut_params[0] = lo_edge
    cut_params[-1] = hi_edge
    out = []
    for i in range(n_pieces):
        inside = (img_arc >= cuts[i] - 1e-14) & (img_arc <= cuts[i + 1] + 1e-14)
        sub = seg[inside]
        if sub.size < 2:
            continue
        out.append(
            CurvePiece(
                parent_id=parent_id,
                interval=(float(cut_params[i]), float(cut_params[i + 1])),
                tau=tau,
                points=pts[sub].copy(),
                tangents=tans[sub].copy(),
                logphi=logphi[sub].copy(),
                params=params[sub].copy(),
            )
        )
    return out


def distortion_ratio(system, piece: CurvePiece, s1: float, s2: float) -> float:
    """log of the tangent-stretch ratio of the induced map between two
    parameters of the same piece."""
    lo, hi = piece.interval
    for s in (s1, s2):
        if not (lo - 1e-12 <= s <= hi + 1e-12):
            raise PreconditionError("parameters must lie in the piece interval")
    return float(piece.logphi_at(s1) - piece.logphi_at(s2))


def return_time_histogram(pieces: list[CurvePiece], normalize: bool = True):
    """(tau values, mass per tau); mass from seed arc length."""
    taus = np.array([p.tau for p in pieces])
    masses = np.array([p.mass for p in pieces])
    if taus.size == 0:
        return np.array([], dtype=int), np.array([])
    tmax = int(taus.max())
    hist = np.zeros(tmax + 1)
    np.add.at(hist, taus, masses)
    ts = np.arange(tmax + 1)
    keep = hist > 0
    mass = hist[keep]
    if normalize and mass.sum() > 0:
        mass = mass / mass.sum()
    return ts[keep], mass


# ---------------------------------------------------------------------------
# fast return-time tail on the local model
# ---------------------------------------------------------------------------


def segment_tail_times(system, X0: np.ndarray, tau_cap: int = 2000) -> np.ndarray:
    """Inducing times for explicit sample points (local model), per point.

    Points step under the time-1 map; once a point's whole future is a single
    in-Z passage, its exit step is the ceiling of the continuous exit time
    (the trajectory is a single flow line while inside Z and moves outward
    monotonically once it leaves).  Returns tau per sample; points that never
    leave within the cap get tau_cap.
    """
    core = system.core
    R = system.R_Z
    X = np.array(X0, dtype=float, copy=True)
    n_points = X.shape[0]
    tau = np.full(n_points, tau_cap, dtype=np.int64)
    alive = np.ones(n_points, dtype=bool)

    t = 0
    while np.any(alive) and t < tau_cap:
        idx = np.flatnonzero(alive)
        Xa = X[idx]
        in_z_now = np.linalg.norm(Xa, axis=1) < R
        if t >= 1:
            done = ~in_z_now
            tau[idx[done]] = t
            alive[idx[done]] = False
            if not np.any(~done):
                t += 1
                continue
            idx = idx[~done]
            Xa = Xa[~done]
        # points certified to stay linear for a unit step advance cheaply;
        # in-funnel points resolve their whole passage at once
        cert = core.linear_certificate(Xa)
        deep = ~cert
        if np.any(deep):
            sub = idx[deep]
            t_exit = batch_exit_times(
                system, X[sub], R, horizon=float(tau_cap), rtol=1e-7, atol=1e-9
            )
            fired = np.isfinite(t_exit)
            steps = np.ceil(t_exit[fired] - 1e-12).astype(np.int64)
            tau[sub[fired]] = np.minimum(t + steps, tau_cap)
            tau[sub[~fired]] = tau_cap
            alive[sub] = False
        lin = idx[cert]
        if lin.size:
            X[lin] = X[lin] @ core.expA.T
        t += 1
    return tau


def local_tail_times(
    system,
    n_points: int,
    entry_height: float | None = None,
    half_width: float | None = None,
    tau_cap: int = 2000,
) -> np.ndarray:
    """Inducing times for n uniform samples on the canonical straight entry
    segment of the local model (crossing the stable axis above Z)."""
    R = system.R_Z
    entry_height = entry_height if entry_height is not None else R + 0.04
    if half_width is None:
        half_width = 0.02
    u = ((np.arange(n_points) + 0.5) / n_points * 2 - 1.0) * half_width
    X = np.column_stack([u, np.full(n_points, entry_height)])
    return segment_tail_times(system, X, tau_cap)


def itinerary_ensemble(
    system,
    n_itineraries: int,
    depth: int,
    rng_seed: int = 0,
    n_grid: int = 500,
    tau_cap: int = 400,
    epsilon: float | None = None,
) -> dict:
    """Return-time itineraries on the local model with exit-dependent affine
    reinjection.

    Each level decomposes the current entry segment by inducing time (per
    point, vectorized), records the level's exact return-time distribution,
    samples the next piece by mass, and reinjects it as a fresh entry
    segment whose height and offset are modulated by the exit position.
    Returns realized itineraries plus the per-level conditional
    distributions needed for the probability-envelope law.
    """
    from .config import CurveConfig

    epsilon = epsilon if epsilon is not None else CurveConfig().epsilon
    R = system.R_Z
    pooled: dict[int, float] = {}
    level_dists = []  # (history_id, {tau: fraction})
    realized = np.zeros((n_itineraries, depth), dtype=np.int64)
    for it in range(n_itineraries):
        rng = np.random.default_rng(np.random.SeedSequence([rng_seed, it]))
        center, height, half = 0.0, R + 0.04, epsilon
        for lvl in range(depth):
            u = center + ((np.arange(n_grid) + 0.5) / n_grid * 2 - 1.0) * half
            X = np.column_stack([u, np.full(n_grid, height)])
            tau = segment_tail_times(system, X, tau_cap)
            vals, counts = np.unique(tau, return_counts=True)
            fracs = counts / counts.sum()
            dist = {int(v): float(f) for v, f in zip(vals, fracs)}
            level_dists.append(dist)
            for v, f in dist.items():
                pooled[v] = pooled.get(v, 0.0) + f
            pick = rng.choice(vals, p=fracs)
            realized[it, lvl] = pick
            # contiguous run of the picked level set on one side
            mask = tau == pick
            runs = _active_runs(mask)
            lo, hi = runs[rng.integers(len(runs))]
            # exit data from the run's endpoints; on the local model g^t is
            # the time-t flow, so one batched integration suffices
            from .integrate import advance_batch

            ends, _, _ = advance_batch(
                system.core.field, X[[lo, hi]], float(pick),
                rtol=1e-7, atol=1e-9, h0=0.3,
            )
            img_len = float(np.linalg.norm(ends[1] - ends[0]))
            exit_mid = 0.5 * (ends[0] + ends[1])
            # abstract uniformly hyperbolic reinjection, exit-dependent
            height = R + 0.03 * (
                1.0 + 0.5 * math.sin(3.7 * exit_mid[0] + 2.1 * exit_mid[1])
            )
            center = 0.25 * epsilon * math.cos(5.3 * exit_mid[0])
            half = min(max(img_len / 2, epsilon / 2), epsilon)
    total = sum(pooled.values())
    pooled = {k: v / total for k, v in pooled.items()}
    return {
        "realized": realized,
        "level_distributions": level_dists,
        "pooled": pooled,
        "tau_cap": tau_cap,
    }


def power_envelope(pooled: dict, alpha: float, t_floor: int = 1):
    """Smallest C with pooled(T) <= C * T^-(1+1/alpha) for T >= t_floor."""
    expo = 1.0 + 1.0 / alpha
    c = 0.0
    for T, p in pooled.items():
        if T >= t_floor:
            c = max(c, p * float(T) ** expo)
    return c, expo


def envelope_report(itin: dict, alpha: float) -> dict:
    """K_fit with P[t_n = T | history] <= K_fit * p(T) for the power-law
    envelope p(T) = C T^-(1+1/alpha) fitted to the pooled distribution, and
    the mean bound on realized return times."""
    pooled = itin["pooled"]
    c_env, expo = power_envelope(pooled, alpha)
    k_fit = 0.0
    for dist in itin["level_distributions"]:
        for T, p in dist.items():
            env = c_env * float(T) ** (-expo)
            if env > 0:
                k_fit = max(k_fit, p / env)
    realized = itin["realized"]
    means = realized.mean(axis=1)
    r_pooled = sum(T * p for T, p in pooled.items())
    return {
        "K_fit": float(k_fit),
        "envelope_constant": float(c_env),
        "envelope_exponent": float(expo),
        "mean_return_pooled": float(r_pooled),
        "max_itinerary_mean": float(means.max()),
        "mean_itinerary_mean": float(means.mean()),
        "n_itineraries": int(realized.shape[0]),
        "depth": int(realized.shape[1]),
    }


def tail_histogram(tau: np.ndarray, point_mass: float = 1.0):
    """(t, count, mass) arrays from per-point inducing times."""
    tmax = int(tau.max())
    counts = np.bincount(tau, minlength=tmax + 1)
    ts = np.arange(tmax + 1)
    keep = counts > 0
    return ts[keep], counts[keep], counts[keep] * point_mass
