"""Cone pairs, pointwise expansion/contraction rates, and invariance checks.

A cone pair holds a reference unstable direction (always one-dimensional
here), a reference stable subspace, and two half-angles.  Rates are the
extrema of log ||Df v|| over the closed cones; for the tiny dimensions in
play the extremization combines the exact interior candidates (eigenvectors
of Df^T Df) with densely sampled and locally refined boundary rays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, NumericError


@dataclass(frozen=True)
class ConePair:
    e_u: np.ndarray  # unit vector
    frame_s: np.ndarray  # (d-1, d) orthonormal rows
    theta_u: float
    theta_s: float

    def __post_init__(self):
        d = self.e_u.size
        if self.frame_s.shape != (d - 1, d):
            raise GeometryError("stable frame must have d-1 orthonormal rows")
        if not (0.0 < self.theta_u < math.pi / 2 and 0.0 < self.theta_s < math.pi / 2):
            raise GeometryError("cone half-angles must lie in (0, pi/2)")
        if abs(np.linalg.norm(self.e_u) - 1.0) > 1e-9:
            raise GeometryError("e_u must be a unit vector")

    @property
    def dim(self) -> int:
        return self.e_u.size

    def axis_angle(self) -> float:
        """Angle between the unstable axis and the stable subspace."""
        proj = self.frame_s.T @ (self.frame_s @ self.e_u)
        return math.asin(min(1.0, float(np.linalg.norm(self.e_u - proj))))

    def separation(self) -> float:
        """Minimal angle between the closed cones (may be <= 0 if they meet)."""
        return self.axis_angle() - self.theta_u - self.theta_s


@dataclass(frozen=True)
class RateSample:
    lambda_u: float
    lambda_s: float
    defect: float
    lam: float
    theta: float


def pair_from_axes(e_u, frame_s, theta_u, theta_s) -> ConePair:
    return ConePair(
        e_u=np.asarray(e_u, dtype=float),
        frame_s=np.asarray(frame_s, dtype=float).reshape(-1, e_u.shape[-1]),
        theta_u=float(theta_u),
        theta_s=float(theta_s),
    )


def base_pair(system, x, theta_u: float, theta_s: float) -> ConePair:
    e_u, frame_s = system.cone_axes(x)
    return pair_from_axes(e_u, frame_s, theta_u, theta_s)


def _complete_frame(e_u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of e_u (rows)."""
    d = e_u.size
    vecs = [e_u / np.linalg.norm(e_u)]
    for i in range(d):
        v = np.eye(d)[i]
        for w in vecs:
            v = v - (v @ w) * w
        n = np.linalg.norm(v)
        if n > 1e-8:
            vecs.append(v / n)
        if len(vecs) == d:
            break
    return np.stack(vecs[1:])


def _u_cone_dirs(pair: ConePair, n_phi: int, n_t: int = 8) -> np.ndarray:
    """Unit directions filling the closed unstable cone, boundary included."""
    comp = _complete_frame(pair.e_u)
    ts = np.linspace(0.0, pair.theta_u, n_t)
    if pair.dim == 2:
        ts = np.concatenate([-ts[::-1], ts])
        return np.cos(ts)[:, None] * pair.e_u + np.sin(ts)[:, None] * comp[0]
    phis = np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
    n = np.cos(phis)[:, None] * comp[0] + np.sin(phis)[:, None] * comp[1]
    dirs = (
        np.cos(ts)[:, None, None] * pair.e_u
        + np.sin(ts)[:, None, None] * n[None, :, :]
    )
    return dirs.reshape(-1, pair.dim)


def _s_cone_dirs(pair: ConePair, n_phi: int, n_t: int = 8) -> np.ndarray:
    """Unit directions filling the closed stable cone around the subspace."""
    d = pair.dim
    if d == 2:
        w = pair.frame_s[0]
        comp = _complete_frame(w)[0]
        ts = np.linspace(-pair.theta_s, pair.theta_s, 2 * n_t)
        return np.cos(ts)[:, None] * w + np.sin(ts)[:, None] * comp
    normal = np.cross(pair.frame_s[0], pair.frame_s[1])
    normal /= np.linalg.norm(normal)
    phis = np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
    w = (
        np.cos(phis)[:, None] * pair.frame_s[0]
        + np.sin(phis)[:, None] * pair.frame_s[1]
    )
    ts = np.linspace(-pair.theta_s, pair.theta_s, 2 * n_t)
    dirs = np.cos(ts)[:, None, None] * w[None, :, :] + np.sin(ts)[
        :, None, None
    ] * normal
    return dirs.reshape(-1, d)


def _u_boundary_rays(pair: ConePair, n_phi: int) -> np.ndarray:
    comp = _complete_frame(pair.e_u)
    if pair.dim == 2:
        t = pair.theta_u
        return np.stack(
            [
                math.cos(t) * pair.e_u + math.sin(t) * comp[0],
                math.cos(t) * pair.e_u - math.sin(t) * comp[0],
            ]
        )
    phis = np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
    n = np.cos(phis)[:, None] * comp[0] + np.sin(phis)[:, None] * comp[1]
    return math.cos(pair.theta_u) * pair.e_u + math.sin(pair.theta_u) * n


def _s_boundary_rays(pair: ConePair, n_phi: int) -> np.ndarray:
    d = pair.dim
    if d == 2:
        w = pair.frame_s[0]
        comp = _complete_frame(w)[0]
        t = pair.theta_s
        return np.stack(
            [
                math.cos(t) * w + math.sin(t) * comp,
                math.cos(t) * w - math.sin(t) * comp,
            ]
        )
    normal = np.cross(pair.frame_s[0], pair.frame_s[1])
    normal /= np.linalg.norm(normal)
    phis = np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
    w = (
        np.cos(phis)[:, None] * pair.frame_s[0]
        + np.sin(phis)[:, None] * pair.frame_s[1]
    )
    out = np.concatenate(
        [
            math.cos(pair.theta_s) * w + math.sin(pair.theta_s) * normal,
            math.cos(pair.theta_s) * w - math.sin(pair.theta_s) * normal,
        ]
    )
    return out


def _refine_extremum(f, x0: float, lo: float, hi: float, iters: int, minimize: bool):
    """Golden-section refinement of a 1d extremum near x0."""
    span = (hi - lo) * 0.02
    a, b = max(lo, x0 - span), min(hi, x0 + span)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    for _ in range(iters):
        fc, fd = f(c), f(d)
        better = fc < fd if minimize else fc > fd
        if better:
            b, d = d, c
            c = b - invphi * (b - a)
        else:
            a, c = c, d
            d = a + invphi * (b - a)
    xm = 0.5 * (a + b)
    return xm, f(xm)


def _extremize_over_u_cone(M: np.ndarray, pair: ConePair, cfg, minimize=True):
    """Extremum of ||M v|| over the closed unstable cone."""
    Q = M.T @ M
    best = None

    def consider(val):
        nonlocal best
        if best is None or (val < best if minimize else val > best):
            best = val

    # interior candidates: eigenvectors of Q inside the open cone
    w, V = np.linalg.eigh(Q)
    for i in range(V.shape[1]):
        v = V[:, i]
        ang = math.acos(min(1.0, abs(float(v @ pair.e_u))))
        if ang < pair.theta_u:
            consider(math.sqrt(max(w[i], 0.0)))
    # axis itself
    consider(float(np.linalg.norm(M @ pair.e_u)))
    # boundary scan with refinement
    comp = _complete_frame(pair.e_u)
    t = pair.theta_u
    if pair.dim == 2:
        angles = np.linspace(-t, t, cfg.n_sphere)

        def stretch2(a):
            v = math.cos(a) * pair.e_u + math.sin(a) * comp[0]
            return float(np.linalg.norm(M @ v))

        vals = [stretch2(a) for a in angles]
        k = int(np.argmin(vals) if minimize else np.argmax(vals))
        _, val = _refine_extremum(
            stretch2, float(angles[k]), -t, t, cfg.refine_iters, minimize
        )
        consider(val)
    else:

        def stretch3(phi):
            n = math.cos(phi) * comp[0] + math.sin(phi) * comp[1]
            v = math.cos(t) * pair.e_u + math.sin(t) * n
            return float(np.linalg.norm(M @ v))

        phis = np.linspace(0.0, 2 * math.pi, cfg.n_sphere, endpoint=False)
        n = np.cos(phis)[:, None] * comp[0] + np.sin(phis)[:, None] * comp[1]
        rays = math.cos(t) * pair.e_u + math.sin(t) * n
        vals = np.linalg.norm(rays @ M.T, axis=1)
        k = int(np.argmin(vals) if minimize else np.argmax(vals))
        _, val = _refine_extremum(
            stretch3, float(phis[k]), 0.0, 2 * math.pi, cfg.refine_iters, minimize
        )
        consider(val)
    return best


def _extremize_over_s_cone(M: np.ndarray, pair: ConePair, cfg, minimize=False):
    """Extremum of ||M v|| over the closed stable cone (wedge around E_s)."""
    Q = M.T @ M
    best = None

    def consider(val):
        nonlocal best
        if best is None or (val < best if minimize else val > best):
            best = val

    P = pair.frame_s.T @ pair.frame_s
    w, V = np.linalg.eigh(Q)
    for i in range(V.shape[1]):
        v = V[:, i]
        sin_ang = min(1.0, float(np.linalg.norm(v - P @ v)))
        if math.asin(sin_ang) < pair.theta_s:
            consider(math.sqrt(max(w[i], 0.0)))
    d = pair.dim
    if d == 2:
        wvec = pair.frame_s[0]
        comp = _complete_frame(wvec)[0]
        t = pair.theta_s

        def stretch2(a):
            v = math.cos(a) * wvec + math.sin(a) * comp
            return float(np.linalg.norm(M @ v))

        angles = np.linspace(-t, t, cfg.n_sphere)
        vals = [stretch2(a) for a in angles]
        k = int(np.argmin(vals) if minimize else np.argmax(vals))
        _, val = _refine_extremum(
            stretch2, float(angles[k]), -t, t, cfg.refine_iters, minimize
        )
        consider(val)
    else:
        normal = np.cross(pair.frame_s[0], pair.frame_s[1])
        normal /= np.linalg.norm(normal)

        def stretch3(params):
            phi, tt = params
            wv = math.cos(phi) * pair.frame_s[0] + math.sin(phi) * pair.frame_s[1]
            v = math.cos(tt) * wv + math.sin(tt) * normal
            return float(np.linalg.norm(M @ v))

        nphi = max(cfg.n_sphere // 8, 32)
        nt = 17
        phis = np.linspace(0.0, 2 * math.pi, nphi, endpoint=False)
        ts = np.linspace(-pair.theta_s, pair.theta_s, nt)
        wv = (
            np.cos(phis)[:, None] * pair.frame_s[0]
            + np.sin(phis)[:, None] * pair.frame_s[1]
        )
        dirs = (
            np.cos(ts)[:, None, None] * wv[None, :, :]
            + np.sin(ts)[:, None, None] * normal
        ).reshape(-1, 3)
        vals = np.linalg.norm(dirs @ M.T, axis=1).reshape(nt, nphi)
        k = np.unravel_index(
            np.argmin(vals) if minimize else np.argmax(vals), vals.shape
        )
        phi0, t0 = float(phis[k[1]]), float(ts[k[0]])

        def along_phi(phi):
            return stretch3((phi, t0))

        phi1, _ = _refine_extremum(
            along_phi, phi0, 0.0, 2 * math.pi, cfg.refine_iters, minimize
        )

        def along_t(tt):
            return stretch3((phi1, tt))

        t1, val = _refine_extremum(
            along_t, t0, -pair.theta_s, pair.theta_s, cfg.refine_iters, minimize
        )
        consider(val)
    return best


def cone_rates(system, x, pair: ConePair, cfg=None, jac=None) -> RateSample:
    """Pointwise rates: lambda_u, lambda_s over the cones, defect, effective
    rate, and the cone separation angle."""
    from .config import ConeConfig

    cfg = cfg or ConeConfig()
    sep = pair.separation()
    if sep <= 0.0:
        raise GeometryError("cones overlap or touch (separation <= 0)")
    M = system.jacobian(np.asarray(x, dtype=float)) if jac is None else jac
    lu = math.log(_extremize_over_u_cone(M, pair, cfg, minimize=True))
    ls = math.log(_extremize_over_s_cone(M, pair, cfg, minimize=False))
    alpha = system.spec.alpha
    defect = max(0.0, ls - lu) / alpha
    lam = min(lu - defect, -ls)
    return RateSample(lambda_u=lu, lambda_s=ls, defect=defect, lam=lam, theta=sep)


def rates_from_jacobian(M: np.ndarray, pair: ConePair, alpha: float, cfg) -> RateSample:
    """Same as cone_rates but with the jacobian given explicitly."""
    sep = pair.separation()
    if sep <= 0.0:
        raise GeometryError("cones overlap or touch (separation <= 0)")
    lu = math.log(_extremize_over_u_cone(M, pair, cfg, minimize=True))
    ls = math.log(_extremize_over_s_cone(M, pair, cfg, minimize=False))
    defect = max(0.0, ls - lu) / alpha
    lam = min(lu - defect, -ls)
    return RateSample(lambda_u=lu, lambda_s=ls, defect=defect, lam=lam, theta=sep)


def _angle_to_axis(vecs: np.ndarray, axis: np.ndarray) -> np.ndarray:
    cosv = np.abs(vecs @ axis) / np.linalg.norm(vecs, axis=1)
    return np.arccos(np.clip(cosv, -1.0, 1.0))


def _angle_to_subspace(vecs: np.ndarray, frame: np.ndarray) -> np.ndarray:
    proj = vecs @ frame.T @ frame
    sinv = np.linalg.norm(vecs - proj, axis=1) / np.linalg.norm(vecs, axis=1)
    return np.arcsin(np.clip(sinv, 0.0, 1.0))


def push_pair(M: np.ndarray, pair: ConePair, n_rays: int = 64) -> ConePair:
    """Image cone pair under M.

    Unstable: circumscribed circular hull of the image cone around M e_u.
    Stable: the image subspace M(E_s), with the largest width not exceeding
    the previous one whose M^{-1}-preimage still lies inside the old stable
    cone (so the pulled-back family stays invariant).
    """
    if np.abs(np.linalg.det(M)) < 1e-14:
        raise NumericError("jacobian numerically singular")
    new_u = M @ pair.e_u
    new_u /= np.linalg.norm(new_u)
    rays_u = _u_boundary_rays(pair, n_rays) @ M.T
    theta_u = float(np.max(_angle_to_axis(rays_u, new_u)))
    frame_img = pair.frame_s @ M.T
    q, _ = np.linalg.qr(frame_img.T)
    new_frame = q.T[: pair.frame_s.shape[0]]
    theta_u = min(max(theta_u, 1e-6), math.pi / 2 - 1e-6)
    Minv = np.linalg.inv(M)
    w = pair.theta_s
    trial = ConePair(e_u=new_u, frame_s=new_frame, theta_u=theta_u, theta_s=w)
    for _ in range(40):
        rays_back = _s_boundary_rays(trial, n_rays) @ Minv.T
        if float(_angle_to_subspace(rays_back, pair.frame_s).max()) <= pair.theta_s:
            break
        w = max(w * 0.7, 1e-6)
        trial = ConePair(e_u=new_u, frame_s=new_frame, theta_u=theta_u, theta_s=w)
        if w <= 1e-6:
            break
    return trial


def push_cone(system, x, pair: ConePair, n_rays: int = 256, target: ConePair | None = None):
    """Push the cone pair at x forward by Dg(x) and report containment margins
    against the cone pair at g(x).

    Returns (pushed pair at g(x), report dict).  Margins are positive iff the
    image of the unstable cone lies strictly inside the target unstable cone
    and the Dg^{-1} preimage of the target stable cone lies strictly inside
    the stable cone at x.
    """
    x = np.asarray(x, dtype=float)
    M = system.jacobian(x)
    if np.abs(np.linalg.det(M)) < 1e-14:
        raise NumericError("jacobian numerically singular")
    gx = system.step(x)
    if target is None:
        target = base_pair(system, gx, pair.theta_u, pair.theta_s)
    rays_u = _u_boundary_rays(pair, n_rays) @ M.T
    ang_u = _angle_to_axis(rays_u, target.e_u)
    margin_u = float(target.theta_u - ang_u.max())
    Minv = np.linalg.inv(M)
    rays_s = _s_boundary_rays(target, n_rays) @ Minv.T
    ang_s = _angle_to_subspace(rays_s, pair.frame_s)
    margin_s = float(pair.theta_s - ang_s.max())
    report = {
        "margin_u": margin_u,
        "margin_s": margin_s,
        # equality (margin 0, e.g. at the fixed point) counts as contained
        "contained": bool(margin_u > -1e-12 and margin_s > -1e-12),
        "n_rays": int(n_rays),
    }
    return push_pair(M, pair, n_rays=n_rays), report


def first_return(system, x, z_cap: int = 10_000):
    """First-return map G on U \\ Z: (G(x), DG(x), return time)."""
    x = np.asarray(x, dtype=float)
    if bool(system.in_Z(x[None, :])[0]):
        raise GeometryError("first-return map is defined on U \\ Z")
    DG = np.eye(system.dim)
    y = x
    for k in range(1, z_cap + 1):
        DG = system.jacobian(y) @ DG
        y = system.step(y)
        if not bool(system.in_Z(y[None, :])[0]):
            return y, DG, k
    raise BoundedReturnError(z_cap)


class BoundedReturnError(RuntimeError):
    def __init__(self, cap):
        super().__init__(f"orbit did not return to U \\ Z within {cap} steps")
        self.cap = cap


def check_c1(system, n_samples: int, rng, cfg=None, width_u=None, width_s=None,
             return_cap: int = 600) -> dict:
    """Monte-Carlo certificate for the cone condition of the first-return map.

    Samples points in U \\ Z, computes one first-return step each, and checks
    strict invariance of the width-gamma cones with margins.
    """
    from .config import ConeConfig

    cfg = cfg or ConeConfig()
    wu = width_u if width_u is not None else cfg.width_c1
    ws = width_s if width_s is not None else cfg.width_c1
    from .systems import sample_states

    X = sample_states(system, n_samples, rng, outside_z=True)
    worst_u = math.inf
    worst_s = math.inf
    violations = []
    skipped = 0
    for i in range(n_samples):
        try:
            gx, DG, tau = first_return(system, X[i], z_cap=return_cap)
        except BoundedReturnError:
            skipped += 1
            continue
        pair = base_pair(system, X[i], wu, ws)
        target = base_pair(system, gx, wu, ws)
        rays_u = _u_boundary_rays(pair, cfg.n_rays) @ DG.T
        margin_u = float(target.theta_u - _angle_to_axis(rays_u, target.e_u).max())
        rays_s = _s_boundary_rays(target, cfg.n_rays) @ np.linalg.inv(DG).T
        margin_s = float(pair.theta_s - _angle_to_subspace(rays_s, pair.frame_s).max())
        worst_u = min(worst_u, margin_u)
        worst_s = min(worst_s, margin_s)
        if margin_u <= 0.0 or margin_s <= 0.0:
            violations.append(
                {"x": X[i].tolist(), "margin_u": margin_u, "margin_s": margin_s,
                 "return_time": int(tau)}
            )
    return {
        "n_samples": int(n_samples),
        "n_checked": int(n_samples - skipped),
        "n_skipped": int(skipped),
        "width_u": float(wu),
        "width_s": float(ws),
        "worst_margin_u": worst_u,
        "worst_margin_s": worst_s,
        "violations": len(violations),
        "violation_locations": violations[:32],
    }
