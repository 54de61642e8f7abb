"""Orbit rate logs, Pliss-type time scanners, and effective-hyperbolicity
statistics.

The scanners are exact combinatorial operations on finite sequences; the
statistics estimate asymptotic densities by windowed averages over the last
part of the orbit, with the window recorded in the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import ConePair, base_pair, push_pair, rates_from_jacobian
from .config import ConeConfig, EhtConfig
from .errors import DomainError, IntegrityError


@dataclass
class OrbitLog:
    """Per-iterate rate records along an orbit of length n.

    Arrays are indexed by step k = 0..n-1; entry k describes the derivative
    of the map from x_k to x_{k+1}.  lambda_e is the effective-rate sequence
    with the angle cutoff theta_bar and penalty -L''.
    """

    x0: np.ndarray
    states: np.ndarray  # (n+1, d)
    lambda_u: np.ndarray
    lambda_s: np.ndarray
    defect: np.ndarray
    lam: np.ndarray
    theta: np.ndarray
    lambda_e: np.ndarray
    theta_bar: float
    l_dblprime: float
    in_z: np.ndarray  # bool, whether x_k lies in Z
    jacobians: np.ndarray  # (n, d, d)

    @property
    def n(self) -> int:
        return self.lambda_u.size

    def to_rows(self):
        """Rows (x coords..., lambda_u, lambda_s, defect, lambda, theta)."""
        for k in range(self.n):
            yield list(self.states[k]) + [
                self.lambda_u[k],
                self.lambda_s[k],
                self.defect[k],
                self.lam[k],
                self.theta[k],
            ]


@dataclass
class EhtResult:
    indices: np.ndarray  # sorted, 1-based iterate indices
    lower_density_estimate: float
    upper_density_estimate: float
    n: int
    window: int
    burn_in: int


def _windowed_density(indices: np.ndarray, n: int, window: int, burn_in: int):
    """(min, max) over sliding windows of the indicator frequency."""
    mask = np.zeros(n + 1, dtype=float)
    mask[indices] = 1.0
    lo = max(burn_in, 1)
    if n - lo < window or window < 1:
        frac = mask[1:].sum() / max(n, 1)
        return frac, frac
    csum = np.concatenate([[0.0], np.cumsum(mask)])
    counts = csum[lo + window : n + 2] - csum[lo : n + 2 - window]
    return float(counts.min() / window), float(counts.max() / window)


def _result(indices: np.ndarray, n: int, cfg: EhtConfig) -> EhtResult:
    window = max(int(cfg.window_fraction * n), 1)
    burn_in = int(cfg.burn_in_fraction * n)
    lo, hi = _windowed_density(indices, n, window, burn_in)
    return EhtResult(
        indices=indices,
        lower_density_estimate=lo,
        upper_density_estimate=hi,
        n=n,
        window=window,
        burn_in=burn_in,
    )


def effective_rate_penalty(system, alpha: float) -> float:
    """L'' = max(L'/alpha, L(1 + 2/alpha)) from sampled norm bounds."""
    hb = system.holder_bounds()
    return max(hb["L_prime"] / alpha, hb["L"] * (1.0 + 2.0 / alpha))


def orbit_log(
    system,
    x0: np.ndarray,
    n: int,
    cones: ConePair | None = None,
    cone_cfg: ConeConfig | None = None,
    theta_bar: float | None = None,
) -> OrbitLog:
    """Follow an orbit, recording cone rates at every step.

    Rates are taken over the base measurable cone family (narrow cones around
    the angular direction and the cross-section plane); the family is not
    assumed invariant, which the pointwise rate definitions do not require.
    Invariance itself is the business of push_cone / check_c1.
    """
    cone_cfg = cone_cfg or ConeConfig()
    ecfg = EhtConfig()
    theta_bar = ecfg.theta_bar if theta_bar is None else theta_bar
    x0 = np.asarray(x0, dtype=float)
    if n < 1:
        raise DomainError("orbit length must be >= 1")
    if not bool(system.in_domain(x0[None, :])[0]):
        raise DomainError("x0 outside the trapping region")
    d = system.dim
    alpha = system.spec.alpha
    l_dbl = effective_rate_penalty(system, alpha)

    states = np.empty((n + 1, d))
    states[0] = x0
    jacs = np.empty((n, d, d))
    lu = np.empty(n)
    ls = np.empty(n)
    de = np.empty(n)
    la = np.empty(n)
    th = np.empty(n)
    in_z = np.zeros(n, dtype=bool)

    x = x0
    for k in range(n):
        in_z[k] = bool(system.in_Z(x[None, :])[0])
        pair = cones or base_pair(system, x, cone_cfg.width_u, cone_cfg.width_s)
        M = system.jacobian(x)
        rs = rates_from_jacobian(M, pair, alpha, cone_cfg)
        lu[k], ls[k], de[k], la[k], th[k] = (
            rs.lambda_u,
            rs.lambda_s,
            rs.defect,
            rs.lam,
            rs.theta,
        )
        jacs[k] = M
        x = system.step(x)
        if not bool(system.in_domain(x[None, :])[0]):
            raise IntegrityError("orbit escaped the trapping region")
        states[k + 1] = x

    lam_e = np.where(th >= theta_bar, lu - de, -l_dbl)
    return OrbitLog(
        x0=x0,
        states=states,
        lambda_u=lu,
        lambda_s=ls,
        defect=de,
        lam=la,
        theta=th,
        lambda_e=lam_e,
        theta_bar=theta_bar,
        l_dblprime=l_dbl,
        in_z=in_z,
        jacobians=jacs,
    )


def pliss_times(a, lambda_bar: float, cfg: EhtConfig | None = None) -> EhtResult:
    """Times n with sum_{j=k}^{n-1} a_j >= lambda_bar*(n-k) for all 0<=k<n.

    Single running-minimum scan; equals the quadratic brute force exactly.
    """
    cfg = cfg or EhtConfig()
    a = np.asarray(a, dtype=float)
    n = a.size
    if n == 0:
        return _result(np.array([], dtype=int), 0, cfg)
    b = np.concatenate([[0.0], np.cumsum(a - lambda_bar)])
    run_max = np.maximum.accumulate(b[:-1])
    hits = np.flatnonzero(b[1:] >= run_max) + 1
    return _result(hits, n, cfg)


def pliss_times_brute(a, lambda_bar: float) -> np.ndarray:
    """O(n^2) reference: literal check of every suffix."""
    a = np.asarray(a, dtype=float)
    n = a.size
    out = []
    for m in range(1, n + 1):
        ok = True
        for k in range(m):
            if a[k:m].sum() < lambda_bar * (m - k) - 1e-12:
                ok = False
                break
        if ok:
            out.append(m)
    return np.array(out, dtype=int)


def gamma_s_times(
    log: OrbitLog,
    big_c: float,
    lambda_bar: float,
    q: int,
    cone_cfg: ConeConfig | None = None,
    cfg: EhtConfig | None = None,
    n_rays: int = 64,
) -> EhtResult:
    """Times n whose backward window of length q expands stable-cone vectors:
    ||Dg^{-k}(g^n x) v|| >= C e^{lambda_bar k} ||v|| for 0 <= k <= min(q, n).

    Verified on sampled boundary rays and interior directions of the stable
    cone at g^n x (the base family off Z, pushed family inside Z is not
    retained here; rays are taken in the base stable cone).
    """
    if q < 0:
        raise DomainError("q must be >= 0")
    cfg = cfg or EhtConfig()
    cone_cfg = cone_cfg or ConeConfig()
    n = log.n
    sysdim = log.states.shape[1]
    hits = []
    inv = np.linalg.inv(log.jacobians)  # inv[k] = Dg(x_k)^{-1}
    for m in range(max(q, 1), n + 1):
        pair = _pair_at(log, m, cone_cfg)
        rays = _stable_probe_rays(pair, n_rays)
        ok = big_c <= 1.0 + 1e-12  # k = 0 term
        if not ok:
            continue
        V = rays.copy()
        good = True
        for k in range(1, min(q, m) + 1):
            V = V @ inv[m - k].T
            norms = np.linalg.norm(V, axis=1)
            if norms.min() < big_c * math.exp(lambda_bar * k) - 1e-12:
                good = False
                break
        if good:
            hits.append(m)
    return _result(np.array(hits, dtype=int), n, cfg)


def _pair_at(log: OrbitLog, m: int, cone_cfg: ConeConfig) -> ConePair:
    """Base cone pair at the orbit point x_m (axes depend on position only)."""
    from .cones import pair_from_axes

    d = log.states.shape[1]
    if d == 2:
        e_u = np.array([1.0, 0.0])
        frame = np.array([[0.0, 1.0]])
    else:
        e_u = np.array([1.0, 0.0, 0.0])
        frame = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return pair_from_axes(e_u, frame, cone_cfg.width_u, cone_cfg.width_s)


def _stable_probe_rays(pair: ConePair, n_rays: int) -> np.ndarray:
    from .cones import _s_boundary_rays

    rays = _s_boundary_rays(pair, max(n_rays // 2, 4))
    core = pair.frame_s
    return np.concatenate([rays, core])


def eh_statistics(
    log: OrbitLog,
    lambda_bar: float,
    big_c: float,
    q_list,
    theta_bar_list,
    cfg: EhtConfig | None = None,
    cone_cfg: ConeConfig | None = None,
) -> dict:
    """EH1 running mean, EH1' joint lower densities per q, EH2 angle
    frequencies per threshold."""
    cfg = cfg or EhtConfig()
    n = log.n
    running_mean = np.cumsum(log.lam) / np.arange(1, n + 1)
    gamma_e = pliss_times(log.lambda_e, lambda_bar, cfg)
    eh1p = []
    for q in q_list:
        gs = gamma_s_times(log, big_c, lambda_bar, int(q), cone_cfg, cfg)
        joint = np.intersect1d(gamma_e.indices, gs.indices)
        res = _result(joint, n, cfg)
        eh1p.append(
            {
                "q": int(q),
                "density_lower": res.lower_density_estimate,
                "density_upper": res.upper_density_estimate,
            }
        )
    eh2 = []
    for tb in theta_bar_list:
        idx = np.flatnonzero(log.theta < tb) + 1
        res = _result(idx, n, cfg)
        eh2.append({"theta_bar": float(tb), "freq": res.upper_density_estimate})
    return {
        "n": int(n),
        "lambda_bar": float(lambda_bar),
        "C": float(big_c),
        "eh1_running_mean": running_mean,
        "eh1_final_mean": float(running_mean[-1]),
        "eh1_prime": eh1p,
        "eh2": eh2,
        "window": int(max(int(cfg.window_fraction * n), 1)),
        "burn_in": int(cfg.burn_in_fraction * n),
        "l_dblprime": float(log.l_dblprime),
        "theta_bar_cutoff": float(log.theta_bar),
    }
