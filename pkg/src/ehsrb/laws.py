"""Closed-form passage laws and their verification against integrated traces.

Each checker compares an independently computed quantity (trapezoidal
quadrature on the dense trace, finite differences, root-finding on the
monotone angle) against the analytic relation governing passages through the
neutral region.  "Uniform over all trajectories" statements are
operationalized as ensemble maxima showing no growth trend across passage-
duration bins (regression slope whose 95% CI contains 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.stats import t as t_dist

from .config import OracleConfig
from .errors import DomainError, PreconditionError
from .flow import FlowTrace, full_passage, integrate_passage

_FULL_PASSAGE_TOL = 1e-7


def _xi(spec, sin2_theta: np.ndarray) -> np.ndarray:
    """xi(tan theta) = (beta tan^2 - gamma)/(tan^2 + 1), via sin^2 theta."""
    return spec.beta * sin2_theta - spec.gamma * (1.0 - sin2_theta)


def _trapz_between(trace: FlowTrace, values: np.ndarray, t1: float, t2: float):
    t = trace.t
    if not (t[0] - 1e-12 <= t1 < t2 <= t[-1] + 1e-12):
        raise PreconditionError("times outside the trace")
    grid = np.concatenate([[t1], t[(t > t1) & (t < t2)], [t2]])
    vals = np.interp(grid, t, values)
    return float(np.trapz(vals, grid))


def check_tantheta_law(trace: FlowTrace, t1: float, t2: float) -> float:
    """Relative residual of tan theta(t2) = e^{-J(t1,t2)} tan theta(t1), with
    J from trapezoidal quadrature on the trace."""
    if np.all(trace.tan_theta < 1e-300):
        raise DomainError("degenerate trace with tan theta == 0 (axis law applies)")
    tt1, tt2 = np.interp([t1, t2], trace.t, trace.tan_theta)
    if tt1 <= 0.0:
        raise DomainError("tan theta(t1) must be positive")
    spec = trace.spec
    J = spec.lambda_total * _trapz_between(
        trace, trace.norm_x**spec.alpha, t1, t2
    ) if t2 > t1 else 0.0
    return abs(tt2 - math.exp(-J) * tt1) / tt1


def check_radial_ode(trace: FlowTrace) -> dict:
    """Finite-difference residual of d/dt ||x||^-alpha = alpha*xi(tan theta)."""
    if trace.n < 10:
        raise PreconditionError("trace too short for the radial check")
    spec = trace.spec
    m = trace.norm_x ** (-spec.alpha)
    h = trace.t[1] - trace.t[0]
    dm = (m[2:] - m[:-2]) / (2 * h)
    sin2 = np.sum(trace.x[:, 1:] ** 2, axis=1) / trace.norm_x**2
    rhs = spec.alpha * _xi(spec, sin2[1:-1])
    resid = np.abs(dm - rhs)
    return {
        "max_residual": float(resid.max()),
        "residual_over_h2": float(resid.max() / h**2),
        "spacing": float(h),
    }


def _require_full_passage(trace: FlowTrace):
    r0 = trace.spec.r0
    if abs(trace.norm_x[0] - r0) > 1e-6 * r0 or abs(trace.norm_x[-1] - r0) > 1e-6 * r0:
        raise PreconditionError("trace is not a full passage (must enter and exit Y)")


def check_chevron_bounds(trace: FlowTrace, kappa: float, floor: float = 0.0) -> dict:
    """Two-sided linear bounds on ||x||^-alpha split at kappa*T0.

    The upper bounds hold exactly (slopes alpha*beta and alpha*gamma); the
    largest beta', gamma' making the lower bounds hold are fitted and
    compared to the floor.  Also verifies concavity.
    """
    _require_full_passage(trace)
    spec = trace.spec
    a = spec.alpha
    m = trace.norm_x ** (-a)
    c0 = spec.r0 ** (-a)
    t = trace.t
    T0 = trace.T0
    left = t <= kappa * T0
    right = ~left
    up_left = m[left] - (c0 + a * spec.beta * t[left])
    up_right = m[right] - (c0 + a * spec.gamma * (T0 - t[right]))
    tol = 1e-7 * max(c0, 1.0)
    interior_l = left & (t > 1e-12 * max(T0, 1.0))
    interior_r = right & (t < T0 * (1 - 1e-12))
    beta_p = float(np.min((m[interior_l] - c0) / (a * t[interior_l]))) if np.any(
        interior_l
    ) else float("inf")
    gamma_p = (
        float(np.min((m[interior_r] - c0) / (a * (T0 - t[interior_r]))))
        if np.any(interior_r)
        else float("inf")
    )
    second = np.diff(m, 2)
    h = t[1] - t[0]
    return {
        "upper_ok": bool(up_left.max(initial=-np.inf) <= tol
                         and up_right.max(initial=-np.inf) <= tol),
        "upper_margin": float(max(up_left.max(initial=-np.inf),
                                  up_right.max(initial=-np.inf))),
        "beta_prime": beta_p,
        "gamma_prime": gamma_p,
        "above_floor": bool(min(beta_p, gamma_p) >= floor),
        "concave_ok": bool(np.all(second <= 1e-6 * h**2 * max(c0, 1.0) + 1e-12)),
        "kappa": float(kappa),
        "T0": float(T0),
    }


def locate_angle_time(trace: FlowTrace, s: float, xtol: float = 1e-10) -> float:
    """Time at which tan theta equals s, by bracketed root-finding on the
    dense output (tan theta is strictly decreasing)."""
    tt = trace.tan_theta
    if not (tt[-1] < s < tt[0]):
        raise PreconditionError(
            "s outside (tan theta(T0), tan theta(0)); no crossing"
        )
    k = int(np.searchsorted(-tt, -s))  # first index with tt <= s
    lo, hi = trace.t[max(k - 1, 0)], trace.t[min(k, trace.n - 1)]
    if trace.dense is None:
        return float(np.interp(-s, -tt, trace.t))
    d = trace.x.shape[1]

    def f(tau):
        z = trace.dense(tau)
        return float(np.linalg.norm(z[1:d]) / abs(z[0])) - s

    if f(lo) * f(hi) > 0:
        return float(np.interp(-s, -tt, trace.t))
    return float(brentq(f, lo, hi, xtol=xtol))


def check_ts_bounds(trace: FlowTrace, s: float) -> dict:
    """T_s vs the chi/chi' multiples of T0, per the sign of xi(s)."""
    _require_full_passage(trace)
    spec = trace.spec
    g, b = spec.gamma, spec.beta
    Ts = locate_angle_time(trace, s)
    T0 = trace.T0
    if s * s > g / b:
        chi = g / (g + b) * (1.0 + 1.0 / (s * s))
        ok = Ts <= chi * T0 + 1e-9 * max(T0, 1.0)
        return {"side": "upper", "T_s": Ts, "bound": chi * T0, "ok": bool(ok),
                "chi": chi, "T0": T0}
    chi_p = (g - b * s * s) / (g + b)
    ok = Ts >= chi_p * T0 - 1e-9 * max(T0, 1.0)
    return {"side": "lower", "T_s": Ts, "bound": chi_p * T0, "ok": bool(ok),
            "chi_prime": chi_p, "T0": T0}


def check_tanrho_bounds(trace: FlowTrace) -> dict:
    """Invariance of the cone tan rho <= alpha/2 and the two-regime decay
    envelope split at tan theta = 1."""
    spec = trace.spec
    half = spec.alpha / 2
    if trace.tan_rho[0] > half * (1 + 1e-9) + 1e-12:
        raise PreconditionError("v0 outside the unstable cone (tan rho > alpha/2)")
    tol = 1e-8 + 1e-6 * half
    cone_ok = bool(np.all(trace.tan_rho <= half + tol))
    if trace.tan_theta[0] > 1.0 > trace.tan_theta[-1]:
        T1 = locate_angle_time(trace, 1.0)
    elif trace.tan_theta[0] <= 1.0:
        T1 = 0.0
    else:
        T1 = trace.T0
    J = trace.J
    J1 = float(np.interp(T1, trace.t, J))
    rho0 = trace.tan_rho[0]
    rho_T1 = float(np.interp(T1, trace.t, trace.tan_rho))
    env = np.where(
        trace.t <= T1,
        rho0 * np.exp(-J) + half * np.exp(-(J1 - J)),
        (rho_T1 + spec.alpha * (J - J1)) * np.exp(-(J - J1)),
    )
    gap = env - trace.tan_rho
    return {
        "cone_ok": cone_ok,
        "cone_margin": float((half + tol - trace.tan_rho).min()),
        "envelope_ok": bool(np.all(gap >= -tol)),
        "envelope_margin": float(gap.min()),
        "T1": float(T1),
    }


def integral_tan_rho(trace: FlowTrace, t1: float | None = None,
                     t2: float | None = None) -> float:
    """Trapezoidal value of int ||x||^alpha tan rho dt."""
    t1 = trace.t[0] if t1 is None else t1
    t2 = trace.t[-1] if t2 is None else t2
    vals = trace.norm_x ** trace.spec.alpha * trace.tan_rho
    return _trapz_between(trace, vals, t1, t2)


def check_int_tan_theta(trace: FlowTrace, s: float) -> dict:
    """int_{T_s}^{T_0} ||x||^alpha tan theta dt <= s/(gamma+beta)."""
    spec = trace.spec
    Ts = locate_angle_time(trace, s)
    vals = trace.norm_x**spec.alpha * trace.tan_theta
    val = _trapz_between(trace, vals, Ts, trace.T0)
    bound = s / (spec.gamma + spec.beta)
    return {"value": val, "bound": bound,
            "ok": bool(val <= bound + 1e-8 * max(bound, 1.0)), "T_s": Ts}


def expansion_along_passage(trace: FlowTrace, s_factor: float = 2.0) -> dict:
    """Accumulated <vhat, L_vhat X> vs log ||v(T0)||/||v(0)||, and the escape
    lower bound with the (1 + 1/alpha) log term."""
    _require_full_passage(trace)
    spec = trace.spec
    expansion = float(trace.expansion[-1])
    logv = float(
        np.log(np.linalg.norm(trace.v[-1]) / np.linalg.norm(trace.v[0]))
    )
    s = s_factor * math.sqrt(spec.gamma / spec.beta)
    if trace.tan_theta[-1] < s < trace.tan_theta[0]:
        t0 = max(0.0, locate_angle_time(trace, s))
    else:
        t0 = 0.0
    bound_term = (1.0 + 1.0 / spec.alpha) * math.log(
        1.0 + spec.r0**spec.alpha * spec.gamma * spec.alpha * (trace.T0 - t0)
    )
    return {
        "expansion": expansion,
        "log_v_ratio": logv,
        "consistency_gap": abs(expansion - logv),
        "bound_term": bound_term,
        "deficit": bound_term - expansion,  # Q5 candidate: max over ensemble
        "t0": t0,
        "T0": trace.T0,
    }


def pair_distortion_through_Z(
    system, x0: np.ndarray, y0: np.ndarray, v0: np.ndarray, w0: np.ndarray
) -> dict:
    """Distortion data for two nearby entries with curve tangents.

    Integrates both trajectories to the earlier exit, returning the
    difference of accumulated expansions, the exit separation, the Hoelder
    ratio |Delta exp| / d(exit)^alpha, and the fitted constant of the
    eta(t) = ||vhat - what|| envelope.
    """
    if np.allclose(x0, y0) and np.allclose(v0, w0):
        return {"delta_expansion": 0.0, "d_exit": 0.0, "ratio": 0.0,
                "eta_fit": 0.0, "T": 0.0}
    spec = system.spec
    tx = integrate_passage(system, x0, v0)
    ty = integrate_passage(system, y0, w0)
    T = min(tx.T0, ty.T0)
    grid = np.linspace(0.0, T, max(tx.n, ty.n))
    d = system.dim

    def on_grid(tr):
        Z = tr.dense(grid)
        x = Z[:d].T
        v = Z[d : 2 * d].T
        e = Z[2 * d + 1]
        return x, v / np.linalg.norm(v, axis=1)[:, None], e

    X, Vh, Ex = on_grid(tx)
    Y, Wh, Ey = on_grid(ty)
    eta = np.linalg.norm(Vh - Wh, axis=1)
    d_exit = float(np.linalg.norm(X[-1] - Y[-1]))
    delta_exp = float(abs(Ex[-1] - Ey[-1]))
    Tt = T + 1.0
    shape = Tt ** (-(spec.alpha + 1.0)) * np.maximum(1.0 - grid / Tt, 0.0) ** (
        1.0 / spec.alpha
    ) + 1.0 / np.maximum(Tt - grid, 1e-12)
    denom = shape * max(d_exit, 1e-300) ** spec.alpha
    return {
        "delta_expansion": delta_exp,
        "d_exit": d_exit,
        "ratio": delta_exp / max(d_exit, 1e-300) ** spec.alpha,
        "eta_fit": float((eta / denom).max()),
        "T": float(T),
    }


def growth_trend(t0s: np.ndarray, values: np.ndarray) -> dict:
    """OLS slope of values against T0 with a 95% CI; absence of growth means
    the CI contains zero."""
    x = np.asarray(t0s, dtype=float)
    y = np.asarray(values, dtype=float)
    n = x.size
    X = np.column_stack([x, np.ones(n)])
    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(n - 2, 1)
    s2 = float(resid @ resid) / dof
    sxx = float(((x - x.mean()) ** 2).sum())
    se = math.sqrt(s2 / max(sxx, 1e-300))
    tq = float(t_dist.ppf(0.975, dof))
    return {
        "slope": float(coef[0]),
        "ci_low": float(coef[0] - tq * se),
        "ci_high": float(coef[0] + tq * se),
        "contains_zero": bool(coef[0] - tq * se <= 0.0 <= coef[0] + tq * se),
        "n": int(n),
    }
