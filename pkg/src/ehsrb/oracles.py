"""Ensemble verification of every passage law, with trend checks across
passage-duration bins standing in for uniformity over trajectories."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import OracleConfig
from . import laws
from .flow import full_passage, integrate_passage, passage_with_duration


def bin_entry_angles(system, ocfg: OracleConfig) -> dict:
    """tan theta0 values whose passages land in each T0 bin (by bisection at
    the bin center, then a log-uniform spread within the bin width)."""
    out = {}
    for T0 in ocfg.t0_bins:
        tr = passage_with_duration(system, T0, rel_tol=0.05)
        out[T0] = tr.tan_theta[0]
    return out


def ensemble_for_bin(system, tan_center: float, n: int, rng, spread: float = 0.25):
    traces = []
    alpha = system.spec.alpha
    for _ in range(n):
        tth = tan_center * math.exp(rng.uniform(-spread, spread))
        traces.append(
            full_passage(
                system,
                tth,
                azimuth=rng.uniform(0, 2 * math.pi),
                tan_rho0=rng.uniform(0, alpha / 2),
                rho_azimuth=rng.uniform(0, 2 * math.pi),
            )
        )
    return traces


def run_oracle_suite(
    system,
    ocfg: OracleConfig | None = None,
    n_traces: int = 1000,
    seed: int = 0,
    threads: int = 1,
    n_per_bin: int | None = None,
) -> list[dict]:
    """All law checks over a mixed ensemble plus T0-binned trend studies.

    Returns a list of law reports: {law, n_traces, max_residual, violations,
    fitted_constants, T0_bins}.
    """
    ocfg = ocfg or OracleConfig()
    spec = system.spec
    rng = np.random.default_rng(seed)
    sqrt_gb = math.sqrt(spec.gamma / spec.beta)
    s_hi = ocfg.ts_s_factor * sqrt_gb
    s_lo = 0.5 * sqrt_gb
    floor = ocfg.chevron_floor_factor * min(spec.beta, spec.gamma)

    def make_trace(i):
        r = np.random.default_rng(np.random.SeedSequence([seed, i]))
        tth = math.exp(r.uniform(math.log(1.2), math.log(300.0)))
        return full_passage(
            system,
            tth,
            azimuth=r.uniform(0, 2 * math.pi),
            tan_rho0=r.uniform(0, spec.alpha / 2),
            rho_azimuth=r.uniform(0, 2 * math.pi),
            spacing_factor=5e-3,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            traces = list(ex.map(make_trace, range(n_traces)))
    else:
        traces = [make_trace(i) for i in range(n_traces)]

    reports = []

    # tan theta decay law
    resid = []
    for tr in traces:
        mid = 0.5 * tr.T0
        resid.append(laws.check_tantheta_law(tr, tr.t[0], tr.t[-1]))
        resid.append(laws.check_tantheta_law(tr, mid, tr.t[-1]))
    reports.append(
        {
            "law": "tantheta_decay",
            "n_traces": n_traces,
            "max_residual": float(np.max(resid)),
            "violations": int(np.sum(np.array(resid) > ocfg.residual_tol_tantheta)),
            "fitted_constants": {},
            "T0_bins": [],
        }
    )

    # radial ODE
    rr = [laws.check_radial_ode(tr) for tr in traces]
    reports.append(
        {
            "law": "radial_ode",
            "n_traces": n_traces,
            "max_residual": float(max(r["max_residual"] for r in rr)),
            "violations": int(
                sum(r["max_residual"] > ocfg.residual_tol_radial for r in rr)
            ),
            "fitted_constants": {
                "max_residual_over_h2": float(max(r["residual_over_h2"] for r in rr))
            },
            "T0_bins": [],
        }
    )

    # chevron bounds
    ch = [laws.check_chevron_bounds(tr, ocfg.chevron_kappa, floor) for tr in traces]
    reports.append(
        {
            "law": "chevron_bounds",
            "n_traces": n_traces,
            "max_residual": float(max(c["upper_margin"] for c in ch)),
            "violations": int(
                sum(
                    (not c["upper_ok"]) or (not c["concave_ok"]) or
                    (not c["above_floor"])
                    for c in ch
                )
            ),
            "fitted_constants": {
                "beta_prime_min": float(min(c["beta_prime"] for c in ch)),
                "gamma_prime_min": float(min(c["gamma_prime"] for c in ch)),
                "floor": floor,
            },
            "T0_bins": [],
        }
    )

    # T_s bounds, both regimes
    for s, name in ((s_hi, "ts_upper"), (s_lo, "ts_lower")):
        checks = []
        for tr in traces:
            if tr.tan_theta[-1] < s < tr.tan_theta[0]:
                checks.append(laws.check_ts_bounds(tr, s))
        reports.append(
            {
                "law": name,
                "n_traces": len(checks),
                "max_residual": float(
                    max((c["T_s"] - c["bound"]) * (1 if c["side"] == "upper" else -1)
                        for c in checks)
                ) if checks else 0.0,
                "violations": int(sum(not c["ok"] for c in checks)),
                "fitted_constants": {"s": s},
                "T0_bins": [],
            }
        )

    # tan rho cone and envelope
    tb = [laws.check_tanrho_bounds(tr) for tr in traces]
    reports.append(
        {
            "law": "tanrho_envelope",
            "n_traces": n_traces,
            "max_residual": float(-min(t["envelope_margin"] for t in tb)),
            "violations": int(
                sum((not t["cone_ok"]) or (not t["envelope_ok"]) for t in tb)
            ),
            "fitted_constants": {
                "cone_margin_min": float(min(t["cone_margin"] for t in tb))
            },
            "T0_bins": [],
        }
    )

    # integral of ||x||^alpha tan theta after T_s
    it = []
    for tr in traces:
        if tr.tan_theta[-1] < s_hi < tr.tan_theta[0]:
            it.append(laws.check_int_tan_theta(tr, s_hi))
    reports.append(
        {
            "law": "int_tan_theta",
            "n_traces": len(it),
            "max_residual": float(max(c["value"] - c["bound"] for c in it))
            if it
            else 0.0,
            "violations": int(sum(not c["ok"] for c in it)),
            "fitted_constants": {"s": s_hi},
            "T0_bins": [],
        }
    )

    # expansion consistency and escape bound
    ex = [laws.expansion_along_passage(tr, ocfg.ts_s_factor) for tr in traces]
    q5 = max(e["deficit"] for e in ex)
    q3 = max(0.0, -min(e["expansion"] for e in ex))
    reports.append(
        {
            "law": "expansion_escape",
            "n_traces": n_traces,
            "max_residual": float(max(e["consistency_gap"] for e in ex)),
            "violations": int(sum(e["consistency_gap"] > 1e-8 for e in ex)),
            "fitted_constants": {"Q5_emp": float(q5), "Q3_emp": float(q3)},
            "T0_bins": [],
        }
    )

    # binned trend studies: Q0 (int ||x||^a tan rho), contraction, distortion
    bins = list(ocfg.t0_bins)
    per_bin = n_per_bin or max(n_traces // (4 * len(bins)), 8)
    angles = bin_entry_angles(system, ocfg)
    stats = {
        "Q0_int_tanrho": {},
        "Q3_contraction": {},
        "distortion_constant": {},
        "eta_envelope_constant": {},
    }
    for T0 in bins:
        btr = ensemble_for_bin(system, angles[T0], per_bin, rng)
        stats["Q0_int_tanrho"][T0] = [laws.integral_tan_rho(tr) for tr in btr]
        stats["Q3_contraction"][T0] = [
            max(0.0, -tr.expansion[-1]) for tr in btr
        ]
        dist_vals, eta_vals = _pair_distortion_bin(
            system, angles[T0], per_bin // 2, rng
        )
        stats["distortion_constant"][T0] = dist_vals
        stats["eta_envelope_constant"][T0] = eta_vals

    for name, per_bin_vals in stats.items():
        # the uniformity surrogate: one ensemble maximum per duration bin,
        # regression slope CI across the bins must contain zero
        t0s = np.array(bins, dtype=float)
        maxima = np.array([np.max(per_bin_vals[T0]) for T0 in bins])
        trend = laws.growth_trend(t0s, maxima)
        reports.append(
            {
                "law": f"trend_{name}",
                "n_traces": int(sum(len(v) for v in per_bin_vals.values())),
                "max_residual": float(maxima.max()),
                "violations": 0 if trend["contains_zero"] else 1,
                "fitted_constants": {
                    "max_value": float(maxima.max()),
                    "bin_maxima": maxima.tolist(),
                    "slope": trend["slope"],
                    "ci": [trend["ci_low"], trend["ci_high"]],
                },
                "T0_bins": bins,
            }
        )
    return reports


def _pair_distortion_bin(system, tan_center: float, n_pairs: int, rng,
                         rel_sep: float = 5e-4):
    """Distortion ratios and eta-envelope constants for nearby same-piece
    entry pairs whose passages last about the bin duration.

    The second point's entry coordinate differs by a fixed relative amount,
    which keeps both exits in the same inducing-time level set."""
    spec = system.spec
    ratios = []
    etas = []
    theta = math.atan(tan_center)
    for _ in range(max(n_pairs, 3)):
        base_u = spec.r0 * math.cos(theta)
        s0 = spec.r0 * math.sin(theta)
        x0 = _embed(system, base_u, s0, rng)
        y0 = x0.copy()
        y0[0] *= 1.0 + rel_sep * rng.uniform(0.5, 1.5)
        v0 = np.zeros(system.dim)
        v0[0] = 1.0
        rep = laws.pair_distortion_through_Z(system, x0, y0, v0, v0.copy())
        ratios.append(rep["ratio"])
        etas.append(rep["eta_fit"])
    return np.array(ratios), np.array(etas)


def _embed(system, u: float, s: float, rng) -> np.ndarray:
    x = np.zeros(system.dim)
    x[0] = u
    if system.dim == 2:
        x[1] = s
    else:
        az = rng.uniform(0, 2 * math.pi)
        x[1] = s * math.cos(az)
        x[2] = s * math.sin(az)
    return x * (1.0 - 1e-12)
