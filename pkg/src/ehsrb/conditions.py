"""Certificates for the three conditions on the perturbed map: cone
invariance of the first return, admissible decompositions with integrable
inducing time and bounded distortion, and bounded partial sums of the rates
along pieces."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .config import RunConfig
from .cones import check_c1
from .curves import straight_seed
from .decompose import (
    decomposition_with_report,
    local_tail_times,
    tail_histogram,
)
from .eht import orbit_log
from .systems import build_local_system, build_system


def c2_report(system, cfg: RunConfig, n_tail: int = 100_000, rng=None) -> dict:
    """(i) return-time envelope with fitted constant; (ii) uniform-scale
    returns; (iii) induced-map distortion constants for both candidate
    Hoelder exponents."""
    rng = rng or np.random.default_rng(11)
    spec = system.spec
    tau = local_tail_times(system, n_tail, half_width=0.02)
    ts, counts, _ = tail_histogram(tau)
    phat = counts / counts.sum()
    expo = 1.0 + 1.0 / spec.alpha
    sel = ts >= 2
    c_env = float((phat[sel] * ts[sel].astype(float) ** expo).max())
    mean_tau = float((phat * ts).sum())

    ccfg = replace(cfg.curves, tau_cap=min(cfg.curves.tau_cap, 120))
    seed_curve = straight_seed(
        system,
        np.array([0.0, system.R_Z + 0.04]),
        2 * ccfg.epsilon,
        161,
        cfg=ccfg,
    )
    pieces, _ = decomposition_with_report(system, seed_curve, ccfg)
    lengths = np.array([p.image_length() for p in pieces])
    in_range = np.all(
        (lengths >= cfg.curves.epsilon * 0.999)
        & (lengths <= 2 * cfg.curves.epsilon * 1.001)
    )
    q_alpha = []
    q_alpha2 = []
    for p in pieces:
        if p.points.shape[0] < 4:
            continue
        img = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(np.diff(p.points, axis=0), axis=1))]
        )
        for _ in range(8):
            i, j = sorted(rng.integers(0, p.points.shape[0], size=2).tolist())
            if i == j:
                continue
            d_img = img[j] - img[i]
            if d_img < 1e-9:
                continue
            num = abs(p.logphi[i] - p.logphi[j])
            q_alpha.append(num / d_img**spec.alpha)
            q_alpha2.append(num / d_img ** (spec.alpha**2))
    return {
        "envelope_constant": c_env,
        "envelope_exponent": expo,
        "mean_inducing_time": mean_tau,
        "n_pieces": len(pieces),
        "image_lengths_in_range": bool(in_range),
        "image_length_min": float(lengths.min()) if lengths.size else None,
        "image_length_max": float(lengths.max()) if lengths.size else None,
        "distortion_q_alpha": float(np.max(q_alpha)) if q_alpha else 0.0,
        "distortion_q_alpha2": float(np.max(q_alpha2)) if q_alpha2 else 0.0,
    }


def c3_report(system, cfg: RunConfig, n_pieces: int = 40, rng=None) -> dict:
    """Partial-sum bounds along pieces: running sums of (lambda_u - defect)
    bounded below and of lambda_s bounded above by a single constant."""
    rng = rng or np.random.default_rng(13)
    ccfg = replace(cfg.curves, tau_cap=min(cfg.curves.tau_cap, 120))
    seed_curve = straight_seed(
        system,
        np.array([0.0, system.R_Z + 0.04]),
        2 * ccfg.epsilon,
        161,
        cfg=ccfg,
    )
    pieces, _ = decomposition_with_report(system, seed_curve, ccfg)
    rng.shuffle(pieces)
    worst_u = 0.0
    worst_s = 0.0
    used = 0
    for p in pieces[:n_pieces]:
        mid = 0.5 * (p.interval[0] + p.interval[1])
        s_seed = seed_curve.arc_params()
        x0 = np.stack(
            [np.interp(mid, s_seed, seed_curve.points[:, j]) for j in range(2)]
        )
        log = orbit_log(system, x0, max(p.tau, 1), cone_cfg=cfg.cones)
        a = log.lambda_u - log.defect
        b = log.lambda_s
        suff_a = np.cumsum(a[::-1])[::-1]
        suff_b = np.cumsum(b[::-1])[::-1]
        worst_u = max(worst_u, float(-suff_a.min()))
        worst_s = max(worst_s, float(suff_b.max()))
        used += 1
    return {
        "n_pieces": used,
        "C_fit_unstable": worst_u,
        "C_fit_stable": worst_s,
    }


def verify_conditions(cfg: RunConfig, n_c1: int = 300, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    slowed = build_system(cfg.system, cfg.integrator, slowed=True)
    local = build_local_system(cfg.system, cfg.integrator)
    c1 = check_c1(slowed, n_c1, rng, cfg.cones)
    c1.pop("violation_locations", None)
    c2 = c2_report(local, cfg, rng=rng)
    c3 = c3_report(local, cfg, rng=rng)
    return {
        "C1": c1,
        "C2": c2,
        "C3": c3,
        "pass": bool(
            c1["violations"] == 0
            and c2["image_lengths_in_range"]
            and math.isfinite(c2["envelope_constant"])
        ),
    }
