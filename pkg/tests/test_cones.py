import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehsrb.cones import (
    _s_cone_dirs,
    _u_cone_dirs,
    base_pair,
    check_c1,
    cone_rates,
    pair_from_axes,
    push_cone,
    push_pair,
    rates_from_jacobian,
)
from ehsrb.config import ConeConfig
from ehsrb.errors import GeometryError


class _Diag2D:
    """Stand-in system with a constant diagonal derivative."""

    dim = 2

    def __init__(self, a, b, alpha=0.5):
        self.M = np.diag([a, b])
        from ehsrb.config import SystemSpec

        self.spec = SystemSpec(alpha=alpha)

    def jacobian(self, x):
        return self.M


def test_diag_axis_rates():
    sysd = _Diag2D(2.0, 0.5)
    pair = pair_from_axes(np.array([1.0, 0.0]), np.array([[0.0, 1.0]]), 1e-4, 1e-4)
    rs = cone_rates(sysd, np.zeros(2), pair)
    assert abs(rs.lambda_u - math.log(2)) < 1e-6
    assert abs(rs.lambda_s + math.log(2)) < 1e-6
    assert rs.defect == 0.0
    assert abs(rs.lam - math.log(2)) < 1e-6
    assert abs(rs.theta - (math.pi / 2 - 2e-4)) < 1e-9


def test_identity_at_fixed_point(slowed):
    p = slowed.fixed_point
    pair = base_pair(slowed, p, 0.3, 0.3)
    rs = cone_rates(slowed, p, pair)
    assert abs(rs.lambda_u) < 1e-9 and abs(rs.lambda_s) < 1e-9
    assert rs.defect < 1e-9 and abs(rs.lam) < 1e-9


def test_overlapping_cones_rejected(slowed):
    p = slowed.fixed_point
    pair = base_pair(slowed, p, 0.9, 0.9)
    with pytest.raises(GeometryError):
        cone_rates(slowed, p, pair)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_rates_match_brute_force(slowed, seed):
    rng = np.random.default_rng(seed)
    xc = rng.normal(size=3)
    xc *= rng.uniform(0.005, 0.045) / np.linalg.norm(xc)
    x = slowed.from_chart(xc[None, :])[0]
    M = slowed.jacobian(x)
    pair = base_pair(slowed, x, 0.4, 0.4)
    cfg = ConeConfig()
    rs = rates_from_jacobian(M, pair, slowed.spec.alpha, cfg)
    du = _u_cone_dirs(pair, 200, 50)
    ds = _s_cone_dirs(pair, 200, 50)
    lu = math.log(np.linalg.norm(du @ M.T, axis=1).min())
    ls = math.log(np.linalg.norm(ds @ M.T, axis=1).max())
    assert abs(rs.lambda_u - lu) < 1e-4
    assert abs(rs.lambda_s - ls) < 1e-4


@settings(max_examples=20, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    wide=st.floats(0.1, 0.5),
    narrow_frac=st.floats(0.2, 0.9),
)
def test_rate_monotonicity_in_width(seed, wide, narrow_frac):
    # shrinking the cones never decreases lambda_u, never increases lambda_s
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(2, 2))
    M += np.sign(np.linalg.det(M) + 1e-9) * 1.5 * np.eye(2)
    sysd = _Diag2D(1, 1)
    sysd.M = M
    narrow = wide * narrow_frac
    pw = pair_from_axes(np.array([1.0, 0.0]), np.array([[0.0, 1.0]]), wide, wide)
    pn = pair_from_axes(np.array([1.0, 0.0]), np.array([[0.0, 1.0]]), narrow, narrow)
    rw = cone_rates(sysd, np.zeros(2), pw)
    rn = cone_rates(sysd, np.zeros(2), pn)
    assert rn.lambda_u >= rw.lambda_u - 1e-9
    assert rn.lambda_s <= rw.lambda_s + 1e-9


def test_push_cone_identity_margin_zero(slowed, cfg):
    p = slowed.fixed_point
    pair = base_pair(slowed, p, cfg.cones.width_c1, cfg.cones.width_c1)
    pushed, report = push_cone(slowed, p, pair)
    assert abs(report["margin_u"]) < 1e-9
    assert abs(report["margin_s"]) < 1e-9
    assert report["contained"]
    assert abs(pushed.theta_u - pair.theta_u) < 1e-9


def test_push_cone_uniform_region(base, cfg):
    x = np.array([3.0, 0.4, -0.2])
    pair = base_pair(base, x, cfg.cones.width_c1, cfg.cones.width_c1)
    _, report = push_cone(base, x, pair)
    assert report["margin_u"] > 0.02
    assert report["margin_s"] > 0.02


def test_pushed_pair_tracks_splitting(base):
    # pushing along an orbit narrows the unstable cone onto the true direction
    x = np.array([2.2, 0.3, -0.2])
    pair = base_pair(base, x, 0.3, 0.3)
    for _ in range(10):
        M = base.jacobian(x)
        pair = push_pair(M, pair)
        x = base.step(x)
    assert pair.theta_u < 0.01
    # the pushed axis is nearly the angular direction modulated by the offset
    assert abs(pair.e_u[0]) > 0.95


def test_c1_certificate(slowed, rng, cfg):
    rep = check_c1(slowed, 150, rng, cfg.cones)
    assert rep["violations"] == 0
    assert rep["worst_margin_u"] > 0.0
    assert rep["worst_margin_s"] > 0.0


def test_c1_oversized_width_reports_violations(base, rng, cfg):
    rep = check_c1(base, 60, rng, cfg.cones, width_u=math.pi / 3, width_s=math.pi / 3)
    assert rep["violations"] > 0
    assert len(rep["violation_locations"]) > 0


def test_flow_keeps_wide_cone_invariant(local, cfg):
    # through a full passage, Dg maps the C1-width cone into itself
    from ehsrb import flow as fl

    tr = fl.full_passage(local, 12.0)
    # transport cone boundary vectors through the whole passage
    for sgn in (+1.0, -1.0):
        v0 = np.array([1.0, sgn * math.tan(cfg.cones.width_c1)])
        tr_v = fl.integrate_passage(local, tr.x[0], v0)
        tan_end = abs(tr_v.v[-1][1] / tr_v.v[-1][0])
        assert tan_end <= math.tan(cfg.cones.width_c1) + 1e-9
