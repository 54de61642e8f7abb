import math

import numpy as np
import pytest

from ehsrb import flow as fl
from ehsrb.errors import BoundedTimeError, DomainError


def test_axis_trace_angles_vanish(local):
    tr = fl.flow_through_Z(local, np.array([0.02, 0.0]), np.array([1.0, 0.0]))
    assert tr.tan_theta.max() == 0.0
    assert tr.tan_rho.max() == 0.0


def test_axis_duration_closed_form(local, spec):
    u0 = 0.02
    tr = fl.flow_through_Z(local, np.array([u0, 0.0]), np.array([1.0, 0.0]))
    expect = (u0 ** (-spec.alpha) - spec.r0 ** (-spec.alpha)) / (
        spec.gamma * spec.alpha
    )
    assert abs(tr.T0 - expect) < 1e-8


def test_axis_expansion_closed_form(local, spec):
    # <v, L_v X> = gamma*(1+alpha)*||x||^alpha along the axis, so the total
    # expansion is (1+alpha) * log(r0/u0)
    u0 = 0.02
    tr = fl.flow_through_Z(local, np.array([u0, 0.0]), np.array([1.0, 0.0]))
    expect = (1 + spec.alpha) * math.log(spec.r0 / u0)
    assert abs(tr.expansion[-1] - expect) < 1e-7
    assert abs(math.log(np.linalg.norm(tr.v[-1])) - expect) < 1e-7


def test_exit_radius_and_monotone_angle(local, spec):
    tr = fl.full_passage(local, 8.0, tan_rho0=0.1)
    assert abs(tr.norm_x[-1] - spec.r0) < 1e-10
    assert np.all(np.diff(tr.tan_theta) <= 1e-12)
    assert np.all(np.diff(tr.t) > 0)


def test_duration_against_reference_integrator(local):
    # reference at 10x tighter tolerance must agree on T0 within 1e-6
    from dataclasses import replace

    from ehsrb.systems import build_local_system

    tr = fl.full_passage(local, 10.0)
    ref_sys = build_local_system(
        local.spec, replace(local.integ, rtol=1e-12, atol=1e-13)
    )
    tr_ref = fl.full_passage(ref_sys, 10.0)
    assert abs(tr.T0 - tr_ref.T0) < 1e-6


def test_boundary_entry_degenerates(local, spec):
    # starting close to the exit radius with a shallow angle exits quickly
    x0 = np.array([0.999 * spec.r0, 1e-5])
    tr = fl.integrate_passage(local, x0, np.array([1.0, 0.0]))
    assert tr.T0 < 0.05


def test_stable_subspace_never_exits(local):
    with pytest.raises(BoundedTimeError) as exc:
        fl.integrate_passage(
            local, np.array([0.0, 0.01]), np.array([1.0, 0.0]), horizon=30.0
        )
    assert exc.value.horizon == 30.0


def test_zero_tangent_rejected(local):
    with pytest.raises(DomainError):
        fl.flow_through_Z(local, np.array([0.01, 0.0]), np.zeros(2))


def test_x0_outside_y_rejected(local):
    with pytest.raises(DomainError):
        fl.flow_through_Z(local, np.array([0.2, 0.0]), np.array([1.0, 0.0]))


def test_entry_requires_steep_angle(local):
    with pytest.raises(DomainError):
        fl.full_passage(local, 0.3)


def test_trace_csv(tmp_path, local):
    tr = fl.full_passage(local, 5.0, tan_rho0=0.05)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,x1,x2,v1,v2,tan_theta,tan_rho,norm_x,J"


def test_passage_duration_targeting(local):
    tr = fl.passage_with_duration(local, 20.0)
    assert abs(tr.T0 - 20.0) <= 0.02 * 20.0 + 1e-9


def test_trace_spacing(local):
    tr = fl.full_passage(local, 10.0)
    h = np.diff(tr.t)
    assert h.max() <= 1e-2 * min(1.0, tr.T0) + 1e-12


def test_three_dim_passage(slowed, spec):
    tr = fl.full_passage(slowed, 10.0, azimuth=0.7, tan_rho0=0.1, rho_azimuth=1.1)
    assert abs(tr.norm_x[-1] - spec.r0) < 1e-10
    assert np.all(np.diff(tr.tan_theta) <= 1e-12)
