import math

import numpy as np
import pytest

from ehsrb.errors import DomainError
from ehsrb.systems import sample_states


def test_fixed_point_exact(slowed):
    p = slowed.fixed_point
    assert np.allclose(slowed.step(p), p, atol=1e-10)
    assert np.allclose(slowed.jacobian(p), np.eye(3), atol=1e-10)


def test_regions(slowed, spec):
    assert slowed.region(slowed.from_chart(np.array([[0.01, 0, 0]]))[0]) == "Y"
    assert slowed.region(slowed.from_chart(np.array([[0.3, 0, 0]]))[0]) == "Z"
    mid = slowed.R_Z + 0.5 * spec.blend_width
    assert slowed.region(slowed.from_chart(np.array([[mid, 0, 0]]))[0]) == "blend"
    assert slowed.region(np.array([3.0, 0.5, 0.1])) == "outside"


def test_outside_domain_rejected(slowed):
    with pytest.raises(DomainError):
        slowed.step(np.array([0.0, 1.2, 0.0]))
    with pytest.raises(DomainError):
        slowed.jacobian(np.array([0.0, 1.2, 0.0]))


def test_axis_ode_closed_form(slowed, spec):
    # on the unstable axis inside Y the radial ODE integrates exactly:
    # ||x(1)||^-a = ||x0||^-a - gamma*a
    u0 = 0.02
    x0 = slowed.from_chart(np.array([[u0, 0.0, 0.0]]))[0]
    x1 = slowed.step(x0)
    got = slowed.to_chart(x1[None, :])[0, 0]
    expect = (u0 ** (-spec.alpha) - spec.gamma * spec.alpha) ** (-1 / spec.alpha)
    assert abs(got - expect) < 1e-9
    assert abs(x1[1]) < 1e-12 and abs(x1[2]) < 1e-12


def test_pure_solenoid_region(pure, base):
    # outside the deformation the base map equals the textbook formula
    x = np.array([3.0, 0.4, -0.2])
    assert base.region(x) == "outside"
    assert np.allclose(base.step(x), pure.step(x), atol=0)
    assert np.allclose(base.jacobian(x), pure.jacobian(x), atol=0)


def test_solenoid_jacobian_analytic(pure, spec):
    x = np.array([2.0, 0.1, 0.3])
    J = pure.jacobian(x)
    m, c, a = spec.base_expansion, spec.contraction, spec.offset
    assert J[0, 0] == m and J[1, 1] == c and J[2, 2] == c
    h = 1e-7
    num = (pure.step(x + np.array([h, 0, 0])) - pure.step(x - np.array([h, 0, 0])))
    assert np.allclose(num[1:] / (2 * h), J[1:, 0], atol=1e-5)


def test_trapping(slowed, rng):
    X = sample_states(slowed, 10_000, rng)
    Y = slowed.step_many(X)
    assert np.all(np.sum(Y[:, 1:] ** 2, axis=1) < 1.0)


def test_jacobian_matches_finite_differences(slowed, rng):
    # tighter integrator for the finite-difference probe values
    from dataclasses import replace

    from ehsrb.systems import SolenoidSystem

    tight = SolenoidSystem(
        slowed.spec, replace(slowed.integ, rtol=1e-12, atol=1e-13), slowed=True
    )
    X = sample_states(slowed, 40, rng)
    # include points deep inside Y
    deep = rng.normal(size=(10, 3))
    deep /= np.linalg.norm(deep, axis=1)[:, None]
    deep *= rng.uniform(0.005, 0.045, size=(10, 1))
    X = np.vstack([X, slowed.from_chart(deep)])
    h = 1e-6
    worst = 0.0
    for x in X:
        J = slowed.jacobian(x)
        num = np.empty_like(J)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            dp = tight.to_chart(tight.step(x + e)[None, :])[0]
            dm = tight.to_chart(tight.step(x - e)[None, :])[0]
            diff = dp - dm
            diff[0] = math.remainder(diff[0], 2 * math.pi)
            num[:, j] = diff / (2 * h)
        worst = max(worst, np.linalg.norm(num - J) / np.linalg.norm(J))
    assert worst < 1e-5


def test_flow_composition(slowed):
    # integrating twice for 0.5 equals once for 1.0 where the orbit stays in Y
    from scipy.integrate import solve_ivp

    core = slowed.core
    x0 = np.array([0.004, 0.02, 0.01])

    def rhs(_t, z):
        return core.field(z[None, :])[0]

    full = solve_ivp(rhs, (0, 1.0), x0, rtol=1e-12, atol=1e-13).y[:, -1]
    half = solve_ivp(rhs, (0, 0.5), x0, rtol=1e-12, atol=1e-13).y[:, -1]
    two = solve_ivp(rhs, (0, 0.5), half, rtol=1e-12, atol=1e-13).y[:, -1]
    assert np.linalg.norm(two - full) < 1e-9


def test_blend_smoothness_proxy(base, spec, rng):
    # finite-difference jacobian varies Hoelder-continuously across the blend
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    radii = np.linspace(base.R_Z - 0.01, base.R_blend + 0.01, 60)
    X = base.from_chart(radii[:, None] * direction)
    J = base.jacobian_many(X)
    h = radii[1] - radii[0]
    jumps = np.linalg.norm(np.diff(J, axis=0), axis=(1, 2))
    c_fit = jumps.max() / h**spec.alpha
    assert np.isfinite(c_fit)
    # halving the mesh must not grow the fitted constant materially
    radii2 = np.linspace(base.R_Z - 0.01, base.R_blend + 0.01, 119)
    J2 = base.jacobian_many(base.from_chart(radii2[:, None] * direction))
    jumps2 = np.linalg.norm(np.diff(J2, axis=0), axis=(1, 2))
    c2 = jumps2.max() / (radii2[1] - radii2[0]) ** spec.alpha
    assert c2 < 4.0 * c_fit + 1.0


def test_slowdown_profile(slowed, spec):
    psi = slowed.core.psi
    assert psi.is_monotone()
    r = np.array([0.5 * spec.r0, spec.r0, 0.5 * (spec.r0 + spec.r1), spec.r1, 0.5])
    v = psi(r)
    assert abs(v[0] - (0.5 * spec.r0) ** spec.alpha) < 1e-14
    assert abs(v[-1] - 1.0) < 1e-14
    assert np.all(np.diff(v) >= 0)


def test_local_model_matches_chart_flow(local, slowed):
    # the planar model is the slowed flow in the chart with one stable axis
    x = np.array([0.01, 0.02])
    y = local.step(x)
    x3 = slowed.from_chart(np.array([[0.01, 0.02, 0.0]]))[0]
    y3 = slowed.to_chart(slowed.step(x3)[None, :])[0]
    assert np.allclose(y, y3[:2], atol=1e-9)
    assert abs(y3[2]) < 1e-12
