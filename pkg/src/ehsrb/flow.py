"""Passage integration through the neutral region, with dense output.

All passage work happens in the linearizing chart at the fixed point, where
the vector field is psi(||x||) A x with A = diag(gamma, -beta, ..., -beta).
A FlowTrace records one trajectory x(t) together with an invariant tangent
vector v(t), the angles of both to the unstable axis, and the two running
integrals that the closed-form passage laws are written in.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .config import SystemSpec
from .errors import BoundedTimeError, DomainError
from .integrate import advance_batch


@dataclass
class FlowTrace:
    """Dense record of one passage; all arrays share the time grid."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    tan_theta: np.ndarray
    tan_rho: np.ndarray
    norm_x: np.ndarray
    J: np.ndarray  # J(0, t) = lambda * int_0^t ||x||^alpha
    expansion: np.ndarray  # int_0^t <vhat, L_vhat X>
    T0: float
    spec: SystemSpec
    reversed_time: bool = False
    dense: object = None  # scipy OdeSolution over [0, T0], when available

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0.0):
            raise ValueError("trace time grid must be strictly increasing")

    @property
    def n(self) -> int:
        return self.t.size

    def J_between(self, t1: float, t2: float) -> float:
        """J(t1, t2) from the accumulated integral."""
        j1, j2 = np.interp([t1, t2], self.t, self.J)
        return float(j2 - j1)

    def value_at(self, arr: np.ndarray, times) -> np.ndarray:
        return np.interp(times, self.t, arr)

    def to_csv(self, path) -> None:
        d = self.x.shape[1]
        header = (
            ["t"]
            + [f"x{i+1}" for i in range(d)]
            + [f"v{i+1}" for i in range(d)]
            + ["tan_theta", "tan_rho", "norm_x", "J"]
        )
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.n):
                w.writerow(
                    [repr(float(self.t[i]))]
                    + [repr(float(val)) for val in self.x[i]]
                    + [repr(float(val)) for val in self.v[i]]
                    + [
                        repr(float(self.tan_theta[i])),
                        repr(float(self.tan_rho[i])),
                        repr(float(self.norm_x[i])),
                        repr(float(self.J[i])),
                    ]
                )


def _tan_to_axis(vecs: np.ndarray) -> np.ndarray:
    """tan of the angle to the unstable axis, rows of vecs; inf on the axis'
    orthogonal complement."""
    num = np.linalg.norm(vecs[:, 1:], axis=1)
    den = np.abs(vecs[:, 0])
    with np.errstate(divide="ignore"):
        return np.where(den > 0.0, num / np.maximum(den, 1e-300), np.inf)


def integrate_passage(
    system,
    x0: np.ndarray,
    v0: np.ndarray,
    r_exit: float | None = None,
    horizon: float | None = None,
    time_reversed: bool = False,
    spacing_factor: float | None = None,
) -> FlowTrace:
    """Integrate the slowed field (optionally time-reversed) until ||x|| first
    crosses ``r_exit`` upward; dense output resampled on a uniform grid."""
    core = system.core
    spec = system.spec
    d = system.dim
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if np.linalg.norm(v0) == 0.0:
        raise DomainError("v0 must be nonzero")
    r_exit = spec.r0 if r_exit is None else r_exit
    horizon = system.integ.max_horizon if horizon is None else horizon
    sgn = -1.0 if time_reversed else 1.0
    lam = spec.lambda_total

    def rhs(_t, z):
        x = z[:d]
        v = z[d : 2 * d]
        r = float(np.linalg.norm(x))
        psi = float(core.psi(r))
        dx = psi * (core.A @ x)
        dv = core.field_jac(x) @ v
        nv2 = float(v @ v)
        de = float(v @ dv) / nv2 if nv2 > 0 else 0.0
        return sgn * np.concatenate([dx, dv, [r**spec.alpha, de]])

    def exit_event(_t, z):
        return float(np.linalg.norm(z[:d])) - r_exit

    exit_event.terminal = True
    exit_event.direction = 1.0

    z0 = np.concatenate([x0, v0, [0.0, 0.0]])
    sol = solve_ivp(
        rhs,
        (0.0, horizon),
        z0,
        method="RK45",
        rtol=system.integ.rtol,
        atol=system.integ.atol,
        dense_output=True,
        events=[exit_event],
    )
    if not sol.t_events[0].size:
        raise BoundedTimeError(
            "trajectory did not reach the exit radius within the horizon "
            "(start on the stable subspace?)",
            horizon=horizon,
        )
    T0 = float(sol.t_events[0][0])

    factor = spacing_factor or system.integ.trace_spacing_factor
    spacing = factor * min(1.0, T0) if T0 > 0 else factor
    n = max(int(math.ceil(T0 / spacing)) + 1, 10)
    t = np.linspace(0.0, T0, n)
    Z = sol.sol(t).T
    x = Z[:, :d]
    v = Z[:, d : 2 * d]
    return FlowTrace(
        t=t,
        x=x,
        v=v,
        tan_theta=_tan_to_axis(x),
        tan_rho=_tan_to_axis(v),
        norm_x=np.linalg.norm(x, axis=1),
        J=lam * Z[:, 2 * d],
        expansion=Z[:, 2 * d + 1],
        T0=T0,
        spec=spec,
        reversed_time=time_reversed,
        dense=sol.sol,
    )


def flow_through_Z(system, x0: np.ndarray, v0: np.ndarray) -> FlowTrace:
    """Trace from a point inside Y until it exits through ||x|| = r0.

    x0, v0 are given in the linearizing chart.
    """
    x0 = np.asarray(x0, dtype=float)
    if float(np.linalg.norm(x0)) >= system.spec.r0:
        raise DomainError("x0 must lie strictly inside Y (||x0|| < r0)")
    return integrate_passage(system, x0, v0)


def entry_state(
    system,
    tan_theta0: float,
    azimuth: float = 0.0,
    u_sign: float = 1.0,
) -> np.ndarray:
    """Point on the entry sphere ||x|| = r0 (nudged inward) at angle theta0."""
    spec = system.spec
    d = system.dim
    theta = math.atan(tan_theta0)
    x = np.zeros(d)
    x[0] = u_sign * math.cos(theta)
    if d == 2:
        x[1] = math.sin(theta) * (1.0 if math.cos(azimuth) >= 0 else -1.0)
    else:
        x[1] = math.sin(theta) * math.cos(azimuth)
        x[2] = math.sin(theta) * math.sin(azimuth)
    return x * spec.r0 * (1.0 - 1e-12)


def cone_vector(
    system, tan_rho0: float, azimuth: float = 0.0, u_sign: float = 1.0
) -> np.ndarray:
    """Unit vector at angle rho0 to the unstable axis."""
    d = system.dim
    v = np.zeros(d)
    v[0] = u_sign
    if d == 2:
        v[1] = tan_rho0 * (1.0 if math.cos(azimuth) >= 0 else -1.0)
    else:
        v[1] = tan_rho0 * math.cos(azimuth)
        v[2] = tan_rho0 * math.sin(azimuth)
    return v / np.linalg.norm(v)


def full_passage(
    system,
    tan_theta0: float,
    azimuth: float = 0.0,
    tan_rho0: float = 0.0,
    rho_azimuth: float = 0.0,
    spacing_factor: float | None = None,
) -> FlowTrace:
    """Enter Y at angle theta0 (must exceed sqrt(gamma/beta) to actually enter)
    and trace until the exit at r0."""
    spec = system.spec
    if tan_theta0**2 <= spec.gamma / spec.beta:
        raise DomainError(
            "entry requires tan_theta0^2 > gamma/beta (inward radial motion)"
        )
    x0 = entry_state(system, tan_theta0, azimuth)
    v0 = cone_vector(system, tan_rho0, rho_azimuth)
    return integrate_passage(system, x0, v0, spacing_factor=spacing_factor)


def passage_with_duration(
    system,
    T0_target: float,
    rel_tol: float = 0.02,
    azimuth: float = 0.0,
    tan_rho0: float = 0.0,
    max_iters: int = 80,
) -> FlowTrace:
    """Bisect on the entry angle so the passage lasts about T0_target."""
    spec = system.spec
    lo = math.sqrt(spec.gamma / spec.beta) * 1.05
    hi = lo * 2.0

    def duration(tth):
        return full_passage(system, tth, azimuth=azimuth, tan_rho0=tan_rho0).T0

    while duration(hi) < T0_target:
        hi *= 4.0
        if hi > 1e12:
            raise BoundedTimeError(
                "cannot reach requested passage duration", horizon=T0_target
            )
    for _ in range(max_iters):
        mid = math.sqrt(lo * hi)
        tr = full_passage(
            system, mid, azimuth=azimuth, tan_rho0=tan_rho0
        )
        if abs(tr.T0 - T0_target) <= rel_tol * T0_target:
            return tr
        if tr.T0 < T0_target:
            lo = mid
        else:
            hi = mid
    return tr


def passage_ensemble(
    system,
    n: int,
    rng,
    tan_theta0_range: tuple[float, float] = (1.0, 200.0),
    tan_rho0: float | None = None,
    spacing_factor: float | None = None,
) -> list[FlowTrace]:
    """n passages with log-uniform entry angles and random azimuths."""
    spec = system.spec
    lo = max(tan_theta0_range[0], math.sqrt(spec.gamma / spec.beta) * 1.01)
    hi = max(tan_theta0_range[1], 2 * lo)
    traces = []
    for _ in range(n):
        tth = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        rho = rng.uniform(0.0, spec.alpha / 2) if tan_rho0 is None else tan_rho0
        traces.append(
            full_passage(
                system,
                tth,
                azimuth=rng.uniform(0.0, 2 * math.pi),
                tan_rho0=rho,
                rho_azimuth=rng.uniform(0.0, 2 * math.pi),
                spacing_factor=spacing_factor,
            )
        )
    return traces


def batch_exit_times(
    system,
    X0: np.ndarray,
    r_exit: float,
    horizon: float = 2000.0,
    rtol: float | None = None,
    atol: float | None = None,
):
    """Continuous exit times through ||x|| = r_exit for many starts at once.

    Position-only fast path (reduced accuracy, no tangent transport); used by
    the return-time tail machinery.
    """
    core = system.core

    def field(Y):
        return core.field(Y)

    def ev(Y):
        return np.linalg.norm(Y, axis=1) - r_exit

    def ev_grad(Y):
        r = np.linalg.norm(Y, axis=1)
        return np.einsum("ni,ni->n", Y, field(Y)) / np.maximum(r, 1e-300)

    _, _, t_event = advance_batch(
        field,
        X0,
        horizon,
        rtol=rtol if rtol is not None else system.integ.batch_rtol,
        atol=atol if atol is not None else system.integ.batch_atol,
        h0=0.3,
        event=ev,
        event_grad=ev_grad,
    )
    return t_event
