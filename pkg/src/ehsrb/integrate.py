"""Batched adaptive Runge-Kutta stepping for autonomous fields.

Single high-accuracy trajectories go through scipy.integrate.solve_ivp (see
flow.py); this module provides the vectorized counterpart used for large
ensembles, where every row of the state array carries its own step size and
remaining time.  Coefficients are the Dormand-Prince 4(5) pair.
"""

from __future__ import annotations

import numpy as np

_A21 = np.array([1 / 5])
_A31 = np.array([3 / 40, 9 / 40])
_A41 = np.array([44 / 45, -56 / 15, 32 / 9])
_A51 = np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729])
_A61 = np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656])
_STAGES = (_A21, _A31, _A41, _A51, _A61)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])


def advance_batch(
    field,
    y0: np.ndarray,
    t_goal: float | np.ndarray,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    h0: float = 0.05,
    event=None,
    event_grad=None,
    max_steps: int = 200_000,
):
    """Advance each row of ``y0`` by its own time budget under ``field``.

    field(Y) must accept and return (n, m) arrays.  If ``event`` is given
    (vectorized scalar function of the state, upward crossings), a row stops
    at its first crossing and the crossing time is recorded; crossing times
    are refined with a cubic Hermite model of the event function over the
    accepted step (needs ``event_grad(Y) -> d(event)/dt``).

    Returns (y_final, t_elapsed, t_event) where t_event is nan for rows whose
    event never fired.
    """
    y = np.array(y0, dtype=float, copy=True)
    n = y.shape[0]
    t = np.zeros(n)
    goal = np.broadcast_to(np.asarray(t_goal, dtype=float), (n,)).copy()
    h = np.full(n, h0)
    t_event = np.full(n, np.nan)
    active = np.arange(n)
    g_prev = event(y) if event is not None else None

    for _ in range(max_steps):
        if active.size == 0:
            break
        ya = y[active]
        ha = np.minimum(h[active], goal[active] - t[active])

        k = np.empty((7, ya.shape[0], ya.shape[1]))
        k[0] = field(ya)
        for i, row in enumerate(_STAGES, start=1):
            incr = np.tensordot(row, k[:i], axes=(0, 0))
            k[i] = field(ya + ha[:, None] * incr)
        y_new = ya + ha[:, None] * np.tensordot(_B[:6], k[:6], axes=(0, 0))
        k[6] = field(y_new)
        err_vec = ha[:, None] * np.tensordot(_E, k, axes=(0, 0))
        scale = atol + rtol * np.maximum(np.abs(ya), np.abs(y_new))
        err = np.sqrt(np.mean((err_vec / scale) ** 2, axis=1))

        accept = err <= 1.0
        idx_acc = active[accept]
        if idx_acc.size:
            t[idx_acc] = t[idx_acc] + ha[accept]
            y[idx_acc] = y_new[accept]
            if event is not None:
                g_new = event(y_new[accept])
                crossed = (g_prev[idx_acc] < 0.0) & (g_new >= 0.0)
                if np.any(crossed):
                    rows = idx_acc[crossed]
                    hc = ha[accept][crossed]
                    g0 = g_prev[rows]
                    g1 = g_new[crossed]
                    if event_grad is not None:
                        d0 = event_grad(ya[accept][crossed]) * hc
                        d1 = event_grad(y_new[accept][crossed]) * hc
                        frac = _hermite_root(g0, g1, d0, d1)
                    else:
                        frac = g0 / (g0 - g1)
                    t_event[rows] = t[rows] - hc + frac * hc
                    goal[rows] = t[rows]  # deactivate
                g_prev[idx_acc] = g_new

        with np.errstate(divide="ignore"):
            factor = 0.9 * err ** (-0.2)
        factor = np.clip(np.where(np.isfinite(factor), factor, 5.0), 0.2, 5.0)
        h[active] = np.maximum(ha * factor, 1e-13)

        active = np.flatnonzero(t < goal - 1e-14)
    else:
        raise RuntimeError("advance_batch exceeded max_steps")

    return y, t, t_event


def _hermite_root(g0, g1, d0, d1, iters: int = 3):
    """Root in [0,1] of the cubic with values g0,g1 and derivatives d0,d1."""
    s = g0 / (g0 - g1)
    a = d0 + d1 - 2 * (g1 - g0)
    b = 3 * (g1 - g0) - 2 * d0 - d1
    for _ in range(iters):
        val = ((a * s + b) * s + d0) * s + g0
        der = (3 * a * s + 2 * b) * s + d0
        step = np.where(np.abs(der) > 1e-300, val / np.where(der == 0, 1, der), 0.0)
        s = np.clip(s - step, 0.0, 1.0)
    return s
