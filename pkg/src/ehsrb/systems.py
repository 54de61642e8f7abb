"""The solid-torus solenoid, its slowed perturbation, and the planar local model.

Geometry.  The global model lives on the solid torus S^1 x D^2 with
coordinates (phi, y1, y2) and the flat metric.  The base map is

    f(phi, y) = (m*phi mod 2pi, c*y + a*d(phi)),

with an offset curve d that vanishes to high order at phi = 0, so the fixed
point p sits at the origin of the phi = 0 cross-section and the derivative
there is exactly diag(m, c, c).  Writing gamma = log m, beta = -log c, the
chart x = (wrap(phi), y1, y2) is a linearizing chart at p: the linear time-1
flow of A = diag(gamma, -beta, -beta) and the solenoid share their derivative
at p, and the solenoid is deformed (smooth radial blend) to coincide with
exp(A) on a ball around p.  The slowed map g replaces exp(A) on that ball by
the time-1 map of the vector field psi(||x||) * A x, where psi = ||x||^alpha
inside radius r0, ramps monotonically to 1 at r1, and equals 1 beyond.

The gluing ball has radius slightly above e^beta * r1: every trajectory that
reaches the slowed region within unit time starts inside the ball of radius
e^beta * r1, so on the gluing boundary the time-1 flow and exp(A) agree and g
is a diffeomorphism.  Injectivity and hyperbolicity of the blended base map
are certified numerically at build time.

The local model is the same slowed flow on R^(1+1) with no solenoid around
it; it exists for high-throughput passage statistics.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp

from .config import IntegratorConfig, SystemSpec
from .errors import BoundedTimeError, ConfigurationError, DomainError
from .integrate import advance_batch

TWO_PI = 2.0 * math.pi

# margin of the gluing ball over the dip funnel, and floor for the numeric
# nonsingularity certificate of the blended map
_Z_MARGIN = 1.03
_SV_FLOOR = 0.02


def wrap_angle(phi):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(phi), TWO_PI)


class SlowdownProfile:
    """psi(r): r^alpha below r0, cubic Hermite ramp to 1 at r1, 1 beyond."""

    def __init__(self, alpha: float, r0: float, r1: float):
        self.alpha = alpha
        self.r0 = r0
        self.r1 = r1
        self._v0 = r0**alpha
        self._d0 = alpha * r0 ** (alpha - 1.0)
        self._dr = r1 - r0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        low = np.maximum(r, 1e-300) ** self.alpha
        u = np.clip((r - self.r0) / self._dr, 0.0, 1.0)
        omu = 1.0 - u
        h00 = (1.0 + 2.0 * u) * omu * omu
        mid = h00 * self._v0 + (u * omu * omu) * self._dr * self._d0 + (1.0 - h00)
        return np.where(r < self.r0, low, mid)

    def deriv(self, r):
        r = np.asarray(r, dtype=float)
        low = self.alpha * np.maximum(r, 1e-12) ** (self.alpha - 1.0)
        u = np.clip((r - self.r0) / self._dr, 0.0, 1.0)
        dh00 = 6.0 * u * (u - 1.0) / self._dr
        dh10 = (1.0 - u) * (1.0 - 3.0 * u) / self._dr
        mid = dh00 * self._v0 + dh10 * self._dr * self._d0 - dh00
        return np.where(r < self.r0, np.where(r > 0, low, 0.0), mid)

    def is_monotone(self, n: int = 4000) -> bool:
        r = np.linspace(self.r0, self.r1, n)
        return bool(np.all(np.diff(self(r)) >= -1e-15))


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_deriv(u):
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, 6.0 * u * (1.0 - u), 0.0)


class _FlowCore:
    """Shared slowed-flow machinery in linearizing coordinates (any dim)."""

    def __init__(self, spec: SystemSpec, dim: int, integ: IntegratorConfig):
        self.spec = spec
        self.dim = dim
        self.integ = integ
        self.psi = SlowdownProfile(spec.alpha, spec.r0, spec.r1)
        self.A = np.diag([spec.gamma] + [-spec.beta] * (dim - 1))
        self.expA = np.diag(
            [math.exp(spec.gamma)] + [math.exp(-spec.beta)] * (dim - 1)
        )
        self.r_funnel = math.exp(spec.beta) * spec.r1
        self.R_Z = _Z_MARGIN * self.r_funnel
        if not self.psi.is_monotone():
            raise ConfigurationError("slowdown ramp is not monotone on [r0, r1]")

    # -- vector field -------------------------------------------------------

    def field(self, X):
        """psi(||x||) A x, rows of X."""
        X = np.atleast_2d(X)
        r = np.linalg.norm(X, axis=1)
        return self.psi(r)[:, None] * (X @ self.A.T)

    def field_jac(self, x):
        """D(psi A x) at a single point."""
        r = float(np.linalg.norm(x))
        if r == 0.0:
            return np.zeros((self.dim, self.dim))
        xhat = x / r
        return float(self.psi.deriv(r)) * np.outer(self.A @ x, xhat) + float(
            self.psi(r)
        ) * self.A

    def _aug_rhs(self, _t, z):
        """Variational system: state (x, columns of J)."""
        d = self.dim
        x = z[:d]
        J = z[d:].reshape(d, d)
        dx = self.field(x[None, :])[0]
        dJ = self.field_jac(x) @ J
        return np.concatenate([dx, dJ.ravel()])

    def linear_min_radius(self, X):
        """min_t in [0,1] of ||exp(At) x|| along the *linear* flow, rows of X."""
        X = np.atleast_2d(X)
        g, b = self.spec.gamma, self.spec.beta
        xu2 = X[:, 0] ** 2
        xs2 = np.sum(X[:, 1:] ** 2, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            tstar = np.log(b * xs2 / np.maximum(g * xu2, 1e-300)) / (2 * (g + b))
        tstar = np.clip(np.where(np.isfinite(tstar), tstar, 1.0), 0.0, 1.0)
        q = xu2 * np.exp(2 * g * tstar) + xs2 * np.exp(-2 * b * tstar)
        return np.sqrt(np.minimum(q, xu2 * math.e ** (2 * g) + xs2))

    def linear_certificate(self, X):
        """True where the unit-time trajectory provably stays in the psi==1 zone."""
        return self.linear_min_radius(X) >= self.spec.r1 * (1.0 + 1e-12)

    # -- time-1 map of the slowed field --------------------------------------

    def flow_step(self, x):
        sol = solve_ivp(
            lambda _t, z: self.field(z[None, :])[0],
            (0.0, 1.0),
            x,
            method="RK45",
            rtol=self.integ.rtol,
            atol=self.integ.atol,
        )
        return sol.y[:, -1]

    def flow_step_jac(self, x):
        d = self.dim
        z0 = np.concatenate([x, np.eye(d).ravel()])
        sol = solve_ivp(
            self._aug_rhs,
            (0.0, 1.0),
            z0,
            method="RK45",
            rtol=self.integ.rtol,
            atol=self.integ.atol,
        )
        z = sol.y[:, -1]
        return z[:d], z[d:].reshape(d, d)

    def flow_step_many(self, X):
        """Time-1 map on rows of X, certificate shortcut plus batched RK45."""
        X = np.atleast_2d(X).astype(float)
        out = X @ self.expA.T
        todo = ~self.linear_certificate(X)
        if np.any(todo):
            y, _, _ = advance_batch(
                self.field,
                X[todo],
                1.0,
                rtol=self.integ.batch_rtol,
                atol=self.integ.batch_atol,
            )
            out[todo] = y
        return out

    def flow_step_jac_many(self, X):
        X = np.atleast_2d(X).astype(float)
        n, d = X.shape
        jacs = np.broadcast_to(self.expA, (n, d, d)).copy()
        out = X @ self.expA.T
        todo = np.flatnonzero(~self.linear_certificate(X))
        if todo.size:
            Z0 = np.concatenate(
                [X[todo], np.tile(np.eye(d).ravel(), (todo.size, 1))], axis=1
            )

            def rhs(Z):
                x = Z[:, :d]
                J = Z[:, d:].reshape(-1, d, d)
                r = np.linalg.norm(x, axis=1)
                psi = self.psi(r)[:, None]
                dx = psi * (x @ self.A.T)
                dpsi = self.psi.deriv(r)
                xhat = x / np.maximum(r, 1e-300)[:, None]
                DX = dpsi[:, None, None] * np.einsum(
                    "ni,nj->nij", x @ self.A.T, xhat
                ) + psi[:, :, None] * self.A
                dJ = np.einsum("nij,njk->nik", DX, J)
                return np.concatenate([dx, dJ.reshape(-1, d * d)], axis=1)

            Z, _, _ = advance_batch(
                rhs, Z0, 1.0, rtol=self.integ.batch_rtol, atol=self.integ.batch_atol
            )
            out[todo] = Z[:, :d]
            jacs[todo] = Z[:, d:].reshape(-1, d, d)
        return out, jacs


def _offset_curve(phi):
    """Offset d(phi) = (-(1-cos)^2/2, (1-cos)^2 sin); flat to high order at 0."""
    phi = np.asarray(phi, dtype=float)
    omc = 1.0 - np.cos(phi)
    return np.stack([-0.5 * omc**2, omc**2 * np.sin(phi)], axis=-1)


def _offset_deriv(phi):
    phi = np.asarray(phi, dtype=float)
    omc = 1.0 - np.cos(phi)
    s = np.sin(phi)
    return np.stack([-omc * s, 2.0 * omc * s**2 + omc**2 * np.cos(phi)], axis=-1)


class SolenoidSystem:
    """Evaluator for the (optionally slowed, optionally deformed) solenoid.

    slowed=True, deformed=True   -> the perturbed map g
    slowed=False, deformed=True  -> the Axiom-A base map (linear time-1 near p)
    slowed=False, deformed=False -> the textbook solenoid formula everywhere
    """

    dim = 3
    is_local = False

    def __init__(
        self,
        spec: SystemSpec,
        integ: IntegratorConfig | None = None,
        slowed: bool = True,
        deformed: bool = True,
    ):
        spec.validate()
        self.spec = spec
        self.integ = integ or IntegratorConfig()
        self.slowed = slowed
        self.deformed = deformed
        self.core = _FlowCore(spec, self.dim, self.integ)
        self.R_Z = self.core.R_Z
        self.R_blend = self.R_Z + spec.blend_width
        self.m = spec.base_expansion
        self.c = spec.contraction
        self.a = spec.offset
        self._holder_cache = None
        if deformed:
            self._certify_geometry()

    # -- coordinates ---------------------------------------------------------

    def to_chart(self, x):
        x = np.atleast_2d(x)
        out = x.copy().astype(float)
        out[:, 0] = wrap_angle(x[:, 0])
        return out

    def from_chart(self, xc):
        xc = np.atleast_2d(xc)
        out = xc.copy().astype(float)
        out[:, 0] = np.mod(xc[:, 0], TWO_PI)
        return out

    @property
    def fixed_point(self):
        return np.zeros(self.dim)

    def in_domain(self, x):
        x = np.atleast_2d(x)
        return np.sum(x[:, 1:] ** 2, axis=1) < 1.0

    def chart_radius(self, x):
        return np.linalg.norm(self.to_chart(x), axis=1)

    def region(self, x) -> str:
        """One of 'Y', 'Z', 'blend', 'outside' for a single state."""
        r = float(self.chart_radius(np.atleast_2d(x))[0])
        if r < self.spec.r0:
            return "Y"
        if r < self.R_Z:
            return "Z"
        if r < self.R_blend:
            return "blend"
        return "outside"

    def in_Z(self, x):
        return self.chart_radius(x) < self.R_Z

    def in_Y(self, x):
        return self.chart_radius(x) < self.spec.r0

    # -- raw solenoid and the blended base map -------------------------------

    def _solenoid(self, x):
        x = np.atleast_2d(x)
        phi = x[:, 0]
        out = np.empty_like(x)
        out[:, 0] = np.mod(self.m * phi, TWO_PI)
        out[:, 1:] = self.c * x[:, 1:] + self.a * _offset_curve(phi)
        return out

    def _solenoid_jac(self, x):
        x = np.atleast_2d(x)
        n = x.shape[0]
        J = np.zeros((n, 3, 3))
        J[:, 0, 0] = self.m
        J[:, 1, 1] = self.c
        J[:, 2, 2] = self.c
        J[:, 1:, 0] = self.a * _offset_deriv(x[:, 0])
        return J

    def _solenoid_chart(self, xc):
        """Solenoid in chart coordinates, no angle wrap (blend-ball use only)."""
        out = np.empty_like(xc)
        out[:, 0] = self.m * xc[:, 0]
        out[:, 1:] = self.c * xc[:, 1:] + self.a * _offset_curve(xc[:, 0])
        return out

    def _base_chart(self, xc, want_jac=False):
        """Blended base map on chart points with radius < R_blend."""
        r = np.linalg.norm(xc, axis=1)
        u = (r - self.R_Z) / self.spec.blend_width
        s = _smoothstep(u)
        lin = xc @ self.core.expA.T
        sol = self._solenoid_chart(xc)
        out = (1.0 - s)[:, None] * lin + s[:, None] * sol
        if not want_jac:
            return out, None
        n = xc.shape[0]
        Js = self._solenoid_jac(xc)
        J = (1.0 - s)[:, None, None] * self.core.expA + s[:, None, None] * Js
        ds_dr = _smoothstep_deriv(u) / self.spec.blend_width
        xhat = xc / np.maximum(r, 1e-300)[:, None]
        J += ds_dr[:, None, None] * np.einsum("ni,nj->nij", sol - lin, xhat)
        return out, J

    # -- public map ----------------------------------------------------------

    def step(self, x):
        """One application of the map to a single state."""
        x = np.asarray(x, dtype=float)
        if not bool(self.in_domain(x[None, :])[0]):
            raise DomainError("state outside the trapping region U")
        return self.step_many(x[None, :])[0]

    def step_many(self, X):
        X = np.atleast_2d(X).astype(float)
        xc = self.to_chart(X)
        r = np.linalg.norm(xc, axis=1)
        out = np.empty_like(X)

        far = r >= self.R_blend
        if np.any(far) or not self.deformed:
            sol = self._solenoid(X[far] if self.deformed else X)
            if self.deformed:
                out[far] = sol
            else:
                return sol
        mid = (~far) & (r >= self.R_Z)
        if np.any(mid):
            img, _ = self._base_chart(xc[mid])
            out[mid] = self.from_chart(img)
        near = r < self.R_Z
        if np.any(near):
            if self.slowed:
                img = self.core.flow_step_many(xc[near])
            else:
                img = xc[near] @ self.core.expA.T
            out[near] = self.from_chart(img)
        return out

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        if not bool(self.in_domain(x[None, :])[0]):
            raise DomainError("state outside the trapping region U")
        return self.jacobian_many(x[None, :])[0]

    def jacobian_many(self, X):
        X = np.atleast_2d(X).astype(float)
        xc = self.to_chart(X)
        r = np.linalg.norm(xc, axis=1)
        n = X.shape[0]
        J = np.empty((n, 3, 3))

        far = r >= self.R_blend
        if not self.deformed:
            return self._solenoid_jac(X)
        if np.any(far):
            J[far] = self._solenoid_jac(X[far])
        mid = (~far) & (r >= self.R_Z)
        if np.any(mid):
            _, Jm = self._base_chart(xc[mid], want_jac=True)
            J[mid] = Jm
        near = r < self.R_Z
        if np.any(near):
            if self.slowed:
                _, Jn = self.core.flow_step_jac_many(xc[near])
                J[near] = Jn
            else:
                J[near] = self.core.expA
        return J

    # -- reference cone axes ---------------------------------------------------

    def cone_axes(self, x):
        """(e_u, stable frame rows) of the reference splitting at x.

        The stable plane (the cross-section) is exactly invariant; the
        reference unstable direction is the angular direction, around which
        cones of width above atan(offset*max|d'|/(m-c)) are invariant.
        """
        e_u = np.array([1.0, 0.0, 0.0])
        f1 = np.array([0.0, 1.0, 0.0])
        f2 = np.array([0.0, 0.0, 1.0])
        return e_u, np.stack([f1, f2])

    # -- bounds used by the effective-rate cutoff ------------------------------

    def holder_bounds(self, rng=None, n: int | None = None, step: float | None = None):
        """Sampled log-bounds (L, L') on ||Dg||, ||Dg^-1|| and the Hoelder
        quotient of Dg over U; cached."""
        if self._holder_cache is not None and rng is None:
            return self._holder_cache
        rng = rng or np.random.default_rng(7)
        n = n or 2000
        step = step or 1e-4
        X = sample_states(self, n, rng)
        J = self.jacobian_many(X)
        sv = np.linalg.svd(J, compute_uv=False)
        L = float(np.log(max(sv[:, 0].max(), 1.0 / sv[:, -1].min())))
        offs = rng.normal(size=X.shape)
        offs *= step / np.linalg.norm(offs, axis=1)[:, None]
        J2 = self.jacobian_many(X + offs)
        quot = np.linalg.norm(J2 - J, axis=(1, 2)) / step**self.spec.alpha
        L_prime = float(np.log1p(quot.max()))
        out = {"L": L, "L_prime": L_prime, "n_samples": int(n), "step": float(step)}
        self._holder_cache = out
        return out

    # -- build-time certificates ----------------------------------------------

    def _certify_geometry(self):
        if self.R_blend >= 0.95 * math.pi:
            raise ConfigurationError("blend annulus leaves the angular chart")
        rng = np.random.default_rng(12345)
        # blend annulus inside the trapping region
        pts = rng.normal(size=(512, 3))
        pts /= np.linalg.norm(pts, axis=1)[:, None]
        shell = pts * rng.uniform(self.R_Z, self.R_blend, size=(512, 1))
        if np.any(np.sum(shell[:, 1:] ** 2, axis=1) >= 1.0):
            raise ConfigurationError(
                "blend annulus not contained in the trapping region"
            )
        img, J = self._base_chart(shell, want_jac=True)
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[:, -1].min() < _SV_FLOOR:
            raise ConfigurationError(
                "blended base map close to singular in the annulus"
            )
        # gluing: on the boundary of Z the linear certificate must hold
        boundary = pts * self.R_Z
        if not np.all(self.core.linear_certificate(boundary)):
            raise ConfigurationError("gluing ball does not contain the dip funnel")


class LocalSystem:
    """Planar passage model: the slowed flow on R^2 with no global recurrence."""

    dim = 2
    is_local = True

    def __init__(self, spec: SystemSpec, integ: IntegratorConfig | None = None):
        spec.validate(solenoid=False)
        self.spec = spec
        self.integ = integ or IntegratorConfig()
        self.core = _FlowCore(spec, self.dim, self.integ)
        self.R_Z = self.core.R_Z
        self._holder_cache = None

    def to_chart(self, x):
        return np.atleast_2d(x).astype(float)

    from_chart = to_chart

    @property
    def fixed_point(self):
        return np.zeros(self.dim)

    def in_domain(self, x):
        x = np.atleast_2d(x)
        return np.linalg.norm(x, axis=1) < 4.0

    def chart_radius(self, x):
        return np.linalg.norm(np.atleast_2d(x), axis=1)

    def region(self, x) -> str:
        r = float(self.chart_radius(x)[0])
        if r < self.spec.r0:
            return "Y"
        if r < self.R_Z:
            return "Z"
        return "outside"

    def in_Z(self, x):
        return self.chart_radius(x) < self.R_Z

    def in_Y(self, x):
        return self.chart_radius(x) < self.spec.r0

    def step(self, x):
        x = np.asarray(x, dtype=float)
        if not bool(self.in_domain(x[None, :])[0]):
            raise DomainError("state outside the local-model domain")
        return self.step_many(x[None, :])[0]

    def step_many(self, X):
        return self.core.flow_step_many(np.atleast_2d(X))

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        if not bool(self.in_domain(x[None, :])[0]):
            raise DomainError("state outside the local-model domain")
        return self.jacobian_many(x[None, :])[0]

    def jacobian_many(self, X):
        _, J = self.core.flow_step_jac_many(np.atleast_2d(X))
        return J

    def cone_axes(self, x):
        return np.array([1.0, 0.0]), np.array([[0.0, 1.0]])

    def holder_bounds(self, rng=None, n: int | None = None, step: float | None = None):
        if self._holder_cache is not None and rng is None:
            return self._holder_cache
        rng = rng or np.random.default_rng(7)
        n = n or 1000
        step = step or 1e-4
        X = rng.uniform(-1.0, 1.0, size=(n, 2))
        J = self.jacobian_many(X)
        sv = np.linalg.svd(J, compute_uv=False)
        L = float(np.log(max(sv[:, 0].max(), 1.0 / sv[:, -1].min())))
        offs = rng.normal(size=X.shape)
        offs *= step / np.linalg.norm(offs, axis=1)[:, None]
        quot = np.linalg.norm(self.jacobian_many(X + offs) - J, axis=(1, 2))
        L_prime = float(np.log1p((quot / step**self.spec.alpha).max()))
        out = {"L": L, "L_prime": L_prime, "n_samples": int(n), "step": float(step)}
        self._holder_cache = out
        return out


def build_system(
    spec: SystemSpec,
    integ: IntegratorConfig | None = None,
    slowed: bool = True,
    deformed: bool = True,
) -> SolenoidSystem:
    """Validate the spec and return the solenoid evaluator."""
    return SolenoidSystem(spec, integ, slowed=slowed, deformed=deformed)


def build_local_system(
    spec: SystemSpec, integ: IntegratorConfig | None = None
) -> LocalSystem:
    return LocalSystem(spec, integ)


def sample_states(system, n: int, rng, outside_z: bool = False) -> np.ndarray:
    """Uniform-ish sample of valid states, optionally restricted to U \\ Z."""
    out = np.empty((0, system.dim))
    while out.shape[0] < n:
        m = 2 * (n - out.shape[0]) + 8
        if system.is_local:
            cand = rng.uniform(-1.0, 1.0, size=(m, 2))
        else:
            cand = np.column_stack(
                [
                    rng.uniform(0.0, TWO_PI, size=m),
                    rng.uniform(-1.0, 1.0, size=(m, 2)).reshape(m, 2),
                ]
            )
            cand = cand[np.sum(cand[:, 1:] ** 2, axis=1) < 0.95**2]
        if outside_z:
            cand = cand[~system.in_Z(cand)]
        out = np.vstack([out, cand])
    return out[:n]
