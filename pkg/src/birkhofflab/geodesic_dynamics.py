"""Geodesic flow, Jacobi fields in polar form, and closed-geodesic search.

States are integrated in the ambient representation (u, du/dt) on the chart
sphere, where the revolution metrics of :mod:`.metric_models` are globally
smooth; the colatitude/azimuth chart is only used at the API boundary.  The
constrained equation of motion for g(v, w) = a v.w + b(z) v3 w3 is

    u'' = (mu * u - q * e3) / a,
    q   = b * xi3 + b'(z) * v3^2 / 2,
    xi3 = (mu * z - b'(z) * v3^2 / 2) / (a + b),
    mu  = a * (b'(z) * v3^2 * z / 2 - |v|^2 * (a + b)) / E(z),

with z = u3 and E the meridian profile coefficient.  The transversal Jacobi
field u_J with u_J(0) = 0, u_J'(0) = 1 is carried along in polar form
(u_J' + i u_J = r e^{i theta}), which obeys

    theta' = cos(theta)^2 + K sin(theta)^2,
    (log r)' = (1 - K) sin(theta) cos(theta),

so conjugate times are the roots of the monotone lifted angle theta at
multiples of pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import least_squares

from . import metric_models as mm
from ._integrate import dense_state, integrate_adaptive, sweep_linear_events
from .errors import (ChartDomainError, NoConvergenceError, PreconditionError,
                     ReturnFailure)

_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def geodesic_rhs(model, jacobi=False):
    """Vectorised RHS for batches of shape (n, 6) or, with the Jacobi
    augmentation, (n, 8) where columns 6, 7 hold (theta, log r)."""
    a = model.a
    bc = model.b_coef
    bpc = model.bp_coef

    def rhs(t, y):
        u = y[:, 0:3]
        v = y[:, 3:6]
        z = u[:, 2]
        v3 = v[:, 2]
        b = npoly.polyval(z, bc)
        bp = npoly.polyval(z, bpc)
        v3sq = v3 * v3
        vsq = np.einsum("ij,ij->i", v, v)
        apb = a + b
        E = a + b * (1.0 - z * z)
        mu = a * (0.5 * bp * v3sq * z - vsq * apb) / E
        xi3 = (mu * z - 0.5 * bp * v3sq) / apb
        q = b * xi3 + 0.5 * bp * v3sq
        out = np.empty_like(y)
        out[:, 0:3] = v
        out[:, 3:6] = (mu[:, None] / a) * u
        out[:, 5] -= q / a
        if jacobi:
            th = y[:, 6]
            Ep = bp * (1.0 - z * z) - 2.0 * z * b
            K = 1.0 / E - z * Ep / (2.0 * E * E)
            s = np.sin(th)
            c = np.cos(th)
            out[:, 6] = c * c + K * s * s
            out[:, 7] = (1.0 - K) * s * c
        return out

    return rhs


def state_projector(model):
    """Renormaliser applied after each accepted step: |u| = 1, u.v = 0,
    g(v, v) = 1."""
    a = model.a
    bc = model.b_coef

    def project(y):
        u = y[:, 0:3]
        v = y[:, 3:6]
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        v -= np.einsum("ij,ij->i", u, v)[:, None] * u
        z = u[:, 2]
        gnorm = np.sqrt(a * np.einsum("ij,ij->i", v, v)
                        + npoly.polyval(z, bc) * v[:, 2] ** 2)
        v /= gnorm[:, None]
        return y

    return project


# ---------------------------------------------------------------------------
# states and trajectories
# ---------------------------------------------------------------------------

@dataclass
class GeodesicState:
    """Point plus unit direction in chart coordinates.

    ``direction`` holds the chart velocities (dtheta/dt, dphi/dt) of the
    unit-speed parametrisation.
    """

    point: mm.SurfacePoint
    direction: tuple
    arclength: float = 0.0


def state_to_ambient(model, state):
    th, ph = state.point.theta, state.point.phi
    u = mm.chart_to_unitvec(th, ph)
    dth, dph = state.direction
    e_th = np.array([math.cos(th) * math.cos(ph),
                     math.cos(th) * math.sin(ph), -math.sin(th)])
    e_ph = np.array([-math.sin(th) * math.sin(ph),
                     math.sin(th) * math.cos(ph), 0.0])
    return u, dth * e_th + dph * e_ph


def state_from_ambient(model, u, v, arclength=0.0):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    th, ph = mm.unitvec_to_chart(u)
    st = math.sin(th)
    if st < 1e-12:
        raise ChartDomainError("state lies on a chart pole; no (theta, phi) "
                               "direction components exist there")
    dth = -float(v[2]) / st
    dph = float(u[0] * v[1] - u[1] * v[0]) / (st * st)
    point = mm.SurfacePoint(theta=th, phi=ph,
                            position=model.embedded_position(u))
    return GeodesicState(point=point, direction=(dth, dph),
                         arclength=arclength)


def state_from_angle(model, theta, phi, psi, arclength=0.0):
    """Unit-speed state at (theta, phi) making angle ``psi`` with the
    meridian direction (psi = pi/2 points along increasing phi)."""
    z = math.cos(theta)
    E = float(model.profile_E(z))
    G = float(model.profile_G(z))
    if G <= 0.0:
        raise ChartDomainError("direction frame undefined at the poles")
    dth = math.cos(psi) / math.sqrt(E)
    dph = math.sin(psi) / math.sqrt(G)
    point = mm.surface_point(model, theta, phi)
    return GeodesicState(point=point, direction=(dth, dph),
                         arclength=arclength)


def unit_speed_defect(model, u, v):
    return abs(float(model.dot(u, v, v)) - 1.0)


class Trajectory:
    """Dense-output geodesic trajectory (ambient representation inside)."""

    def __init__(self, model, records, t_end, y_end):
        self.model = model
        self._records = records
        self.t_end = t_end
        self._y_end = y_end
        self._ts = np.array([r.t for r in records] + [t_end])

    def ambient(self, t):
        """(u, v) at time t from the stored dense output."""
        t = float(t)
        if not (self._ts[0] - 1e-12 <= t <= self.t_end + 1e-12):
            raise ValueError(f"t={t} outside trajectory range")
        if t >= self.t_end:
            y = self._y_end
        else:
            k = min(np.searchsorted(self._ts, t, side="right") - 1,
                    len(self._records) - 1)
            k = max(k, 0)
            y = self._records[k].eval(t)
        y = np.asarray(y)
        if y.ndim == 2:
            y = y[0]
        return y[0:3].copy(), y[3:6].copy()

    def state(self, t):
        u, v = self.ambient(t)
        return state_from_ambient(self.model, u, v, arclength=t)

    def sample_times(self, n):
        return np.linspace(0.0, self.t_end, n)

    def sample_ambient(self, n):
        ts = self.sample_times(n)
        out = np.empty((n, 6))
        for i, t in enumerate(ts):
            u, v = self.ambient(t)
            out[i, 0:3] = u
            out[i, 3:6] = v
        return ts, out

    def to_csv_rows(self, n):
        """Rows (t, theta, phi, dtheta, dphi); chart components are NaN at
        pole passages."""
        ts, ys = self.sample_ambient(n)
        rows = []
        for t, y in zip(ts, ys):
            try:
                s = state_from_ambient(self.model, y[0:3], y[3:6], t)
                rows.append((t, s.point.theta, s.point.phi,
                             s.direction[0], s.direction[1]))
            except ChartDomainError:
                rows.append((t, math.acos(max(-1, min(1, y[2]))),
                             math.nan, math.nan, math.nan))
        return rows


def integrate_geodesic(model, state, t_end, tol=1e-10):
    """Integrate the geodesic flow from ``state`` for time ``t_end``.

    ``tol`` is the relative tolerance of the embedded pair; the absolute
    tolerance is tied two decades below it.
    """
    if t_end <= 0.0:
        raise PreconditionError("t_end must be positive")
    if not (1e-12 <= tol <= 1e-6):
        raise PreconditionError("tol must lie in [1e-12, 1e-6]")
    u, v = state_to_ambient(model, state)
    y0 = np.concatenate([u, v])[None, :]
    project = state_projector(model)
    t, y, records = integrate_adaptive(
        geodesic_rhs(model), y0, (0.0, t_end), rtol=tol, atol=tol * 1e-2,
        project=project, store=True)
    return Trajectory(model, records, t, y[0] if y.ndim == 2 else y)


def reversed_state(state):
    return GeodesicState(point=state.point,
                         direction=(-state.direction[0], -state.direction[1]),
                         arclength=state.arclength)


def clairaut_invariant(model, state):
    """G * dphi/dt = a (u1 v2 - u2 v1); constant along geodesics of any
    revolution metric and used as an integration diagnostic."""
    if isinstance(state, GeodesicState):
        u, v = state_to_ambient(model, state)
    else:
        u, v = np.asarray(state[0:3]), np.asarray(state[3:6])
    return float(model.a * (u[0] * v[1] - u[1] * v[0]))


# ---------------------------------------------------------------------------
# Jacobi data and conjugate points
# ---------------------------------------------------------------------------

@dataclass
class JacobiPolarState:
    """Polar form of the transversal Jacobi field: angle theta (lifted to the
    real line), radius r > 0, time t; u_J = r sin(theta), u_J' = r cos(theta)."""

    theta: float
    r: float
    t: float

    @property
    def value(self):
        return self.r * math.sin(self.theta)

    @property
    def derivative(self):
        return self.r * math.cos(self.theta)


def _augmented_initial(model, state):
    u, v = state_to_ambient(model, state)
    return np.concatenate([u, v, [0.0, 0.0]])[None, :]


def _augmented_projector(model):
    base = state_projector(model)

    def project(y):
        base(y[:, 0:6])
        return y

    return project


def jacobi_polar_advance(model, base, t_end, tol=1e-10):
    """Advance the polar Jacobi data (theta(0) = 0, r(0) = 1) for time
    ``t_end`` along the geodesic through ``base``."""
    if t_end < 0.0:
        raise PreconditionError("t_end must be non-negative")
    if t_end == 0.0:
        return JacobiPolarState(theta=0.0, r=1.0, t=0.0)
    y0 = _augmented_initial(model, base)
    t, y, _ = integrate_adaptive(
        geodesic_rhs(model, jacobi=True), y0, (0.0, t_end),
        rtol=tol, atol=tol * 1e-2, project=_augmented_projector(model))
    row = y[0]
    return JacobiPolarState(theta=float(row[6]), r=float(math.exp(row[7])),
                            t=t)


def conjugate_time(model, base, order, tol=1e-11):
    """Smallest t with lifted Jacobi angle equal to order * pi (order 1 or 2)."""
    if order not in (1, 2):
        raise PreconditionError("order must be 1 or 2")
    kmin, _ = mm.curvature_extremes(model)
    horizon = order * math.pi / min(1.0, kmin) + 1.0
    y0 = _augmented_initial(model, base)
    w = np.zeros(8)
    w[6] = 1.0
    res = sweep_linear_events(
        geodesic_rhs(model, jacobi=True), y0, horizon, w,
        target=order * math.pi, n_events=1, expected_slopes=(+1,),
        rtol=tol, atol=tol * 1e-2, project=_augmented_projector(model))
    if res.n_found[0] < 1 or res.grazing[0]:
        raise ReturnFailure(
            f"conjugate point of order {order} not reached before t={horizon}")
    return float(res.t_events[0, 0])


# ---------------------------------------------------------------------------
# closed geodesics
# ---------------------------------------------------------------------------

class ClosedOrbit:
    """A closed geodesic stored as a uniform sample of its ambient states,
    with periodic splines for point/velocity evaluation."""

    def __init__(self, model, length, states, closure_residual):
        from scipy.interpolate import CubicSpline

        self.model = model
        self.length = float(length)
        self.states = np.asarray(states, dtype=float)
        self.closure_residual = float(closure_residual)
        ts = np.linspace(0.0, self.length, len(self.states) + 1)
        wrapped = np.vstack([self.states, self.states[0:1]])
        self._spline = CubicSpline(ts, wrapped, axis=0, bc_type="periodic")

    def at(self, x):
        """Ambient (u, v) at arclength x (periodically extended)."""
        y = self._spline(np.mod(x, self.length))
        return y[..., 0:3], y[..., 3:6]

    @property
    def clairaut(self):
        u, v = self.states[0, 0:3], self.states[0, 3:6]
        return self.model.a * (u[0] * v[1] - u[1] * v[0])

    def plane_normal(self):
        """Unit normal of the plane through the origin containing the orbit,
        or None if the orbit is not planar to 1e-8."""
        pts = self.states[:, 0:3]
        _, s, vt = np.linalg.svd(pts - 0.0, full_matrices=False)
        normal = vt[2]
        if np.max(np.abs(pts @ normal)) > 1e-8:
            return None
        return normal / np.linalg.norm(normal)


def equator_seed(model, x=0.0):
    phi = x / math.sqrt(model.a)
    return state_from_angle(model, math.pi / 2, phi, math.pi / 2)


def meridian_seed(model, phi=0.0):
    return state_from_angle(model, math.pi / 2, phi, 0.0)


def _flow_to(model, y0, t_end, tol):
    t, y, _ = integrate_adaptive(geodesic_rhs(model), y0[None, :],
                                 (0.0, t_end), rtol=tol, atol=tol * 1e-3,
                                 project=state_projector(model))
    return y[0]


def find_closed_geodesic(model, seed, period_guess, tol=1e-12,
                         closure_target=1e-10, n_store=1024):
    """Shooting refinement of (initial state, period) towards a closed orbit.

    The azimuth of the starting point is held fixed to quotient out the
    rotational symmetry; the colatitude, launch angle, and period are the
    shooting unknowns.  Raises :class:`NoConvergenceError` when the closure
    residual cannot be brought below ``closure_target``.
    """
    theta0 = seed.point.theta
    phi0 = seed.point.phi
    st = math.sin(theta0)
    dth, dph = seed.direction
    z = math.cos(theta0)
    E = float(model.profile_E(z))
    G = float(model.profile_G(z))
    psi0 = math.atan2(math.sqrt(G) * dph, math.sqrt(E) * dth)

    def residual(p):
        th, ps, T = p
        # steer the solver back when it wanders out of the chart or to a
        # non-positive period
        margin = 1e-6
        violation = (max(0.0, margin - T) + max(0.0, margin - th)
                     + max(0.0, th - (math.pi - margin)))
        if violation > 0.0:
            return np.full(6, 1.0 + violation)
        state = state_from_angle(model, th, phi0, ps)
        u, v = state_to_ambient(model, state)
        y0 = np.concatenate([u, v])
        yT = _flow_to(model, y0, T, tol)
        return yT - y0

    x0 = np.array([theta0, psi0, period_guess])
    seed_resid = float(np.max(np.abs(residual(x0))))
    if seed_resid <= 0.1 * closure_target:
        # symmetric seeds (equator, meridians) are already exact orbits
        th, ps, T = x0
        resid = seed_resid
    else:
        sol = least_squares(residual, x0=x0, method="lm", xtol=3e-16,
                            ftol=3e-16, gtol=3e-16, max_nfev=50 * 4)
        th, ps, T = sol.x
        resid = float(np.max(np.abs(sol.fun)))
        if resid > closure_target:
            raise NoConvergenceError(
                f"closure residual {resid:.3g} exceeds target "
                f"{closure_target:.3g} after shooting refinement")
    state = state_from_angle(model, th, phi0, ps)
    u, v = state_to_ambient(model, state)
    y0 = np.concatenate([u, v])
    ts = np.linspace(0.0, T, n_store, endpoint=False)
    states = np.empty((n_store, 6))
    states[0] = y0
    traj = integrate_geodesic(model, state, T, tol=max(tol, 1e-12))
    for i in range(1, n_store):
        uu, vv = traj.ambient(ts[i])
        states[i, 0:3] = uu
        states[i, 3:6] = vv
    return ClosedOrbit(model, T, states, resid)


def equator_orbit(model, n_store=1024, tol=1e-12):
    """The equatorial closed geodesic, refined and sampled."""
    return find_closed_geodesic(model, equator_seed(model),
                                model.equator_length, tol=tol,
                                n_store=n_store)


def meridian_orbit(model, phi=0.0, n_store=1024, tol=1e-12):
    """The meridian closed geodesic through azimuth ``phi``."""
    return find_closed_geodesic(model, meridian_seed(model, phi),
                                model.meridian_circuit_length(), tol=tol,
                                n_store=n_store)
