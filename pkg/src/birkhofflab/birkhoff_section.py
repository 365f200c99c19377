"""Transversal annulus over a simple closed geodesic and its return data.

The annulus over a closed geodesic gamma consists of the unit tangent
vectors based on gamma that point into one of the two disks it bounds,
charted by (x, y): x the arc parameter along gamma, y the angle from
gamma'(x).  All base geodesics handled here lie on a plane through the
origin of the chart sphere (the equator and the meridians of a revolution
metric, and every geodesic of the round one), so hits of the flowed orbit
on the annulus are roots of the scalar height u . n, with n the plane
normal: downward crossings land on the opposite annulus, upward crossings
return to the original one.

The first-return data (X, Y, tau) is assembled on a periodic-by-closed grid
over [0, L) x [0, pi].  Interior nodes are integrated in batches; boundary
rows are not integrated at all: there the return time is the second
conjugate time along gamma (forward along the lower row, backward along the
upper one) and the footpoint advance equals that time, which pins the lift

    X = x + rho - L,     rho = rho_plus + rho_minus in (0, 2L),

whose flux vanishes.  Each leg advance rho_{+,-} is the unique arc-position
representative in (0, L); this is well defined because each leg of the
return arc is injective when the curvature is pinched above 1/4, which is
what the sampled self-intersection test in :func:`zero_flux_lift` checks.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from . import geodesic_dynamics as gd
from . import metric_models as mm
from . import strip_calculus as sc
from ._integrate import integrate_adaptive, sweep_linear_events
from .errors import (InternalConsistencyError, PinchingViolationError,
                     PreconditionError, ReturnFailure, SectionInvalidError)

_TWO_PI = 2.0 * math.pi

STATUS_OK = 0
STATUS_GRAZING = 1
STATUS_MISSING = 2


# ---------------------------------------------------------------------------
# curve self-intersection machinery
# ---------------------------------------------------------------------------

def _segment_pair_distance(p1, q1, p2, q2):
    """Minimum distance between segments [p1, q1] and [p2, q2] in R^3."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    c = d1 @ r
    b = d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-30 else 0.0
    t = (b * s + f) / e if e > 1e-30 else 0.0
    if t < 0.0:
        t = 0.0
        s = np.clip(-c / a, 0.0, 1.0) if a > 1e-30 else 0.0
    elif t > 1.0:
        t = 1.0
        s = np.clip((b - c) / a, 0.0, 1.0) if a > 1e-30 else 0.0
    diff = (p1 + s * d1) - (p2 + t * d2)
    return math.sqrt(diff @ diff)


def curve_self_intersects(points, closed=True, resolution=1e-6,
                          exclusion=3):
    """Whether a polyline in R^3 approaches itself closer than ``resolution``
    away from parameter-adjacent segments."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    segs_a = pts
    segs_b = np.roll(pts, -1, axis=0) if closed else pts[1:]
    nseg = n if closed else n - 1
    mids = 0.5 * (segs_a[:nseg] + segs_b[:nseg])
    seg_len = np.max(np.linalg.norm(segs_b[:nseg] - segs_a[:nseg], axis=1))
    tree = cKDTree(mids)
    pairs = tree.query_pairs(r=2.0 * seg_len + resolution)
    for i, j in pairs:
        gap = min(abs(i - j), nseg - abs(i - j)) if closed else abs(i - j)
        if gap <= exclusion:
            continue
        d = _segment_pair_distance(segs_a[i], segs_b[i % n],
                                   segs_a[j], segs_b[j % n])
        if d < resolution:
            return True
    return False


def minimal_period_fold(orbit, max_fold=6, tol=1e-7):
    """Smallest integer m > 1 such that the stored orbit is an m-fold cover
    of a shorter closed orbit, or 1 if it is primitive."""
    states = orbit.states
    n = len(states)
    for m in range(2, max_fold + 1):
        if n % m:
            continue
        shift = n // m
        if np.max(np.abs(states - np.roll(states, -shift, axis=0))) < tol:
            return m
    return 1


# ---------------------------------------------------------------------------
# the section
# ---------------------------------------------------------------------------

@dataclass
class BirkhoffSection:
    """Annulus chart over a planar simple closed geodesic."""

    model: mm.MetricModel
    orbit: gd.ClosedOrbit
    normal: np.ndarray
    length: float
    _alpha_spline: CubicSpline = field(repr=False, default=None)
    _alpha0: float = 0.0

    def frames(self, x):
        """(u, gamma', gamma'_perp) at arc positions x (vectorised)."""
        u, v = self.orbit.at(np.asarray(x, dtype=float))
        raw = np.cross(u, v)
        nrm = np.sqrt(self.model.dot(u, raw, raw))
        return u, v, raw / nrm[..., None]

    def section_vector(self, x, y):
        """Ambient (point, direction) of the annulus vector at (x, y)."""
        u, t, p = self.frames(x)
        y = np.asarray(y, dtype=float)
        w = np.cos(y)[..., None] * t + np.sin(y)[..., None] * p
        return u, w

    def footpoint(self, points):
        """Arc positions in [0, L) of points lying on the base circle."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        alpha = np.arctan2(pts @ self._p2, pts @ self._p1)
        rel = np.mod(alpha - self._alpha0, _TWO_PI)
        x = self._alpha_spline(rel)
        return np.mod(x, self.length)

    def angles_of(self, x, w):
        """Annulus angle of tangent vectors w based at arc positions x,
        in (-pi, pi] (positive on the annulus itself)."""
        u, t, p = self.frames(x)
        ct = self.model.dot(u, w, t)
        st = self.model.dot(u, w, p)
        return np.arctan2(st, ct)


def build_section(model, orbit=None, resolution=1e-6):
    """Annulus over ``orbit`` (default: the equatorial geodesic).

    The base curve must be simple at the given spatial resolution and must
    lie on a plane through the origin of the chart sphere; otherwise a
    :class:`SectionInvalidError` is raised.
    """
    if orbit is None:
        orbit = gd.equator_orbit(model)
    pts = orbit.states[:, 0:3]
    if curve_self_intersects(pts, closed=True, resolution=resolution):
        raise SectionInvalidError("base curve is not simple at resolution "
                                  f"{resolution:g}")
    normal = orbit.plane_normal() if hasattr(orbit, "plane_normal") else None
    if normal is None:
        raise SectionInvalidError(
            "base geodesic does not lie on a central plane; only planar "
            "base curves are supported")
    sec = BirkhoffSection(model=model, orbit=orbit, normal=normal,
                          length=orbit.length)
    # Orient the normal towards the positive side of the annulus.
    u0, t0, p0 = sec.frames(0.0)
    if float(p0 @ normal) < 0.0:
        normal = -normal
        sec.normal = normal
    # Arc position as a function of the in-plane angle (strictly monotone).
    p1 = u0 / np.linalg.norm(u0)
    p2 = np.cross(normal, p1)
    sec._p1, sec._p2 = p1, p2
    ts = np.linspace(0.0, orbit.length, 4096, endpoint=False)
    us, _ = orbit.at(ts)
    alpha = np.unwrap(np.arctan2(us @ p2, us @ p1))
    if alpha[1] < alpha[0]:
        raise SectionInvalidError("base curve orientation is degenerate")
    sec._alpha0 = alpha[0]
    rel = alpha - alpha[0]
    rel_ext = np.concatenate([rel, [_TWO_PI]])
    ts_ext = np.concatenate([ts, [orbit.length]])
    sec._alpha_spline = CubicSpline(rel_ext, ts_ext)
    return sec


# ---------------------------------------------------------------------------
# return data
# ---------------------------------------------------------------------------

@dataclass
class ReturnSample:
    """First-return record of one annulus vector."""

    x: float
    y: float
    tau_plus: float
    tau: float
    rho_plus: float
    rho: float
    X: float
    Y: float
    jac_angle: float
    jac_du: float
    status: int = STATUS_OK


@dataclass
class BirkhoffGrid:
    """Sampled return data of the annulus over the base geodesic."""

    section: BirkhoffSection
    L: float
    xs: np.ndarray
    ys: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    tau: np.ndarray
    tau_plus: np.ndarray
    rho_plus: np.ndarray
    jac_angle: np.ndarray      # lifted Jacobi angle at the return time
    jac_du: np.ndarray         # transversal Jacobi derivative at the return
    status: np.ndarray

    @property
    def nx(self):
        return len(self.xs)

    @property
    def ny(self):
        return len(self.ys)

    def require_clean(self):
        if np.any(self.status != STATUS_OK):
            bad = int(np.sum(self.status != STATUS_OK))
            raise InternalConsistencyError(
                f"{bad} grid nodes are flagged; returns are unreliable")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "y", "X", "Y", "tau"])
            for i in range(self.nx):
                for j in range(self.ny):
                    wr.writerow([repr(float(self.xs[i])), repr(float(self.ys[j])),
                                 repr(float(self.X[i, j])),
                                 repr(float(self.Y[i, j])),
                                 repr(float(self.tau[i, j]))])

    def summary(self, model=None):
        lift = zero_flux_lift(self, arc_check_nodes=0)
        out = {
            "L": self.L,
            "nx": self.nx,
            "ny": self.ny,
            "flux": sc.flux(lift),
            "sup_distance_to_identity": lift.sup_distance_to_identity(),
            "tau_min": float(np.min(self.tau)),
            "tau_max": float(np.max(self.tau)),
        }
        act = sc.action(lift)
        out["cal"] = sc.calabi(lift, action_grid=act) if abs(out["flux"]) < 1e-6 else None
        out["residuals"] = {
            "tau_action_max": verify_tau_action_identity(self, lift, act),
            "omega_preservation_max": sc.omega_preservation_residual(lift),
        }
        if model is not None:
            out["residuals"]["area_identity_rel"] = \
                verify_area_identity(self, lift, model)
            out["residuals"]["contact_volume_rel"] = \
                contact_volume_check(self, model)
        return out


def _seed_batch(section, xs, ys_rows):
    """Initial (n, 8) states for all nodes of the given rows."""
    n_rows = len(ys_rows)
    nx = len(xs)
    u, t, p = section.frames(xs)
    seeds = np.empty((n_rows * nx, 8))
    for r, y in enumerate(ys_rows):
        w = math.cos(y) * t + math.sin(y) * p
        seeds[r * nx:(r + 1) * nx, 0:3] = u
        seeds[r * nx:(r + 1) * nx, 3:6] = w
    seeds[:, 6:8] = 0.0
    return seeds


def return_data(section, x, y, rtol=1e-10, atol=1e-12, horizon_factor=3.0):
    """First-return record of the annulus vector at (x, y).

    Interior angles are integrated with event detection; the boundary rows
    y in {0, pi} are resolved through the second conjugate time along the
    base geodesic (forward/backward respectively).
    """
    if not (0.0 <= y <= math.pi):
        raise PreconditionError("y must lie in [0, pi]")
    if y == 0.0 or y == math.pi:
        return _boundary_return(section, np.array([x]),
                                backward=(y == math.pi), rtol=rtol,
                                atol=atol)[0]
    sample = _interior_returns(section, np.array([x]), np.array([y]),
                               rtol=rtol, atol=atol,
                               horizon_factor=horizon_factor)[0]
    if sample.status == STATUS_MISSING:
        raise ReturnFailure(
            f"return events not found within horizon factor {horizon_factor}")
    return sample


def _horizon(model, factor):
    kmin, _ = mm.curvature_extremes(model)
    return factor * _TWO_PI / math.sqrt(kmin)


def _interior_returns(section, xs, ys_flat, rtol, atol, horizon_factor):
    """Return samples for matched arrays of interior coordinates."""
    model = section.model
    L = section.length
    seeds = np.empty((len(xs), 8))
    u, t, p = section.frames(xs)
    w = np.cos(ys_flat)[:, None] * t + np.sin(ys_flat)[:, None] * p
    seeds[:, 0:3] = u
    seeds[:, 3:6] = w
    seeds[:, 6:8] = 0.0
    samples = _run_return_sweep(section, seeds, rtol, atol,
                                _horizon(model, horizon_factor))
    out = []
    for i in range(len(xs)):
        out.append(_assemble_sample(section, float(xs[i]), float(ys_flat[i]),
                                    samples, i))
    return out


def _run_return_sweep(section, seeds, rtol, atol, horizon):
    model = section.model
    rhs = gd.geodesic_rhs(model, jacobi=True)
    project = _augmented_projector(model)
    wev = np.zeros(8)
    wev[0:3] = section.normal
    return sweep_linear_events(rhs, seeds, horizon, wev, target=0.0,
                               n_events=2, expected_slopes=(-1, +1),
                               rtol=rtol, atol=atol, project=project)


def _augmented_projector(model):
    base = gd.state_projector(model)

    def project(y):
        base(y[:, 0:6])
        return y

    return project


def _leg_advance(section, x_from, x_to):
    """Advance along the base circle as the open-interval representative
    in (0, L)."""
    L = section.length
    r = (x_to - x_from) % L
    return r


def _assemble_sample(section, x, y, sweep, i):
    L = section.length
    if sweep.grazing[i] or sweep.n_found[i] < 2:
        status = STATUS_GRAZING if sweep.grazing[i] else STATUS_MISSING
        return ReturnSample(x=x, y=y, tau_plus=math.nan, tau=math.nan,
                            rho_plus=math.nan, rho=math.nan, X=math.nan,
                            Y=math.nan, jac_angle=math.nan, jac_du=math.nan,
                            status=status)
    y1 = sweep.y_events[i, 0]
    y2 = sweep.y_events[i, 1]
    x1 = float(section.footpoint(y1[0:3])[0])
    x2 = float(section.footpoint(y2[0:3])[0])
    rho_plus = _leg_advance(section, x, x1)
    rho = rho_plus + _leg_advance(section, x1, x2)
    Y = float(section.angles_of(np.array([x2]), y2[None, 3:6])[0])
    jac_angle = float(y2[6])
    jac_du = float(math.exp(y2[7]) * math.cos(y2[6]))
    return ReturnSample(x=x, y=y, tau_plus=float(sweep.t_events[i, 0]),
                        tau=float(sweep.t_events[i, 1]), rho_plus=rho_plus,
                        rho=rho, X=x + rho - L, Y=Y, jac_angle=jac_angle,
                        jac_du=jac_du, status=STATUS_OK)


def _boundary_return(section, xs, backward, rtol, atol):
    """Boundary-row samples from the second conjugate time along the base."""
    model = section.model
    L = section.length
    u, t, _ = section.frames(xs)
    seeds = np.empty((len(xs), 8))
    seeds[:, 0:3] = u
    seeds[:, 3:6] = -t if backward else t
    seeds[:, 6:8] = 0.0
    kmin, _ = mm.curvature_extremes(model)
    horizon = _TWO_PI / min(1.0, kmin) + 1.0
    wev = np.zeros(8)
    wev[6] = 1.0
    res = sweep_linear_events(gd.geodesic_rhs(model, jacobi=True), seeds,
                              horizon, wev, target=_TWO_PI, n_events=1,
                              expected_slopes=(+1,), rtol=rtol, atol=atol,
                              project=_augmented_projector(model))
    out = []
    for i, x in enumerate(xs):
        if res.n_found[i] < 1 or res.grazing[i]:
            raise ReturnFailure("second conjugate time not reached along "
                                "the base geodesic")
        tau_b = float(res.t_events[i, 0])
        r = float(math.exp(res.y_events[i, 0, 7]))
        if backward:
            rho = 2.0 * L - tau_b
            y = math.pi
            Yv = math.pi
        else:
            rho = tau_b
            y = 0.0
            Yv = 0.0
        if not (0.0 < rho < 2.0 * L):
            raise PinchingViolationError(
                f"boundary advance {rho:.6g} escapes (0, 2L); the lift "
                "pinning hypotheses fail for this metric")
        out.append(ReturnSample(x=float(x), y=y, tau_plus=math.nan,
                                tau=tau_b, rho_plus=math.nan, rho=rho,
                                X=float(x) + rho - L, Y=Yv,
                                jac_angle=_TWO_PI, jac_du=r,
                                status=STATUS_OK))
    return out


def compute_return_grid(section, nx=96, ny=96, rtol=1e-10, atol=1e-12,
                        row_batch=8, horizon_factor=3.0):
    """First-return data over the full annulus grid.

    Interior rows are integrated in batches sharing a step controller (the
    error norm is still per orbit); grid nodes are independent, and all
    reductions later performed on the arrays use pairwise summation, so the
    results do not depend on the batch layout.
    """
    model = section.model
    L = section.length
    xs = np.arange(nx) * (L / nx)
    ys = np.linspace(0.0, math.pi, ny)
    shape = (nx, ny)
    X = np.empty(shape)
    Y = np.empty(shape)
    tau = np.empty(shape)
    tau_plus = np.full(shape, np.nan)
    rho_plus = np.full(shape, np.nan)
    jac_angle = np.empty(shape)
    jac_du = np.empty(shape)
    status = np.zeros(shape, dtype=int)
    horizon = _horizon(model, horizon_factor)

    for j0 in range(1, ny - 1, row_batch):
        rows = list(range(j0, min(j0 + row_batch, ny - 1)))
        seeds = _seed_batch(section, xs, ys[rows])
        sweep = _run_return_sweep(section, seeds, rtol, atol, horizon)
        for r, j in enumerate(rows):
            for k in range(nx):
                i = r * nx + k
                s = _assemble_sample(section, float(xs[k]), float(ys[j]),
                                     sweep, i)
                X[k, j] = s.X
                Y[k, j] = s.Y
                tau[k, j] = s.tau
                tau_plus[k, j] = s.tau_plus
                rho_plus[k, j] = s.rho_plus
                jac_angle[k, j] = s.jac_angle
                jac_du[k, j] = s.jac_du
                status[k, j] = s.status

    for backward, j in ((False, 0), (True, ny - 1)):
        rows = _boundary_return(section, xs, backward, rtol, atol)
        for k, s in enumerate(rows):
            X[k, j] = s.X
            Y[k, j] = s.Y
            tau[k, j] = s.tau
            jac_angle[k, j] = s.jac_angle
            jac_du[k, j] = s.jac_du

    grid = BirkhoffGrid(section=section, L=L, xs=xs, ys=ys, X=X, Y=Y,
                        tau=tau, tau_plus=tau_plus, rho_plus=rho_plus,
                        jac_angle=jac_angle, jac_du=jac_du, status=status)
    ok = status == STATUS_OK
    if np.any((tau <= 0.0) & ok):
        raise InternalConsistencyError("non-positive return time on the grid")
    return grid


# ---------------------------------------------------------------------------
# the zero-flux lift and the bridge identities
# ---------------------------------------------------------------------------

def zero_flux_lift(grid, flux_tol=1e-6, arc_check_nodes=12,
                   arc_resolution=1e-6):
    """Strip map carrying the return data, with the canonical zero-flux lift.

    The advance-based lift is trusted only if the sampled return arcs are
    injective (each leg separately); a detected self-intersection raises
    :class:`PinchingViolationError`.  The vanishing of the flux is verified,
    not assumed.
    """
    grid.require_clean()
    if arc_check_nodes:
        check_return_arc_injectivity(grid, n_nodes=arc_check_nodes,
                                     resolution=arc_resolution)
    lift = sc.StripMapGrid(length=grid.L, xs=grid.xs.copy(),
                           ys=grid.ys.copy(), X=grid.X.copy(),
                           Y=grid.Y.copy(), provenance="birkhoff")
    F = sc.flux(lift)
    if abs(F) > flux_tol:
        raise InternalConsistencyError(
            f"advance-based lift has flux {F:.3g}, expected 0 within "
            f"{flux_tol:g}")
    return lift


def check_return_arc_injectivity(grid, n_nodes=12, resolution=1e-6,
                                 samples_per_arc=600, rtol=1e-10,
                                 atol=1e-12):
    """Sampled verification that each return-arc leg is an injective curve."""
    sec = grid.section
    model = sec.model
    nx, ny = grid.nx, grid.ny
    rng = np.random.default_rng(0)
    ii = rng.integers(0, nx, size=n_nodes)
    jj = rng.integers(1, ny - 1, size=n_nodes)
    for i, j in zip(ii, jj):
        x, y = float(grid.xs[i]), float(grid.ys[j])
        u, w = sec.section_vector(np.array([x]), np.array([y]))
        y0 = np.concatenate([u[0], w[0]])
        traj_records = []
        t_end = float(grid.tau[i, j])
        t_mid = float(grid.tau_plus[i, j])
        _, _, records = integrate_adaptive(
            gd.geodesic_rhs(model), y0[None, :], (0.0, t_end), rtol=rtol,
            atol=atol, project=gd.state_projector(model), store=True)

        def _arc_points(t0, t1):
            ts = np.linspace(t0, t1, samples_per_arc)
            pts = np.empty((samples_per_arc, 3))
            k = 0
            for m, tq in enumerate(ts):
                while (k < len(records) - 1
                       and records[k].t + records[k].h < tq):
                    k += 1
                pts[m] = records[k].eval(min(tq, records[k].t + records[k].h))[0, 0:3]
            return pts

        for (t0, t1) in ((0.0, t_mid), (t_mid, t_end)):
            pts = _arc_points(t0, t1)
            if curve_self_intersects(pts, closed=False,
                                     resolution=resolution):
                raise PinchingViolationError(
                    f"return arc through node ({i}, {j}) self-intersects; "
                    "the advance pinning hypotheses fail")


def verify_tau_action_identity(grid, lift, action_grid=None, ):
    """max |tau - L - sigma| over the grid: the return time must equal the
    base length plus the action of the zero-flux lift."""
    act = action_grid if action_grid is not None else sc.action(lift)
    return float(np.max(np.abs(grid.tau - grid.L - act.sigma)))


def verify_area_identity(grid, lift, model, action_grid=None):
    """Relative residual of pi * Area = L^2 + L * CAL."""
    cal = sc.calabi(lift, action_grid=action_grid)
    target = math.pi * mm.area(model)
    return abs(target - grid.L ** 2 - grid.L * cal) / target


def contact_volume_check(grid, model):
    """Relative residual of the unit-tangent volume identity: the
    tau-weighted area of the annulus must equal 2 pi * Area."""
    vol = sc.strip_integral(grid.tau, grid.xs, grid.ys, grid.L)
    target = _TWO_PI * mm.area(model)
    return abs(vol - target) / target


@dataclass
class MonotonicityReport:
    min_d2Y_fd: float
    min_d2Y_jacobi: float
    max_discrepancy: float
    monotone: bool

    @property
    def passed(self):
        return self.monotone and self.max_discrepancy < 1e-4


def monotonicity_check(grid, tol=1e-4):
    """Vertical derivative of the angle component, two ways.

    Finite differences of the grid are compared against the transversal
    Jacobi derivative at the return time, which equals D2 Y identically.
    """
    if grid.ny < 64:
        raise PreconditionError("monotonicity check requires ny >= 64")
    d2Y = 1.0 + sc.ddy_mesh(grid.Y - grid.ys[None, :], grid.ys)
    disc = np.abs(d2Y - grid.jac_du)
    rep = MonotonicityReport(
        min_d2Y_fd=float(np.min(d2Y)),
        min_d2Y_jacobi=float(np.min(grid.jac_du)),
        max_discrepancy=float(np.max(disc)),
        monotone=bool(np.min(d2Y) > 0.0 and np.min(grid.jac_du) > 0.0),
    )
    return rep


def jacobi_angle_window(grid, delta):
    """Window check for the lifted Jacobi angle at the return time.

    Valid for models normalised to max K = 1: every return angle must lie in
    [delta (4 pi - 2 pi / sqrt(delta)), 4 pi / sqrt(delta) - 2 pi] and its
    cosine must be positive.
    """
    lo = delta * (4.0 * math.pi - _TWO_PI / math.sqrt(delta))
    hi = 4.0 * math.pi / math.sqrt(delta) - _TWO_PI
    ang = grid.jac_angle[:, 1:-1]
    inside = bool(np.all(ang >= lo - 1e-9) and np.all(ang <= hi + 1e-9))
    cos_pos = bool(np.all(np.cos(ang) > 0.0))
    return {"lower": lo, "upper": hi,
            "min_angle": float(np.min(ang)), "max_angle": float(np.max(ang)),
            "inside": inside, "cos_positive": cos_pos}


def boundary_consistency_check(grid, rows=5):
    """Polynomial extrapolation of interior return times onto the boundary
    rows, compared with the conjugate-time values computed there."""
    ys = grid.ys
    out = []
    for edge in (0, -1):
        if edge == 0:
            yy = ys[1:1 + rows]
            tt = grid.tau[:, 1:1 + rows]
            target = grid.tau[:, 0]
            y0 = ys[0]
        else:
            yy = ys[-1 - rows:-1]
            tt = grid.tau[:, -1 - rows:-1]
            target = grid.tau[:, -1]
            y0 = ys[-1]
        coef = np.polynomial.polynomial.polyfit(yy, tt.T, rows - 1)
        extrap = np.polynomial.polynomial.polyval(y0, coef)
        out.append(float(np.max(np.abs(extrap - target))))
    return max(out)


def composition_identity_check(grid, n_nodes=10, rtol=1e-10, atol=1e-12):
    """Re-seeded composition residuals on a node subsample.

    The intermediate hit of each return orbit is converted to coordinates on
    the opposite annulus and re-integrated from there; the identity
    tau = tau_+ + tau_- o phi_+ and the factorisation of the return map
    must be reproduced within integration accuracy.
    """
    sec = grid.section
    model = sec.model
    rng = np.random.default_rng(1)
    ii = rng.integers(0, grid.nx, size=n_nodes)
    jj = rng.integers(1, grid.ny - 1, size=n_nodes)
    horizon = _horizon(model, 3.0)
    max_tau_res = 0.0
    max_map_res = 0.0
    for i, j in zip(ii, jj):
        x, y = float(grid.xs[i]), float(grid.ys[j])
        u, w = sec.section_vector(np.array([x]), np.array([y]))
        seeds = np.concatenate([u[0], w[0], [0.0, 0.0]])[None, :]
        sweep = _run_return_sweep(sec, seeds, rtol, atol, horizon)
        if sweep.n_found[0] < 2:
            raise ReturnFailure("return not found during composition check")
        y1 = sweep.y_events[0, 0]
        t1 = float(sweep.t_events[0, 0])
        # coordinates of the intermediate vector on the opposite annulus
        x1 = float(sec.footpoint(y1[0:3])[0])
        ang1 = float(sec.angles_of(np.array([x1]), y1[None, 3:6])[0])
        u1, t1f, p1f = sec.frames(np.array([x1]))
        w1 = math.cos(ang1) * t1f[0] + math.sin(ang1) * p1f[0]
        seeds2 = np.concatenate([u1[0], w1, [0.0, 0.0]])[None, :]
        wev = np.zeros(8)
        wev[0:3] = sec.normal
        res2 = sweep_linear_events(gd.geodesic_rhs(model, jacobi=True),
                                   seeds2, horizon, wev, n_events=1,
                                   expected_slopes=(+1,), rtol=rtol,
                                   atol=atol,
                                   project=_augmented_projector(model))
        if res2.n_found[0] < 1:
            raise ReturnFailure("transition return not found")
        tau_minus = float(res2.t_events[0, 0])
        max_tau_res = max(max_tau_res,
                          abs(grid.tau[i, j] - (t1 + tau_minus)))
        y2 = res2.y_events[0, 0]
        x2 = float(sec.footpoint(y2[0:3])[0])
        ang2 = float(sec.angles_of(np.array([x2]), y2[None, 3:6])[0])
        dx = abs((x2 - grid.X[i, j]) % grid.L)
        dx = min(dx, grid.L - dx)
        max_map_res = max(max_map_res, dx, abs(ang2 - grid.Y[i, j]))
    return max_tau_res, max_map_res


def action_boundary_identity(grid, lift, action_grid=None):
    """max |sigma(x, 0) - (tau(x, 0) - L)|: the lower-row action of the
    zero-flux lift equals the boundary return time minus the base length."""
    act = action_grid if action_grid is not None else sc.action(lift)
    return float(np.max(np.abs(act.sigma[:, 0] - (grid.tau[:, 0] - grid.L))))
