"""Rotationally symmetric metrics on the two-sphere.

Every model lives on the unit chart sphere M = {u in R^3 : |u| = 1} and is
described by the smooth tensor

    g_u(v, w) = a * (v . w) + b(u3) * v3 * w3,        v, w tangent at u,

with a > 0 constant and b a polynomial in the height z = u3.  This covers

* the round sphere of radius r        (a = r^2, b = 0),
* the spheroid x^2 + y^2 + (z/c)^2 = 1 pulled back to the chart sphere
  by u -> (u1, u2, c*u3)              (a = 1, b = c^2 - 1),
* rotation-invariant Zoll-type profiles
  (1 + h(cos(theta)))^2 dtheta^2 + sin(theta)^2 dphi^2 with h an odd
  polynomial vanishing at +-1         (a = 1, b = p * (2 + h), h = (1-z^2) p).

Because b extends smoothly across the poles, the chart has no coordinate
singularity anywhere: geodesics, curvature, and Jacobi data are all smooth
functions of the ambient representation.

In the classical colatitude/azimuth chart (theta, phi) the line element is
E(z) dtheta^2 + a sin(theta)^2 dphi^2 with z = cos(theta) and

    E(z) = a + b(z) (1 - z^2),

so the Gaussian curvature reduces to the one-variable formula

    K(z) = 1/E - z E'(z) / (2 E^2),

and the total area to 2 pi sqrt(a) * integral of sqrt(E) over z in [-1, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.optimize import minimize_scalar

from .errors import ChartDomainError, ModelInvalidError, PreconditionError

_TWO_PI = 2.0 * math.pi

# Admissibility of a model is checked on this fixed z-grid at construction.
_VALIDATION_SAMPLES = 1024


@dataclass(frozen=True)
class MetricModel:
    """A revolution metric in the (a, b) normal form described above.

    Instances are immutable; all operations on them are pure functions, so a
    model can be shared freely across parallel workers.
    """

    kind: str
    params: dict
    a: float
    b_coef: np.ndarray          # polynomial coefficients of b in z (ascending)
    bp_coef: np.ndarray = field(default=None)  # derivative coefficients

    def __post_init__(self):
        if self.a <= 0.0:
            raise ModelInvalidError("metric scale a must be positive")
        b = np.atleast_1d(np.asarray(self.b_coef, dtype=float))
        object.__setattr__(self, "b_coef", b)
        object.__setattr__(self, "bp_coef", npoly.polyder(b) if b.size > 1
                           else np.zeros(1))
        ks = self.curvature(np.linspace(-1.0, 1.0, _VALIDATION_SAMPLES))
        if not np.all(ks > 0.0):
            raise ModelInvalidError(
                f"Gaussian curvature is not positive everywhere "
                f"(min sampled K = {ks.min():.6g})")

    # -- pointwise coefficient data ------------------------------------

    def b(self, z):
        return npoly.polyval(z, self.b_coef)

    def bprime(self, z):
        return npoly.polyval(z, self.bp_coef)

    def profile_E(self, z):
        """Meridian coefficient E(z) = a + b(z)(1 - z^2); equals g(e_theta, e_theta)."""
        z = np.asarray(z, dtype=float)
        return self.a + self.b(z) * (1.0 - z * z)

    def profile_E_prime(self, z):
        z = np.asarray(z, dtype=float)
        return self.bprime(z) * (1.0 - z * z) - 2.0 * z * self.b(z)

    def profile_G(self, z):
        """Azimuthal coefficient G = a (1 - z^2) = a sin(theta)^2."""
        z = np.asarray(z, dtype=float)
        return self.a * (1.0 - z * z)

    def curvature(self, z):
        """Gaussian curvature as a function of the height z = cos(theta)."""
        E = self.profile_E(z)
        return 1.0 / E - np.asarray(z) * self.profile_E_prime(z) / (2.0 * E * E)

    # -- tangent-space metric ------------------------------------------

    def dot(self, u, v, w):
        """g-inner product of tangent vectors v, w at chart point(s) u."""
        z = u[..., 2]
        return (self.a * np.einsum("...i,...i->...", v, w)
                + self.b(z) * v[..., 2] * w[..., 2])

    def norm(self, u, v):
        return np.sqrt(self.dot(u, v, v))

    # -- derived global quantities -------------------------------------

    @property
    def equator_length(self):
        """Length of the equatorial circle z = 0 (always a closed geodesic)."""
        return _TWO_PI * math.sqrt(self.a)

    def meridian_circuit_length(self, order=256):
        """Length of the closed meridian geodesic (full theta circuit)."""
        nodes, weights = np.polynomial.legendre.leggauss(order)
        theta = 0.5 * math.pi * (nodes + 1.0)
        w = 0.5 * math.pi * weights
        return 2.0 * float(np.sum(w * np.sqrt(self.profile_E(np.cos(theta)))))

    def embedded_position(self, u):
        """Representative position in R^3 for a chart point.

        The spheroid uses its genuine isometric embedding; for the other
        kinds the chart-sphere coordinates (scaled by the radius for the
        round model) are reported.
        """
        u = np.asarray(u, dtype=float)
        if self.kind == "spheroid":
            c = self.params["c"]
            return u * np.array([1.0, 1.0, c])
        if self.kind == "round":
            return u * self.params["radius"]
        return u.copy()

    def rescale(self, factor):
        """The conformally scaled metric factor * g (lengths scale by sqrt(factor))."""
        if factor <= 0.0:
            raise ModelInvalidError("scale factor must be positive")
        return MetricModel(kind=f"rescaled-{self.kind}",
                           params=dict(self.params, scale=factor),
                           a=self.a * factor,
                           b_coef=self.b_coef * factor)


@dataclass(frozen=True)
class SurfacePoint:
    """Chart point (colatitude theta in [0, pi], azimuth phi in [0, 2 pi))
    together with its representative embedded position."""

    theta: float
    phi: float
    position: np.ndarray

    @property
    def height(self):
        return math.cos(self.theta)


def _check_chart(theta, phi):
    if not (0.0 <= theta <= math.pi) or not math.isfinite(phi):
        raise ChartDomainError(
            f"chart coordinates (theta={theta}, phi={phi}) out of range")


def chart_to_unitvec(theta, phi):
    st = math.sin(theta)
    return np.array([st * math.cos(phi), st * math.sin(phi), math.cos(theta)])


def unitvec_to_chart(u):
    theta = math.acos(min(1.0, max(-1.0, float(u[2]))))
    phi = math.atan2(float(u[1]), float(u[0])) % _TWO_PI
    return theta, phi


def surface_point(model, theta, phi):
    _check_chart(theta, phi % _TWO_PI if math.isfinite(phi) else phi)
    u = chart_to_unitvec(theta, phi)
    return SurfacePoint(theta=theta, phi=phi % _TWO_PI,
                        position=model.embedded_position(u))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def make_round(radius=1.0):
    if radius <= 0.0:
        raise ModelInvalidError("round sphere radius must be positive")
    return MetricModel(kind="round", params={"radius": float(radius)},
                       a=float(radius) ** 2, b_coef=np.zeros(1))


def make_spheroid(c):
    if c <= 0.0:
        raise ModelInvalidError("spheroid semi-axis c must be positive")
    return MetricModel(kind="spheroid", params={"c": float(c)},
                       a=1.0, b_coef=np.array([float(c) ** 2 - 1.0]))


def make_zoll(h_coeffs):
    """Zoll-type revolution metric from the odd profile polynomial h.

    ``h_coeffs[j]`` is the coefficient of s**(j+1), so [eps, 0, -eps]
    encodes h(s) = eps * s * (1 - s^2).  Requirements: h odd, h(+-1) = 0,
    |h| < 1 on [-1, 1].
    """
    coeffs = np.asarray(h_coeffs, dtype=float)
    if coeffs.ndim != 1 or coeffs.size == 0:
        raise ModelInvalidError("h_coeffs must be a non-empty 1-D sequence")
    h = np.concatenate(([0.0], coeffs))          # ascending powers of s
    if np.any(np.abs(h[2::2]) > 1e-14):
        raise ModelInvalidError("profile h must be an odd polynomial")
    if abs(npoly.polyval(1.0, h)) > 1e-12:
        raise ModelInvalidError("profile h must vanish at s = +-1")
    s = np.linspace(-1.0, 1.0, _VALIDATION_SAMPLES)
    if np.max(np.abs(npoly.polyval(s, h))) >= 1.0:
        raise ModelInvalidError("profile h must satisfy |h| < 1 on [-1, 1]")
    # h = (1 - s^2) p with p odd; the division is exact for admissible h.
    p, rem = npoly.polydiv(h, np.array([1.0, 0.0, -1.0]))
    if np.max(np.abs(rem)) > 1e-12:
        raise ModelInvalidError("(1 - s^2) must divide the profile h")
    b = npoly.polymul(p, npoly.polyadd(np.array([2.0]), h))
    return MetricModel(kind="zoll", params={"h_coeffs": [float(c) for c in coeffs]},
                       a=1.0, b_coef=np.trim_zeros(b, "b") if np.any(b) else np.zeros(1))


def from_json(doc):
    """Build a model from a JSON document (string or parsed dict)."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValueError("metric description must be an object with a 'kind' key")
    kind = doc["kind"]
    if kind == "round":
        return make_round(float(doc.get("radius", 1.0)))
    if kind == "spheroid":
        return make_spheroid(float(doc["c"]))
    if kind == "zoll":
        return make_zoll(doc["h_coeffs"])
    raise ValueError(f"unknown metric kind {kind!r}")


def to_json(model):
    return {"kind": model.kind, **model.params}


# ---------------------------------------------------------------------------
# pointwise and global operations
# ---------------------------------------------------------------------------

def gaussian_curvature(model, point):
    """Gaussian curvature at a surface point (or at a raw colatitude)."""
    if isinstance(point, SurfacePoint):
        _check_chart(point.theta, point.phi)
        z = point.height
    else:
        theta = float(point)
        _check_chart(theta, 0.0)
        z = math.cos(theta)
    return float(model.curvature(z))


def curvature_extremes(model, n_samples=512):
    """(min K, max K) over the sphere, by dense height sampling plus local
    bounded refinement around each sampled extreme."""
    if n_samples < 64:
        raise PreconditionError(f"n_samples must be at least 64 (got {n_samples})")
    zs = np.linspace(-1.0, 1.0, int(n_samples))
    ks = model.curvature(zs)
    if not np.all(ks > 0.0):
        raise ModelInvalidError("curvature sample is not positive")
    h = zs[1] - zs[0]

    def refine(idx, sign):
        lo = max(-1.0, zs[idx] - 2.0 * h)
        hi = min(1.0, zs[idx] + 2.0 * h)
        res = minimize_scalar(lambda z: sign * model.curvature(z),
                              bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        return sign * res.fun

    kmin = min(float(ks.min()), float(refine(int(np.argmin(ks)), +1.0)))
    kmax = max(float(ks.max()), float(refine(int(np.argmax(ks)), -1.0)))
    return kmin, kmax


def pinching_constant(model, n_samples=512):
    """delta = min K / max K, estimated by sampling the curvature profile."""
    kmin, kmax = curvature_extremes(model, n_samples)
    return kmin / kmax


def area(model, quadrature_order=96):
    """Total surface area by Gauss-Legendre quadrature of the area element."""
    if quadrature_order < 16:
        raise ValueError("quadrature_order must be at least 16")
    nodes, weights = np.polynomial.legendre.leggauss(int(quadrature_order))
    vals = np.sqrt(model.profile_E(nodes))
    return float(_TWO_PI * math.sqrt(model.a) * np.sum(weights * vals))


def injectivity_radius_lower_bound(model, n_samples=512):
    """pi / sqrt(max K), the classical curvature bound on the injectivity radius."""
    _, kmax = curvature_extremes(model, n_samples)
    return math.pi / math.sqrt(kmax)
