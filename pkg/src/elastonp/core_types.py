"""Lamé parameters, boundary curves and elliptic coordinates.

Everything here is immutable.  Quantities are dimensionless: the Lamé
moduli are read in units of a reference stress and lengths in units of a
reference length, so any consistent choice of units gives the same
eigenvalues and fitted exponents.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "LameParams",
    "EllipseGeometry",
    "BoundaryCurve",
    "FocalSegmentError",
    "elliptic_to_cartesian",
    "cartesian_to_elliptic",
    "make_ellipse_curve",
    "make_disk_curve",
    "curve_from_parametrization",
]

TWO_PI = 2.0 * np.pi


class FocalSegmentError(ValueError):
    """Raised when the inverse elliptic map is requested on the focal segment."""


@dataclass(frozen=True)
class LameParams:
    """Background Lamé pair for planar isotropic elasticity.

    Parameters
    ----------
    lam, mu : float
        Lamé moduli.  Strong convexity in two dimensions requires
        ``mu > 0`` and ``lam + mu > 0``.
    """

    lam: float
    mu: float

    def __post_init__(self):
        lam, mu = float(self.lam), float(self.mu)
        if not (np.isfinite(lam) and np.isfinite(mu)):
            raise ValueError("Lamé parameters must be finite")
        if mu <= 0.0 or lam + mu <= 0.0:
            raise ValueError(
                f"strong convexity violated: need mu > 0 and lam + mu > 0, got lam={lam}, mu={mu}"
            )
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @property
    def alpha1(self) -> float:
        return 0.5 * (1.0 / self.mu + 1.0 / (2.0 * self.mu + self.lam))

    @property
    def alpha2(self) -> float:
        return 0.5 * (1.0 / self.mu - 1.0 / (2.0 * self.mu + self.lam))

    @property
    def kappa(self) -> float:
        return (self.lam + 3.0 * self.mu) / (self.lam + self.mu)

    @property
    def k0(self) -> float:
        """Accumulation point of the NP spectrum, ``mu / (2 (2 mu + lam))``."""
        return self.mu / (2.0 * (2.0 * self.mu + self.lam))

    @property
    def disk_radial_eigenvalue(self) -> float:
        """The isolated disk eigenvalue ``-lam / (2 (2 mu + lam))``."""
        return -self.lam / (2.0 * (2.0 * self.mu + self.lam))

    def contrast_for(self, k: float) -> float:
        """Contrast ``c`` with ``(c + 1) / (2 (c - 1)) = k``."""
        if abs(k - 0.5) < 1e-15:
            raise ValueError("k = 1/2 is not reachable by a finite contrast")
        return (2.0 * k + 1.0) / (2.0 * k - 1.0)


@dataclass(frozen=True)
class EllipseGeometry:
    """Ellipse ``x1^2/a^2 + x2^2/b^2 < 1`` with ``a > b > 0``.

    The boundary is the coordinate line ``rho = rho0`` of the elliptic
    coordinates ``x = (R cosh rho cos w, R sinh rho sin w)``.
    """

    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (b > 0.0 and a > b):
            raise ValueError(
                f"degenerate ellipse: need a > b > 0 (use make_disk_curve for a = b), got a={a}, b={b}"
            )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_focal(cls, R: float, rho0: float) -> "EllipseGeometry":
        return cls(R * np.cosh(rho0), R * np.sinh(rho0))

    @property
    def R(self) -> float:
        return float(np.sqrt((self.a - self.b) * (self.a + self.b)))

    @property
    def rho0(self) -> float:
        return float(np.arctanh(self.b / self.a))

    def h(self, rho, omega):
        """Scale factor ``R sqrt(sinh^2 rho + sin^2 omega)``."""
        return self.R * np.sqrt(np.sinh(rho) ** 2 + np.sin(omega) ** 2)

    def h0(self, omega):
        return self.h(self.rho0, omega)


def elliptic_to_cartesian(geom: EllipseGeometry, rho, omega) -> np.ndarray:
    """Map elliptic coordinates to Cartesian points, shape ``(..., 2)``."""
    rho = np.asarray(rho, dtype=float)
    omega = np.asarray(omega, dtype=float)
    R = geom.R
    return np.stack([R * np.cosh(rho) * np.cos(omega), R * np.sinh(rho) * np.sin(omega)], axis=-1)


def cartesian_to_elliptic(geom: EllipseGeometry, x, *, focal_tol: float = 1e-14):
    """Inverse of :func:`elliptic_to_cartesian`.

    Uses ``rho + i omega = arccosh(z / R)`` with ``z = x1 + i x2``.

    Returns
    -------
    rho, omega : ndarray
        ``rho >= 0`` and ``omega`` in ``[0, 2 pi)``.

    Raises
    ------
    FocalSegmentError
        If any point lies within ``focal_tol * R`` of the segment
        ``[-R, R] x {0}``, where the angle is not determined.
    """
    x = np.asarray(x, dtype=float)
    R = geom.R
    x1, x2 = x[..., 0], x[..., 1]
    dist = np.hypot(np.maximum(np.abs(x1) - R, 0.0), x2)
    if np.any(dist <= focal_tol * R):
        raise FocalSegmentError("point on (or within 1e-14 of) the focal segment; elliptic angle undefined")
    w = np.arccosh((x1 + 1j * x2) / R)
    # principal branch has Re >= 0; fix the sign so that sinh(rho) sin(omega) has the sign of x2
    rho = np.abs(w.real)
    omega = np.where(w.real < 0, -w.imag, w.imag)
    omega = np.mod(omega, TWO_PI)
    return rho, omega


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Discretized smooth closed curve, positively oriented.

    Nodes sit at equispaced parameter values ``t_k = 2 pi k / n``.  Arrays
    are read-only.

    Attributes
    ----------
    t : (n,) parameter values
    nodes, d1, d2 : (n, 2) position, first and second parameter derivatives
    speed : (n,) ``|d1|``
    tangents, normals : (n, 2) unit tangent and outward unit normal
    weights : (n,) trapezoid arclength weights ``speed * 2 pi / n``
    param : callable
        ``param(t) -> (gamma, gamma', gamma'')`` for arbitrary parameter
        arrays; used for refinement and off-surface evaluation.
    kind : str
    """

    t: np.ndarray
    nodes: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    speed: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    param: Callable = field(repr=False)
    kind: str = "custom"
    period: float = TWO_PI

    @property
    def n_nodes(self) -> int:
        return self.t.size

    @property
    def perimeter(self) -> float:
        return float(self.weights.sum())

    def refined(self, n_nodes: int) -> "BoundaryCurve":
        """The same curve sampled with a different node count."""
        return curve_from_parametrization(self.param, n_nodes, kind=self.kind)


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


def curve_from_parametrization(param: Callable, n_nodes: int, *, kind: str = "custom") -> BoundaryCurve:
    """Sample a 2π-periodic, counter-clockwise parametrization.

    Parameters
    ----------
    param : callable
        ``param(t)`` returns ``(gamma, gamma', gamma'')``, each of shape
        ``t.shape + (2,)``.
    n_nodes : int
        Even and at least 16; the split-grid Cauchy rule pairs even and odd
        nodes.
    """
    n = int(n_nodes)
    if n != n_nodes or n < 16 or n % 2:
        raise ValueError(f"node count must be an even integer >= 16, got {n_nodes}")
    t = TWO_PI * np.arange(n) / n
    g, g1, g2 = (np.asarray(v, dtype=float) for v in param(t))
    speed = np.hypot(g1[:, 0], g1[:, 1])
    if np.any(speed <= 0.0):
        raise ValueError("parametrization is singular (zero speed)")
    tang = g1 / speed[:, None]
    nor = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
    w = speed * (TWO_PI / n)
    # signed area must be positive for an outward normal (y', -x')
    area = 0.5 * np.sum(g[:, 0] * g1[:, 1] - g[:, 1] * g1[:, 0]) * (TWO_PI / n)
    if area <= 0.0:
        raise ValueError("parametrization must be counter-clockwise")
    _readonly(t, g, g1, g2, speed, tang, nor, w)
    return BoundaryCurve(t, g, g1, g2, speed, tang, nor, w, param, kind)


def _ellipse_param(a: float, b: float) -> Callable:
    def param(t):
        t = np.asarray(t, dtype=float)
        c, s = np.cos(t), np.sin(t)
        g = np.stack([a * c, b * s], axis=-1)
        g1 = np.stack([-a * s, b * c], axis=-1)
        return g, g1, -g

    return param


def make_ellipse_curve(geom: EllipseGeometry, n_nodes: int) -> BoundaryCurve:
    """Ellipse sampled at equispaced elliptic angle; weights are ``h0(w) 2 pi / n``."""
    return curve_from_parametrization(_ellipse_param(geom.a, geom.b), n_nodes, kind="ellipse")


def make_disk_curve(radius: float, n_nodes: int) -> BoundaryCurve:
    """Centred circle sampled at equispaced polar angle."""
    if not radius > 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    return curve_from_parametrization(_ellipse_param(float(radius), float(radius)), n_nodes, kind="disk")
