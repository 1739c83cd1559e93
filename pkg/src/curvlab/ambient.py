"""Space forms of constant curvature and their distance geometry.

Non-flat spaces are handled through embedding models: the sphere of
curvature ``kappa > 0`` is ``{x in R^{n+1} : <x, x> = 1/kappa}`` and the
hyperbolic space of curvature ``kappa < 0`` is the upper sheet of
``{x : <x, x>_L = 1/kappa}`` with ``<x, y>_L = -x_0 y_0 + sum_i x_i y_i``.
Ambient covariant derivatives then reduce to flat derivatives followed by a
projection onto the model's tangent space.

All functions accept arrays whose last axis holds model coordinates and
broadcast over leading axes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ModelConstraintError, SingularGradientError

#: distances this close to the antipode are rejected when a gradient is needed
CUT_LOCUS_GUARD = 1e-8
#: relative slack allowed on the model constraint for incoming points
MODEL_TOL = 1e-10


class Kind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    SPHERE = "sphere"
    HYPERBOLIC = "hyperbolic"


@dataclass(frozen=True)
class SpaceForm:
    """Ambient space form of dimension ``dim`` (= m + 1) and curvature ``kappa``."""

    kind: Kind
    kappa: float
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "kappa", float(self.kappa))
        if self.dim < 3:
            raise ConfigurationError(f"ambient dimension must be >= 3, got {self.dim}")
        expected = {Kind.EUCLIDEAN: self.kappa == 0.0,
                    Kind.SPHERE: self.kappa > 0.0,
                    Kind.HYPERBOLIC: self.kappa < 0.0}[self.kind]
        if not expected:
            raise ConfigurationError(
                f"curvature {self.kappa} incompatible with {self.kind.value} ambient")

    @classmethod
    def euclidean(cls, dim=3):
        return cls(Kind.EUCLIDEAN, 0.0, dim)

    @classmethod
    def sphere(cls, dim=3, kappa=1.0):
        return cls(Kind.SPHERE, kappa, dim)

    @classmethod
    def hyperbolic(cls, dim=3, kappa=-1.0):
        return cls(Kind.HYPERBOLIC, kappa, dim)

    @property
    def model_dim(self) -> int:
        return self.dim if self.kind is Kind.EUCLIDEAN else self.dim + 1

    @property
    def m(self) -> int:
        """Dimension of hypersurfaces in this ambient."""
        return self.dim - 1

    @property
    def kappa0(self) -> float:
        # lower sectional curvature bound; equal to kappa in a space form
        return self.kappa

    @property
    def scale(self) -> float:
        """Model radius 1/sqrt|kappa| (1 for Euclidean space)."""
        return 1.0 if self.kappa == 0.0 else 1.0 / math.sqrt(abs(self.kappa))

    def injectivity_radius(self) -> float:
        if self.kind is Kind.SPHERE:
            return math.pi / math.sqrt(self.kappa)
        return math.inf

    def ricci_defect(self) -> float:
        """The term m(kappa - kappa0)/4; identically zero for space forms."""
        return self.m * (self.kappa - self.kappa0) / 4.0

    # -- model metric -----------------------------------------------------

    def inner(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        prod = u * v
        if self.kind is Kind.HYPERBOLIC:
            return prod[..., 1:].sum(axis=-1) - prod[..., 0]
        return prod.sum(axis=-1)

    def norm(self, v):
        return np.sqrt(np.maximum(self.inner(v, v), 0.0))

    def lower(self, v):
        """Index-lowering map: returns w with w . u == inner(v, u)."""
        v = np.array(v, dtype=float)
        if self.kind is Kind.HYPERBOLIC:
            v[..., 0] = -v[..., 0]
        return v

    def check_point(self, x, tol=MODEL_TOL):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.model_dim:
            raise ModelConstraintError(
                f"expected {self.model_dim} model coordinates, got {x.shape[-1]}")
        if self.kind is Kind.EUCLIDEAN:
            return x
        dev = np.abs(self.kappa * self.inner(x, x) - 1.0)
        if np.any(dev > tol) or not np.all(np.isfinite(dev)):
            raise ModelConstraintError(
                f"point off the {self.kind.value} model (max deviation {np.nanmax(dev):.3e})")
        if self.kind is Kind.HYPERBOLIC and np.any(x[..., 0] <= 0):
            raise ModelConstraintError("point on the lower hyperboloid sheet")
        return x

    def check_tangent(self, x, v, tol=MODEL_TOL):
        if self.kind is Kind.EUCLIDEAN:
            return v
        dev = np.abs(self.inner(x, v)) * math.sqrt(abs(self.kappa))
        scale = np.maximum(self.norm(v), 1.0)
        if np.any(dev > tol * scale):
            raise ModelConstraintError("vector is not tangent to the model at its base point")
        return v

    def normalize(self, x):
        """Radially rescale model coordinates back onto the model."""
        x = np.asarray(x, dtype=float)
        if self.kind is Kind.EUCLIDEAN:
            return x
        q = self.kappa * self.inner(x, x)
        return x / np.sqrt(q)[..., None]

    def project_tangent(self, x, v):
        """Orthogonal projection (model metric) of v onto the tangent space at x."""
        v = np.asarray(v, dtype=float)
        if self.kind is Kind.EUCLIDEAN:
            return v
        return v - (self.kappa * self.inner(x, v))[..., None] * x

    def origin(self):
        """A distinguished base point: the Euclidean origin or the model pole."""
        x = np.zeros(self.model_dim)
        if self.kind is not Kind.EUCLIDEAN:
            x[0] = self.scale
        return x


# -- distance function ------------------------------------------------------

def geodesic_distance(space: SpaceForm, x0, x):
    """Ambient geodesic distance rho(x0, x).

    The arc-function argument is clamped; the half-angle forms below are the
    same formulas as arccos(kappa<x, x0>) / arccosh(kappa<x, x0>_L) but keep
    full relative precision for nearby points.
    """
    x0 = space.check_point(x0)
    x = space.check_point(x)
    d = x - x0
    if space.kind is Kind.EUCLIDEAN:
        return np.sqrt((d * d).sum(axis=-1))
    R = space.scale
    if space.kind is Kind.SPHERE:
        s = x + x0
        chord = np.sqrt((d * d).sum(axis=-1))
        co_chord = np.sqrt((s * s).sum(axis=-1))
        return 2.0 * R * np.arctan2(chord, co_chord)
    chord = np.sqrt(np.maximum(space.inner(d, d), 0.0))
    return 2.0 * R * np.arcsinh(chord / (2.0 * R))


def _raw_direction(space, x0, x):
    # tangent vector at x pointing away from x0 (unnormalized)
    d = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
    if space.kind is Kind.EUCLIDEAN:
        return d
    return d - (space.kappa * space.inner(d, x))[..., None] * x


def _check_regular(space, rho):
    rho = np.asarray(rho)
    if np.any(rho <= 1e-14 * space.scale):
        raise SingularGradientError("distance gradient undefined at rho = 0")
    if space.kind is Kind.SPHERE and np.any(rho > space.injectivity_radius() - CUT_LOCUS_GUARD):
        raise SingularGradientError("point too close to the cut locus of the centre")


def grad_distance(space: SpaceForm, x0, x, rho=None):
    """Unit gradient of rho(x0, .) at x (points away from x0)."""
    x = space.check_point(x)
    if rho is None:
        rho = geodesic_distance(space, x0, x)
    _check_regular(space, rho)
    v = _raw_direction(space, x0, x)
    return v / space.norm(v)[..., None]


def comparison_G(rho, space: SpaceForm):
    """Comparison pair (G(rho), G'(rho)).

    G(rho) = rho for kappa <= 0 and sin(sqrt(kappa) rho)/sqrt(kappa) for kappa > 0.
    """
    rho = np.asarray(rho, dtype=float)
    if space.kappa <= 0.0:
        return rho, np.ones_like(rho)
    sk = math.sqrt(space.kappa)
    return np.sin(sk * rho) / sk, np.cos(sk * rho)


def hessian_coefficient(space: SpaceForm, rho):
    """c(rho) with Hess rho = c(rho) (<.,.> - d rho (x) d rho) in a space form.

    Euclidean 1/rho, sphere sqrt(k) cot(sqrt(k) rho), hyperbolic
    sqrt(-k) coth(sqrt(-k) rho). For kappa >= 0 this equals G'/G.
    """
    rho = np.asarray(rho, dtype=float)
    if space.kind is Kind.EUCLIDEAN:
        return 1.0 / rho
    sk = math.sqrt(abs(space.kappa))
    if space.kind is Kind.SPHERE:
        return sk / np.tan(sk * rho)
    return sk / np.tanh(sk * rho)


def hessian_distance_quadform(space: SpaceForm, x0, x, Y):
    """Hess rho (Y, Y) at x for a tangent vector Y."""
    x = space.check_point(x)
    space.check_tangent(x, Y)
    rho = geodesic_distance(space, x0, x)
    n = grad_distance(space, x0, x, rho)
    yn = space.inner(Y, n)
    return hessian_coefficient(space, rho) * (space.inner(Y, Y) - yn * yn)


def radial_field(space: SpaceForm, x0, x):
    """The field G(rho) grad rho; the position vector x - x0 when kappa = 0."""
    x = space.check_point(x)
    rho = geodesic_distance(space, x0, x)
    n = grad_distance(space, x0, x, rho)
    G, _ = comparison_G(rho, space)
    return G[..., None] * n


def ricci(space: SpaceForm, x, v, w):
    """Ricci tensor m*kappa*<v, w> of the space form at x."""
    x = space.check_point(x)
    space.check_tangent(x, v)
    space.check_tangent(x, w)
    if space.kappa == 0.0:
        return np.zeros(np.broadcast_shapes(np.shape(v)[:-1], np.shape(w)[:-1]))
    return space.m * space.kappa * space.inner(v, w)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Vector field on the ambient used in the divergence identity.

    ``kind="comparison"`` is G(rho) grad rho about ``center``;
    ``kind="position"`` (Euclidean only) is x - center, defined at the centre
    too; ``kind="zero"`` is the zero field.
    """

    space: SpaceForm
    center: np.ndarray = field(default=None)
    kind: str = "comparison"

    def __post_init__(self):
        if self.kind not in ("comparison", "position", "zero"):
            raise ConfigurationError(f"unknown radial field kind {self.kind!r}")
        if self.kind == "position" and self.space.kind is not Kind.EUCLIDEAN:
            raise ConfigurationError("position field only exists in Euclidean space")
        c = self.space.origin() if self.center is None else np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", self.space.check_point(c))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "position":
            return x - self.center
        return radial_field(self.space, self.center, x)

    def derivative_coefficients(self, x):
        """(n, a, b) with D_E X = a <E, n> n + b (E - <E, n> n) at x.

        ``n`` is the unit radial direction (zeros where irrelevant).
        """
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        if self.kind == "zero":
            return np.zeros_like(x), np.zeros(shape), np.zeros(shape)
        if self.kind == "position":
            return np.zeros_like(x), np.ones(shape), np.ones(shape)
        sp = self.space
        rho = geodesic_distance(sp, self.center, x)
        n = grad_distance(sp, self.center, x, rho)
        G, Gp = comparison_G(rho, sp)
        return n, Gp, G * hessian_coefficient(sp, rho)

    def derivative_form(self, x, E, F):
        """<D_E X, F> for tangent vectors E, F at x (ambient covariant derivative)."""
        sp = self.space
        n, a, b = self.derivative_coefficients(x)
        en = sp.inner(E, n)
        fn = sp.inner(F, n)
        return a * en * fn + b * (sp.inner(E, F) - en * fn)
