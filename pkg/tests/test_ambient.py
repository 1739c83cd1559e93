import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvlab.ambient import (Kind, RadialField, SpaceForm, comparison_G, geodesic_distance,
                             grad_distance, hessian_distance_quadform, radial_field, ricci)
from curvlab.errors import ConfigurationError, ModelConstraintError, SingularGradientError

E3 = SpaceForm.euclidean(3)
S3 = SpaceForm.sphere(3, 1.0)
H3 = SpaceForm.hyperbolic(3, -1.0)
SPACES = [E3, S3, H3, SpaceForm.sphere(3, 4.0), SpaceForm.hyperbolic(4, -0.25)]


def random_point(space, rng, spread=1.0):
    v = rng.normal(size=space.model_dim) * spread
    if space.kind is Kind.EUCLIDEAN:
        return v
    if space.kind is Kind.SPHERE:
        return space.scale * v / np.linalg.norm(v)
    # hyperboloid point lying over v[1:]
    w = v[1:] * space.scale
    return np.concatenate([[math.sqrt(space.scale ** 2 + w @ w)], w])


def geodesic(space, x, v, t):
    """Point at arclength t along the geodesic through x with unit velocity v."""
    if space.kind is Kind.EUCLIDEAN:
        return x + t * v
    s = math.sqrt(abs(space.kappa))
    if space.kind is Kind.SPHERE:
        return np.cos(s * t) * x + np.sin(s * t) / s * v
    return np.cosh(s * t) * x + np.sinh(s * t) / s * v


def tangent_unit(space, x, rng):
    v = space.project_tangent(x, rng.normal(size=space.model_dim))
    return v / space.norm(v)


def test_space_form_invariants():
    assert E3.model_dim == 3 and S3.model_dim == 4 and H3.model_dim == 4
    assert E3.injectivity_radius() == math.inf
    assert H3.injectivity_radius() == math.inf
    assert SpaceForm.sphere(3, 4.0).injectivity_radius() == pytest.approx(math.pi / 2)
    assert all(s.ricci_defect() == 0.0 for s in SPACES)
    with pytest.raises(ConfigurationError):
        SpaceForm(Kind.SPHERE, -1.0, 3)
    with pytest.raises(ConfigurationError):
        SpaceForm(Kind.EUCLIDEAN, 0.0, 2)


def test_distance_examples():
    assert geodesic_distance(E3, np.zeros(3), np.array([3.0, 4.0, 0.0])) == 5.0
    north = np.array([1.0, 0, 0, 0])
    equator = np.array([0.0, 1, 0, 0])
    assert geodesic_distance(S3, north, equator) == pytest.approx(math.pi / 2, abs=1e-15)


def test_hyperbolic_distance_against_polyline():
    vertex = H3.origin()
    # a point with Minkowski product -cosh(1) with the vertex lies at distance 1
    x = np.array([math.cosh(1.0), math.sinh(1.0), 0.0, 0.0])
    assert H3.inner(x, vertex) == pytest.approx(-math.cosh(1.0))
    assert geodesic_distance(H3, vertex, x) == pytest.approx(1.0, abs=1e-14)
    # length of a 10-segment geodesic polyline, each segment measured by chord + arcsinh inversion
    ts = np.linspace(0.0, 1.0, 11)
    pts = np.stack([np.cosh(ts), np.sinh(ts), 0 * ts, 0 * ts], axis=-1)
    total = sum(geodesic_distance(H3, pts[i], pts[i + 1]) for i in range(10))
    assert total == pytest.approx(1.0, abs=1e-13)


def test_off_model_rejected():
    with pytest.raises(ModelConstraintError):
        geodesic_distance(S3, np.array([1.0, 0, 0, 0]), np.array([2.0, 0, 0, 0]))


def test_grad_distance_examples():
    assert np.allclose(grad_distance(E3, np.zeros(3), np.array([2.0, 0, 0])), [1, 0, 0])
    north = np.array([1.0, 0, 0, 0])
    p = np.array([0.0, 1, 0, 0])
    g = grad_distance(S3, north, p)
    # finite difference of rho along a tangent basis at p
    basis = [np.array([1.0, 0, 0, 0]), np.array([0.0, 0, 1, 0]), np.array([0.0, 0, 0, 1])]
    h = 1e-6
    for e in basis:
        fd = (geodesic_distance(S3, north, geodesic(S3, p, e, h))
              - geodesic_distance(S3, north, geodesic(S3, p, e, -h))) / (2 * h)
        assert S3.inner(g, e) == pytest.approx(fd, abs=1e-8)
    assert np.allclose(g, [-1, 0, 0, 0])


def test_grad_distance_singular():
    north = np.array([1.0, 0, 0, 0])
    with pytest.raises(SingularGradientError):
        grad_distance(S3, north, north)
    with pytest.raises(SingularGradientError):
        grad_distance(S3, north, -north)


def test_comparison_G_examples():
    assert comparison_G(1.7, E3) == (1.7, 1.0)
    G, Gp = comparison_G(math.pi / 2, S3)
    assert G == pytest.approx(1.0) and Gp == pytest.approx(0.0, abs=1e-16)
    G, Gp = comparison_G(math.pi / 12, SpaceForm.sphere(3, 4.0))
    assert G == pytest.approx(0.25, abs=1e-15)
    assert Gp == pytest.approx(0.8660254037844387, abs=1e-15)
    # series cross-check: sin(2r)/2 = r - (2r)^3/12 + ...
    r = math.pi / 12
    series = sum((-1) ** k * (2 * r) ** (2 * k + 1) / math.factorial(2 * k + 1) for k in range(10)) / 2
    assert G == pytest.approx(series, abs=1e-15)


def test_radial_field_examples():
    assert np.allclose(radial_field(E3, np.zeros(3), np.array([0.0, 2, 0])), [0, 2, 0])
    north = np.array([1.0, 0, 0, 0])
    X = radial_field(S3, north, np.array([0.0, 0, 1, 0]))
    assert S3.norm(X) == pytest.approx(1.0)


def test_hessian_examples():
    x0 = np.zeros(3)
    x = np.array([2.0, 0, 0])
    assert hessian_distance_quadform(E3, x0, x, np.array([0.0, 1, 0])) == pytest.approx(0.5)
    assert hessian_distance_quadform(E3, x0, x, np.array([3.0, 0, 0])) == pytest.approx(0.0)
    north = np.array([1.0, 0, 0, 0])
    a = math.pi / 4
    x = np.array([math.cos(a), math.sin(a), 0, 0])
    Y = np.array([0.0, 0, 1, 0])
    val = hessian_distance_quadform(S3, north, x, Y)
    h = 1e-4
    fd = (geodesic_distance(S3, north, geodesic(S3, x, Y, h)) - 2 * a
          + geodesic_distance(S3, north, geodesic(S3, x, Y, -h))) / h ** 2
    assert val == pytest.approx(1.0, abs=1e-14)
    assert fd == pytest.approx(val, abs=1e-6)


@pytest.mark.parametrize("space", SPACES, ids=lambda s: f"{s.kind.value}{s.kappa:g}")
def test_hessian_second_difference_order(space):
    rng = np.random.default_rng(3)
    x0 = random_point(space, rng, 0.3)
    x = random_point(space, rng, 0.8)
    Y = tangent_unit(space, x, rng)
    exact = hessian_distance_quadform(space, x0, x, Y)
    rho = geodesic_distance(space, x0, x)
    errs = []
    for h in (1.6e-2, 8e-3, 4e-3):
        fd = (geodesic_distance(space, x0, geodesic(space, x, Y, h)) - 2 * rho
              + geodesic_distance(space, x0, geodesic(space, x, Y, -h))) / h ** 2
        errs.append(abs(fd - exact))
    orders = [math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])]
    assert min(orders) >= 1.9


def test_ricci_examples():
    x = np.array([1.0, 0, 0, 0])
    v = np.array([0.0, 1, 0, 0])
    w = np.array([0.0, 0, 1, 0])
    assert ricci(S3, x, v, w) == 0.0
    assert ricci(S3, x, v, v) == pytest.approx(2.0)
    assert ricci(E3, np.zeros(3), np.ones(3), np.ones(3)) == 0.0
    with pytest.raises(ModelConstraintError):
        ricci(S3, x, x, v)


def test_ricci_defect_bound_is_exact():
    # orthogonal unit vectors: |ric| = 0 <= m (kappa - kappa0) / 2 = 0
    for space in (S3, H3):
        x = space.origin()
        v = np.zeros(space.model_dim)
        w = np.zeros(space.model_dim)
        v[1], w[2] = 1.0, 1.0
        assert abs(ricci(space, x, v, w)) <= space.m * (space.kappa - space.kappa0) / 2


def test_position_field_derivative():
    F = RadialField(E3, np.zeros(3), "position")
    n, a, b = F.derivative_coefficients(np.array([[1.0, 2, 3]]))
    assert a[0] == 1.0 and b[0] == 1.0
    with pytest.raises(ConfigurationError):
        RadialField(S3, None, "position")


@given(st.integers(0, 10_000), st.sampled_from(range(len(SPACES))))
def test_eikonal_symmetry_triangle(seed, which):
    space = SPACES[which]
    rng = np.random.default_rng(seed)
    x0, x, y = (random_point(space, rng) for _ in range(3))
    d = geodesic_distance(space, x0, x)
    assert d == pytest.approx(geodesic_distance(space, x, x0), abs=1e-12 * max(1, d))
    assert geodesic_distance(space, x0, y) <= d + geodesic_distance(space, x, y) + 1e-10
    if d > 1e-6 and d < space.injectivity_radius() - 1e-6:
        g = grad_distance(space, x0, x)
        assert space.inner(g, g) == pytest.approx(1.0, abs=1e-10)
        assert abs(space.inner(g, x)) <= 1e-10 * max(1.0, space.scale ** 2) or space.kind is Kind.EUCLIDEAN


@given(st.integers(0, 10_000), st.sampled_from(range(len(SPACES))))
def test_normalize_on_model(seed, which):
    space = SPACES[which]
    rng = np.random.default_rng(seed)
    x = random_point(space, rng, 2.0)
    if space.kind is not Kind.EUCLIDEAN:
        assert space.inner(x, x) * space.kappa == pytest.approx(1.0, abs=1e-12)
        v = space.project_tangent(x, rng.normal(size=space.model_dim))
        assert abs(space.inner(x, v)) <= 1e-12 * max(1.0, float(np.abs(x).max()) * float(np.abs(v).max()))
