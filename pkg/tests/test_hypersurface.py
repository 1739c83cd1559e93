import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvlab.ambient import RadialField, SpaceForm, comparison_G, geodesic_distance
from curvlab.errors import ConfigurationError, DegenerateImmersionError
from curvlab.fixtures import (make_convex_graph, make_ellipsoid, make_geodesic_sphere,
                              make_sphere)
from curvlab.hypersurface import (Immersion, curvature_frame, g_inner, newton_apply,
                                  newton_matrix, p1_trace_term, shrinker_residual,
                                  unit_sphere_volume)

S3 = SpaceForm.sphere(3, 1.0)
H3 = SpaceForm.hyperbolic(3, -1.0)

FIXTURES = {
    "sphere": lambda: make_sphere(2, 1.0),
    "sphere3": lambda: make_sphere(3, 1.5),
    "ellipsoid": lambda: make_ellipsoid(1.2, 1.0, 0.9),
    "geo_sphere": lambda: make_geodesic_sphere(S3, math.pi / 4),
    "geo_hyperbolic": lambda: make_geodesic_sphere(H3, 1.0),
    "convex_graph": lambda: make_convex_graph(0.05, 3, 7),
}


def interior_nodes(M, n=6, seed=0):
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in M.bounds])
    hi = np.array([b for _, b in M.bounds])
    pad = 0.05 * (hi - lo)
    return lo + pad + rng.random((n, M.m)) * (hi - lo - 2 * pad)


def test_unit_sphere_frame():
    fr = curvature_frame(make_sphere(2, 1.0), np.array([0.7, 1.1]))
    assert np.allclose(fr.k, [1, 1], atol=1e-13)
    assert fr.S1 == pytest.approx(2.0) and fr.S2 == pytest.approx(1.0)
    assert fr.H == pytest.approx(1.0) and fr.R == pytest.approx(1.0)
    assert np.allclose(fr.theta, [1, 1], atol=1e-13)


@pytest.mark.parametrize("m,r", [(2, 0.5), (2, 3.0), (3, 1.0), (3, math.sqrt(6))])
def test_sphere_radius_r(m, r):
    fr = curvature_frame(make_sphere(m, r), interior_nodes(make_sphere(m, r)))
    assert np.allclose(fr.S1, m / r, rtol=1e-12)
    assert np.allclose(fr.S2, m * (m - 1) / (2 * r * r), rtol=1e-12)
    # P1 = (m - 1)/r * identity
    P = newton_matrix(fr)
    assert np.allclose(P, (m - 1) / r * np.eye(m), atol=1e-10)


def test_geodesic_sphere_curvatures():
    a = math.pi / 4
    fr = curvature_frame(make_geodesic_sphere(S3, a), np.array([[0.9, 2.0]]))
    assert np.allclose(fr.k, 1 / math.tan(a), atol=1e-12)
    assert fr.S1[0] == pytest.approx(2 / math.tan(a))
    assert fr.S2[0] == pytest.approx(1 / math.tan(a) ** 2)
    fr = curvature_frame(make_geodesic_sphere(H3, 1.0), np.array([[0.9, 2.0]]))
    assert np.allclose(fr.k, 1.3130352854993312, atol=1e-12)


@pytest.mark.parametrize("name", ["geo_sphere", "geo_hyperbolic", "ellipsoid"])
def test_analytic_matches_finite_differences(name):
    M = FIXTURES[name]()
    u = interior_nodes(M, 8)
    exact = curvature_frame(M, u)
    errs = []
    for h in (2e-4, 1e-4):
        fd = curvature_frame(M.with_finite_differences(h), u)
        errs.append(max(np.abs(fd.S1 - exact.S1).max() / np.abs(exact.S1).max(),
                        np.abs(fd.S2 - exact.S2).max() / np.abs(exact.S2).max()))
    assert errs[-1] <= 1e-6
    assert math.log2(errs[0] / errs[1]) >= 1.8


def test_newton_apply_examples(unit_sphere):
    fr = curvature_frame(unit_sphere, np.array([[0.4, 0.3]]))
    v = np.array([[0.3, -1.2]])
    assert np.allclose(newton_apply(fr, v), v)
    assert np.allclose(newton_apply(fr, np.zeros((1, 2))), 0)
    fr = curvature_frame(make_ellipsoid(1.2, 1.0, 0.9), np.array([[0.4, 0.3]]))
    for i in range(2):
        e = fr.frame[..., i]
        assert np.allclose(newton_apply(fr, e), fr.theta[..., i:i + 1] * e, atol=1e-12)


def test_p1_trace_term_examples(unit_sphere, ellipsoid):
    u = interior_nodes(unit_sphere, 5)
    pos = RadialField(unit_sphere.space, np.zeros(3), "position")
    assert np.allclose(p1_trace_term(unit_sphere, u, pos), 2.0, atol=1e-12)
    zero = RadialField(unit_sphere.space, None, "zero")
    assert np.allclose(p1_trace_term(unit_sphere, u, zero), 0.0)
    u = interior_nodes(ellipsoid, 200, seed=1)
    fr = curvature_frame(ellipsoid, u)
    assert np.all(p1_trace_term(ellipsoid, u, pos) - (ellipsoid.m - 1) * fr.S1 >= -1e-8)


def test_shrinker_residual_on_fixture():
    for m in (2, 3):
        M = make_sphere(m, math.sqrt(2 * m))
        fr = curvature_frame(M, interior_nodes(M, 10))
        assert np.abs(shrinker_residual(fr, M.space)).max() <= 1e-10
    fr = curvature_frame(make_sphere(2, 1.0), np.array([[0.5, 0.5]]))
    assert abs(shrinker_residual(fr, SpaceForm.euclidean(3))[0]) > 0.5


def test_orientation_is_inward(unit_sphere):
    fr = curvature_frame(unit_sphere, np.array([[0.8, 0.2]]))
    assert unit_sphere.space.inner(fr.x, fr.eta)[0] == pytest.approx(-1.0)


def test_degenerate_chart_rejected():
    E3 = SpaceForm.euclidean(3)

    def chart(u):
        u = np.asarray(u)
        return np.stack([u[..., 0], u[..., 0], 0 * u[..., 1]], axis=-1)

    M = Immersion(E3, chart, ((0, 1), (0, 1)), (False, False), orientation=1)
    with pytest.raises(DegenerateImmersionError):
        curvature_frame(M, np.array([[0.5, 0.5]]))
    with pytest.raises(ConfigurationError):
        Immersion(E3, chart, ((0, 1), (0, 1), (0, 1)), (False,) * 3)


def test_unit_sphere_volume():
    assert unit_sphere_volume(2) == pytest.approx(4 * math.pi)
    assert unit_sphere_volume(3) == pytest.approx(2 * math.pi ** 2)


@given(st.sampled_from(sorted(FIXTURES)), st.integers(0, 10_000))
def test_frame_invariants(name, seed):
    M = FIXTURES[name]()
    fr = curvature_frame(M, interior_nodes(M, 16, seed))
    A2 = (fr.k ** 2).sum(axis=-1)
    assert np.allclose(A2 + 2 * fr.S2, fr.S1 ** 2, rtol=1e-10, atol=1e-12)
    assert np.all(fr.theta.min(axis=-1) >= -1e-10)
    bound = fr.S1 + np.sqrt(np.maximum(fr.S1 ** 2 - 2 * fr.S2, 0))
    assert np.all(fr.theta.max(axis=-1) <= bound + 1e-10)
    assert np.all(bound <= 2 * fr.S1 + 1e-10)
    sp = M.space
    assert np.allclose(sp.inner(fr.eta, fr.eta), 1.0, atol=1e-10)
    assert np.abs(sp.inner(fr.tangents, fr.eta[..., None, :])).max() <= 1e-10


@given(st.sampled_from(sorted(FIXTURES)), st.integers(0, 10_000))
def test_newton_self_adjoint_and_bounded(name, seed):
    M = FIXTURES[name]()
    rng = np.random.default_rng(seed)
    fr = curvature_frame(M, interior_nodes(M, 16, seed))
    u = rng.normal(size=(16, M.m))
    v = rng.normal(size=(16, M.m))
    lhs = g_inner(fr, newton_apply(fr, u), v)
    assert np.allclose(lhs, g_inner(fr, u, newton_apply(fr, v)), rtol=1e-10, atol=1e-12)
    nu = np.sqrt(g_inner(fr, u, u))
    nv = np.sqrt(g_inner(fr, v, v))
    assert np.all(np.abs(lhs) <= 2 * fr.S1 * nu * nv + 1e-12)


@given(st.sampled_from(["sphere", "ellipsoid", "geo_sphere", "geo_hyperbolic", "convex_graph"]),
       st.integers(0, 10_000))
def test_comparison_trace_lower_bound(name, seed):
    M = FIXTURES[name]()
    sp = M.space
    x0 = M.point(interior_nodes(M, 1, seed + 1)[0])
    fr = curvature_frame(M, interior_nodes(M, 32, seed))
    rho = geodesic_distance(sp, x0, fr.x)
    keep = rho > 1e-6
    if sp.kappa > 0:
        keep &= rho < math.pi / (2 * math.sqrt(sp.kappa))
    fr = fr.take(keep)
    field_ = RadialField(sp, x0, "comparison")
    _, Gp = comparison_G(geodesic_distance(sp, x0, fr.x), sp)
    trace = p1_trace_term(M, None, field_, frame=fr)
    assert np.all(trace - (M.m - 1) * fr.S1 * Gp >= -1e-8)
