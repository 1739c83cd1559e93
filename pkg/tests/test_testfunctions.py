import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvlab.errors import ConfigurationError
from curvlab.fixtures import make_cap_domain, make_ellipsoid, make_sphere
from curvlab.hypersurface import curvature_frame
from curvlab.measure import GridSpec
from curvlab.testfunctions import constant, radial_bump, smooth_bump, smootherstep, tent
from curvlab.verifier import verify_isoperimetric, verify_poincare

M = make_ellipsoid(1.2, 1.0, 0.9)
CAP = make_cap_domain(M, 1.2)


def fd_gradient(tf, u, h=1e-6):
    out = np.empty(u.shape)
    for i in range(u.shape[-1]):
        e = np.zeros(u.shape[-1])
        e[i] = h
        fp, _ = tf.evaluate(curvature_frame(M, u + e))
        fm, _ = tf.evaluate(curvature_frame(M, u - e))
        out[..., i] = (fp - fm) / (2 * h)
    return out


def sample(seed, n=64):
    rng = np.random.default_rng(seed)
    return np.stack([0.05 + rng.random(n) * 3.0, rng.random(n) * 2 * math.pi], axis=-1)


def test_smootherstep_endpoints():
    S, dS = smootherstep(np.array([0.0, 0.5, 1.0]))
    assert np.allclose(S, [0, 0.5, 1]) and np.allclose(dS[[0, 2]], 0)


def test_constructor_guards():
    with pytest.raises(ConfigurationError):
        constant(-1.0)
    with pytest.raises(ConfigurationError):
        tent(M, CAP, 0.0)
    with pytest.raises(ConfigurationError):
        radial_bump(M, np.zeros(3), 1.0, 0.5)


@pytest.mark.parametrize("make", [
    lambda: radial_bump(M, np.zeros(3), 0.3, 1.0),
    lambda: smooth_bump(M, CAP, 0.3),
    lambda: tent(M, CAP, 0.3),
], ids=["radial_bump", "smooth_bump", "tent"])
def test_gradient_oracle_matches_fd(make):
    tf = make()
    u = sample(1, 200)
    fr = curvature_frame(M, u)
    f, df = tf.evaluate(fr)
    fd = fd_gradient(tf, u)
    # skip points within a step of a kink of the tent
    if tf.kind == "TentEps":
        d = 1.2 - u[:, 0]
        smooth = (np.abs(d) > 1e-3) & (np.abs(d - 0.3) > 1e-3)
    else:
        smooth = np.ones(len(u), dtype=bool)
    assert np.abs(df - fd)[smooth].max() <= 1e-6


@given(st.integers(0, 10_000))
def test_non_negative_and_supported(seed):
    u = sample(seed)
    fr = curvature_frame(M, u)
    for tf in (tent(M, CAP, 0.2), smooth_bump(M, CAP, 0.2), constant(2.0, CAP)):
        f, _ = tf.evaluate(fr)
        assert np.all(f >= 0)
        assert np.all(f[CAP.phi(u) > 0] == 0)
    f, _ = radial_bump(M, np.zeros(3), 0.3, 1.0).evaluate(fr)
    assert np.all((f >= 0) & (f <= 1))


def test_tent_limit_recovers_boundary_form():
    S = make_sphere(2, 1.0)
    cap = make_cap_domain(S, math.pi / 3)
    g = GridSpec((64, 128))
    ref = verify_isoperimetric(S, cap, g).rhs
    errs = [abs(verify_poincare(S, cap, tent(S, cap, eps), g).rhs - ref) for eps in (0.2, 0.1, 0.05)]
    orders = [math.log2(a / b) for a, b in zip(errs[:-1], errs[1:])]
    assert min(orders) >= 0.9
