"""Analytic test hypersurfaces with closed-form jets.

Spherical charts use hyperspherical angles ``u = (u_0, ..., u_{m-1})`` with
``u_0, ..., u_{m-2}`` in ``(0, pi)`` and the last angle periodic on
``[0, 2 pi)``; the unit chart sends ``u_0 = 0`` to the first basis vector.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ambient import Kind, SpaceForm
from .errors import ConfigurationError
from .hypersurface import Immersion, curvature_frame, unit_sphere_volume
from .measure import Sublevel, SubRectangle

# factor codes for the product structure of the unit chart
_ONE, _SIN, _COS = 0, 1, 2


def _factor_table(m):
    """codes[c, j]: factor of component c depending on angle j.

    w_0 = cos u_0, w_c = sin u_0 ... sin u_{c-1} cos u_c, w_m = sin u_0 ... sin u_{m-1}.
    """
    codes = np.full((m + 1, m), _ONE, dtype=int)
    codes[0, 0] = _COS
    for c in range(1, m + 1):
        codes[c, :c] = _SIN
        if c < m:
            codes[c, c] = _COS
    return codes


def _factor_jets(code, t):
    if code == _SIN:
        s, c = np.sin(t), np.cos(t)
        return s, c, -s
    if code == _COS:
        s, c = np.sin(t), np.cos(t)
        return c, -s, -c
    one = np.ones_like(t)
    return one, 0 * one, 0 * one


def unit_sphere_jets(u):
    """(omega, d omega, dd omega) of the unit hyperspherical chart."""
    u = np.asarray(u, dtype=float)
    m = u.shape[-1]
    codes = _factor_table(m)
    lead = u.shape[:-1]
    X = np.empty(lead + (m + 1,))
    dX = np.empty(lead + (m, m + 1))
    ddX = np.empty(lead + (m, m, m + 1))
    for c in range(m + 1):
        jets = [_factor_jets(codes[c, j], u[..., j]) for j in range(m)]
        vals = [f[0] for f in jets]
        X[..., c] = np.prod(vals, axis=0)
        for i in range(m):
            d = [f[0] for f in jets]
            d[i] = jets[i][1]
            dX[..., i, c] = np.prod(d, axis=0)
            for k in range(i, m):
                dd = [f[0] for f in jets]
                if i == k:
                    dd[i] = jets[i][2]
                else:
                    dd[i] = jets[i][1]
                    dd[k] = jets[k][1]
                ddX[..., i, k, c] = ddX[..., k, i, c] = np.prod(dd, axis=0)
    return X, dX, ddX


def unit_sphere_chart(u):
    return unit_sphere_jets(u)[0]


def _angle_bounds(m):
    return tuple([(0.0, math.pi)] * (m - 1) + [(0.0, 2 * math.pi)]), \
        tuple([False] * (m - 1) + [True])


def _check_m(m):
    if m not in (2, 3):
        raise ConfigurationError(f"fixtures are provided for m = 2, 3 (got {m})")


def make_sphere(m=2, r=1.0, center=None, ambient=None) -> Immersion:
    """Round sphere S^m(r) in R^{m+1} with inward unit normal."""
    _check_m(m)
    if r <= 0:
        raise ConfigurationError("radius must be positive")
    space = ambient or SpaceForm.euclidean(m + 1)
    if space.kind is not Kind.EUCLIDEAN:
        raise ConfigurationError("make_sphere builds Euclidean spheres; see make_geodesic_sphere")
    c = np.zeros(m + 1) if center is None else np.asarray(center, dtype=float)
    r = float(r)

    def jets(u):
        X, dX, ddX = unit_sphere_jets(u)
        return c + r * X, r * dX, r * ddX

    oracles = {
        "area": unit_sphere_volume(m) * r ** m,
        "k": 1.0 / r,
        "S1": m / r,
        "S2": m * (m - 1) / (2 * r * r),
        "diameter": 2 * r,
    }
    if m == 2:
        # M within chordal distance t of a point of M: area pi t^2, S1 = 2/r
        oracles["cap_area"] = lambda t: math.pi * np.asarray(t) ** 2
        oracles["cap_S1"] = lambda t: 2 * math.pi * np.asarray(t) ** 2 / r
    bounds, periodic = _angle_bounds(m)
    return Immersion(space, lambda u: jets(u)[0], bounds, periodic, jets=jets, closed=True,
                     name=f"sphere(m={m}, r={r:g})", oracles=oracles)


def make_ellipsoid(a=1.2, b=1.0, c=0.9) -> Immersion:
    """Ellipsoid with semi-axes (a, b, c) in R^3, inward normal."""
    axes = np.array([a, b, c], dtype=float)
    if np.any(axes <= 0) or axes.max() / axes.min() > 2.0 + 1e-12:
        raise ConfigurationError("semi-axes must be positive and within a ratio of 2")

    def jets(u):
        return _ellipsoid_map(*unit_sphere_jets(u), axes)

    def chart(u):
        return jets(u)[0]

    def oracle(x):
        x = np.asarray(x, dtype=float)
        D = (x * x / axes ** 4).sum(axis=-1)
        p2 = (axes ** 2).prod()
        H = ((axes ** 2).sum() - (x * x).sum(axis=-1)) / (2 * p2 * D ** 1.5)
        K = 1.0 / (p2 * D * D)
        return H, K

    bounds, periodic = _angle_bounds(2)
    return Immersion(SpaceForm.euclidean(3), chart, bounds, periodic, jets=jets, closed=True,
                     name=f"ellipsoid({a:g},{b:g},{c:g})",
                     oracles={"mean_gauss": oracle, "volume": 4 * math.pi * a * b * c / 3})


def _ellipsoid_map(X, dX, ddX, axes):
    # unit chart coordinates (z, x, y) -> (a x, b y, c z)
    idx = np.array([1, 2, 0])
    return X[..., idx] * axes, dX[..., idx] * axes, ddX[..., idx] * axes


def make_geodesic_sphere(space: SpaceForm, a: float) -> Immersion:
    """Geodesic sphere of radius a about the model pole of S^{m+1}(k) or H^{m+1}(k)."""
    m = space.m
    _check_m(m)
    if space.kind is Kind.EUCLIDEAN:
        return make_sphere(m, a)
    sk = math.sqrt(abs(space.kappa))
    R = space.scale
    if a <= 0:
        raise ConfigurationError("radius must be positive")
    if space.kind is Kind.SPHERE:
        if sk * a >= math.pi / 2:
            raise ConfigurationError("geodesic sphere radius must stay below pi/(2 sqrt(kappa))")
        c0, s0 = math.cos(sk * a), math.sin(sk * a)
        k = sk / math.tan(sk * a)
    else:
        c0, s0 = math.cosh(sk * a), math.sinh(sk * a)
        k = sk / math.tanh(sk * a)

    def jets(u):
        W, dW, ddW = unit_sphere_jets(u)
        lead = W.shape[:-1]
        X = np.concatenate([np.full(lead + (1,), R * c0), R * s0 * W], axis=-1)
        dX = np.concatenate([np.zeros(lead + (m, 1)), R * s0 * dW], axis=-1)
        ddX = np.concatenate([np.zeros(lead + (m, m, 1)), R * s0 * ddW], axis=-1)
        return X, dX, ddX

    area = unit_sphere_volume(m) * (R * s0) ** m
    bounds, periodic = _angle_bounds(m)
    return Immersion(space, lambda u: jets(u)[0], bounds, periodic, jets=jets, closed=True,
                     name=f"geodesic_sphere({space.kind.value}, kappa={space.kappa:g}, a={a:g})",
                     oracles={"k": k, "S1": m * k, "S2": m * (m - 1) * k * k / 2, "area": area,
                              "center": space.origin()})


# -- randomized convex radial graph ------------------------------------------

@dataclass(frozen=True)
class _Poly:
    exps: np.ndarray   # (n, 3) exponents
    coef: np.ndarray   # (n,)

    def jets(self, x):
        """Value, gradient and Hessian of the polynomial at x (..., 3)."""
        x = np.asarray(x, dtype=float)
        val = np.zeros(x.shape[:-1])
        grad = np.zeros(x.shape)
        hess = np.zeros(x.shape + (3,))

        def mono(e):
            return np.prod([x[..., i] ** max(e[i], 0) if e[i] >= 0 else 0 * x[..., i]
                            for i in range(3)], axis=0)

        for e, cf in zip(self.exps, self.coef):
            val = val + cf * mono(e)
            for i in range(3):
                if e[i] == 0:
                    continue
                ei = e.copy()
                ei[i] -= 1
                grad[..., i] += cf * e[i] * mono(ei)
                for j in range(3):
                    if ei[j] == 0:
                        continue
                    eij = ei.copy()
                    eij[j] -= 1
                    hess[..., i, j] += cf * e[i] * ei[j] * mono(eij)
        return val, grad, hess


def _random_poly(l_max, rng):
    exps = [e for e in itertools.product(range(l_max + 1), repeat=3) if 1 <= sum(e) <= l_max]
    exps = np.array(exps, dtype=int)
    coef = rng.standard_normal(len(exps))
    coef /= np.abs(coef).sum()  # |Y| <= 1 on the unit sphere
    return _Poly(exps, coef)


def make_convex_graph(eps=0.05, l_max=3, seed=0, max_retries=20, check_grid=(32, 64)) -> Immersion:
    """Radial graph (1 + eps Y(w)) w over the unit sphere with random polynomial Y.

    Draws are rejected until S2 > 0 at every check node.
    """
    if not 0 <= eps <= 0.05:
        raise ConfigurationError("eps must lie in [0, 0.05]")
    if l_max < 1:
        raise ConfigurationError("l_max must be >= 1")
    rng = np.random.default_rng(seed)
    bounds, periodic = _angle_bounds(2)
    for attempt in range(max_retries):
        poly = _random_poly(l_max, rng)

        def jets(u, poly=poly):
            W, dW, ddW = unit_sphere_jets(u)
            Y, gY, hY = poly.jets(W)
            rad = 1.0 + eps * Y
            dr = eps * np.einsum("...in,...n->...i", dW, gY)
            ddr = eps * (np.einsum("...in,...nk,...jk->...ij", dW, hY, dW)
                         + np.einsum("...ijn,...n->...ij", ddW, gY))
            X = rad[..., None] * W
            dX = dr[..., None] * W[..., None, :] + rad[..., None, None] * dW
            ddX = (ddr[..., None] * W[..., None, None, :]
                   + dr[..., :, None, None] * dW[..., None, :, :]
                   + dr[..., None, :, None] * dW[..., :, None, :]
                   + rad[..., None, None, None] * ddW)
            return X, dX, ddX

        M = Immersion(SpaceForm.euclidean(3), lambda u, j=jets: j(u)[0], bounds, periodic,
                      jets=jets, closed=True, name=f"convex_graph(eps={eps:g}, seed={seed})")
        n0, n1 = check_grid
        t0 = (np.arange(n0) + 0.5) * math.pi / n0
        t1 = (np.arange(n1) + 0.5) * 2 * math.pi / n1
        U = np.stack(np.meshgrid(t0, t1, indexing="ij"), axis=-1).reshape(-1, 2)
        fr = curvature_frame(M, U)
        if fr.S2.min() > 0 and fr.S1.min() > 0:
            M.oracles.update({"S2_min": float(fr.S2.min()), "attempts": attempt + 1})
            return M
    raise ConfigurationError(f"no convex draw found in {max_retries} attempts")


def make_torus(R=2.0, r=0.5) -> Immersion:
    """Torus of revolution; S2 < 0 on its inner half (hypothesis-negative)."""
    if not 0 < r < R:
        raise ConfigurationError("torus needs 0 < r < R")

    def jets(u):
        u = np.asarray(u, dtype=float)
        a, b = u[..., 0], u[..., 1]
        ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
        w = R + r * cb
        X = np.stack([w * ca, w * sa, r * sb], axis=-1)
        Xa = np.stack([-w * sa, w * ca, 0 * a], axis=-1)
        Xb = np.stack([-r * sb * ca, -r * sb * sa, r * cb], axis=-1)
        Xaa = np.stack([-w * ca, -w * sa, 0 * a], axis=-1)
        Xab = np.stack([r * sb * sa, -r * sb * ca, 0 * a], axis=-1)
        Xbb = np.stack([-r * cb * ca, -r * cb * sa, -r * sb], axis=-1)
        dX = np.stack([Xa, Xb], axis=-2)
        ddX = np.stack([np.stack([Xaa, Xab], axis=-2), np.stack([Xab, Xbb], axis=-2)], axis=-3)
        return X, dX, ddX

    return Immersion(SpaceForm.euclidean(3), lambda u: jets(u)[0],
                     ((0.0, 2 * math.pi), (0.0, 2 * math.pi)), (True, True), jets=jets,
                     closed=True, name=f"torus({R:g},{r:g})", tags=("hypothesis-negative",),
                     oracles={"area": 4 * math.pi ** 2 * R * r})


def make_cap_domain(M: Immersion, theta0=None, sublevel: Callable = None, grad: Callable = None):
    """Polar cap {u_0 <= theta0}, a custom sublevel set, or None for the full chart."""
    from .measure import FullChart

    if sublevel is not None:
        return Sublevel(sublevel, grad, name="custom")
    if theta0 is None:
        return FullChart()
    lo, hi = M.bounds[0]
    if not lo < theta0 < hi:
        raise ConfigurationError("cap angle must lie inside the first chart interval")
    t = float(theta0)
    e0 = np.zeros(M.m)
    e0[0] = 1.0
    return Sublevel(lambda u: np.asarray(u)[..., 0] - t,
                    lambda u: np.broadcast_to(e0, np.shape(u)).copy(),
                    name=f"cap({t:g})")


def make_rectangle_domain(bounds):
    return SubRectangle(tuple(tuple(b) for b in bounds))


@dataclass(frozen=True)
class FixtureEntry:
    name: str
    build: Callable
    description: str
    tags: tuple = ()


def _sphere_entry(m=2, r=1.0, center=None):
    return make_sphere(m, r, center)


def _geo(kind="sphere", kappa=1.0, a=math.pi / 4, m=2):
    space = SpaceForm(kind, kappa, m + 1)
    return make_geodesic_sphere(space, a)


CATALOG = {
    "sphere": FixtureEntry("sphere", _sphere_entry,
                           "round sphere S^m(r) in R^{m+1} (params: m, r, center)"),
    "shrinker_sphere": FixtureEntry(
        "shrinker_sphere", lambda m=2: make_sphere(m, math.sqrt(2 * m)),
        "self-shrinking sphere of radius sqrt(2m) (params: m)"),
    "ellipsoid": FixtureEntry("ellipsoid", make_ellipsoid,
                              "ellipsoid with semi-axes a, b, c within ratio 2"),
    "geodesic_sphere": FixtureEntry(
        "geodesic_sphere", _geo,
        "geodesic sphere of radius a in S^{m+1}(kappa) or H^{m+1}(kappa) (params: kind, kappa, a, m)"),
    "convex_graph": FixtureEntry("convex_graph", make_convex_graph,
                                 "random convex radial graph (params: eps, l_max, seed)"),
    "torus": FixtureEntry("torus", make_torus, "torus of revolution (params: R, r)",
                          ("hypothesis-negative",)),
}


def build_fixture(name: str, **params) -> Immersion:
    try:
        entry = CATALOG[name]
    except KeyError:
        raise ConfigurationError(f"unknown fixture {name!r}; known: {sorted(CATALOG)}") from None
    try:
        return entry.build(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for fixture {name!r}: {exc}") from None
