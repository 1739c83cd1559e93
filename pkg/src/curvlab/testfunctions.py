"""Non-negative test functions f on a hypersurface, with chart gradients.

A test function is a sum of pieces with disjoint supports.  Each piece lives on
a sublevel set ``{level(u) <= 0}`` of the chart (or the whole chart when
``level`` is None) and is smooth there, so integrals of non-linear expressions
in (f, df) can be taken piece by piece with sharp masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .ambient import geodesic_distance, _raw_direction
from .errors import ConfigurationError
from .hypersurface import CurvatureFrame, Immersion
from .measure import FullChart, Sublevel

FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class Piece:
    level: Optional[Callable]   # u -> psi, piece supported on psi <= 0
    value: Callable             # frame -> (f, df) with df the chart differential
    name: str = "piece"


@dataclass(frozen=True, eq=False)
class TestFunctionSpec:
    kind: str
    pieces: tuple
    params: dict = field(default_factory=dict)

    @property
    def smooth(self):
        return all(p.level is None for p in self.pieces)

    def evaluate(self, frame: CurvatureFrame):
        """Pointwise (f, df) at the frame's parameter points."""
        f = np.zeros(frame.S1.shape)
        df = np.zeros(frame.u.shape)
        for p in self.pieces:
            v, d = p.value(frame)
            if p.level is None:
                f, df = f + v, df + d
            else:
                on = p.level(frame.u) <= 0
                f = f + np.where(on, v, 0.0)
                df = df + np.where(on[..., None], d, 0.0)
        return f, df


def smootherstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10 - 15 * s + 6 * s * s), 30 * s * s * (1 - s) ** 2


def _zero_grad(frame):
    return np.zeros(frame.u.shape)


def constant(c=1.0, domain=None) -> TestFunctionSpec:
    """f = c on the domain (whole chart by default)."""
    c = float(c)
    if c < 0:
        raise ConfigurationError("test functions must be non-negative")
    level = None
    if domain is not None and not isinstance(domain, FullChart):
        if not isinstance(domain, Sublevel):
            raise ConfigurationError("constant test functions support full-chart or sublevel domains")
        level = domain.phi
    piece = Piece(level, lambda fr: (np.full(fr.S1.shape, c), _zero_grad(fr)), "constant")
    return TestFunctionSpec("Constant", (piece,), {"c": c})


def _distance_proxy(M: Immersion, domain: Sublevel):
    """d(u) = -phi / |grad phi|_g: first-order distance to {phi = 0} inside the domain."""

    def d(u):
        u = np.asarray(u, dtype=float)
        _, dX, _ = M.jet(u)
        g = np.einsum("...in,...jn->...ij", dX, M.space.lower(dX))
        dphi = np.asarray(domain.gradient(u), dtype=float)
        # pinv keeps chart poles (where g drops rank) finite
        norm = np.sqrt(np.einsum("...i,...ij,...j->...", dphi, np.linalg.pinv(g), dphi))
        return -domain.phi(u) / norm

    def grad(u):
        u = np.asarray(u, dtype=float)
        h = FD_STEP * M.extents
        out = np.empty(u.shape)
        for i in range(M.m):
            e = np.zeros(M.m)
            e[i] = h[i]
            out[..., i] = (d(u + e) - d(u - e)) / (2 * h[i])
        return out

    return d, grad


def tent(M: Immersion, domain: Sublevel, eps: float) -> TestFunctionSpec:
    """min(1, d/eps) inside the domain, 0 outside, d the distance proxy to the boundary."""
    if not isinstance(domain, Sublevel):
        raise ConfigurationError("tent functions need a sublevel domain")
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    d, grad = _distance_proxy(M, domain)
    core = Piece(lambda u: eps - d(u),
                 lambda fr: (np.ones(fr.S1.shape), _zero_grad(fr)), "core")
    strip = Piece(lambda u: np.abs(d(u) - eps / 2) - eps / 2,
                  lambda fr: (d(fr.u) / eps, grad(fr.u) / eps), "strip")
    return TestFunctionSpec("TentEps", (core, strip), {"eps": eps, "domain": domain.name})


def smooth_bump(M: Immersion, domain: Sublevel, margin: float) -> TestFunctionSpec:
    """C^2 bump rising from 0 on the boundary to 1 at proxy distance ``margin``."""
    if margin <= 0:
        raise ConfigurationError("margin must be positive")
    d, grad = _distance_proxy(M, domain)

    def value(fr):
        dist = d(fr.u)
        S, dS = smootherstep(dist / margin)
        inside = dist > 0
        return np.where(inside, S, 0.0), np.where(inside[..., None], (dS / margin)[..., None] * grad(fr.u), 0.0)

    return TestFunctionSpec("SmoothBump", (Piece(domain.phi, value, "bump"),),
                            {"margin": margin, "domain": domain.name})


def radial_bump(M: Immersion, x0, r_in: float, r_out: float) -> TestFunctionSpec:
    """1 within ambient distance r_in of x0, 0 beyond r_out, smootherstep between."""
    if not 0 <= r_in < r_out:
        raise ConfigurationError("radial bump needs 0 <= r_in < r_out")
    space = M.space
    x0 = space.check_point(np.asarray(x0, dtype=float))
    width = r_out - r_in

    def value(fr):
        rho = geodesic_distance(space, x0, fr.x)
        S, dS = smootherstep((r_out - rho) / width)
        ramp = (rho > r_in) & (rho < r_out)
        v = _raw_direction(space, x0, fr.x)
        nv = space.norm(v)
        n = np.where(ramp[..., None], v / np.where(nv > 0, nv, 1.0)[..., None], 0.0)
        drho = space.inner(fr.tangents, n[..., None, :])
        return S, (-dS / width)[..., None] * drho

    return TestFunctionSpec("RadialBump", (Piece(None, value, "bump"),),
                            {"x0": [float(c) for c in x0], "r_in": r_in, "r_out": r_out})
