"""Parametric hypersurfaces: fundamental forms, shape operator, Newton transform.

Everything is batched: a parameter array of shape ``(..., m)`` yields frame
fields with the same leading shape.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Optional

import numpy as np

from .ambient import Kind, RadialField, SpaceForm
from .errors import ConfigurationError, DegenerateImmersionError

#: g with a larger condition number than this is treated as degenerate
MAX_CONDITION = 1e8
#: relative finite-difference step (times the parameter extent)
FD_REL_STEP = 1e-4


@dataclass(frozen=True, eq=False)
class Immersion:
    """A chart ``u -> X(u)`` of a hypersurface into the model of ``space``.

    ``jets(u)`` returns ``(X, dX, ddX)`` with shapes ``(..., N)``,
    ``(..., m, N)`` and ``(..., m, m, N)``.  Without it (or with
    ``fd_step`` set) derivatives come from centred finite differences with
    on-model reprojection of every probe.

    ``orientation`` fixes the sign of the unit normal; ``0`` picks the sign
    making the area-weighted mean of S1 positive.
    """

    space: SpaceForm
    chart: Callable
    bounds: tuple
    periodic: tuple
    jets: Optional[Callable] = None
    fd_step: Optional[float] = None
    closed: bool = False
    orientation: int = 0
    name: str = "immersion"
    oracles: dict = field(default_factory=dict)
    tags: tuple = ()

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if len(self.periodic) != len(bounds):
            raise ConfigurationError("periodic flags must match the number of parameters")
        if self.m < 2:
            raise ConfigurationError("hypersurfaces need m >= 2")
        if self.m != self.space.m:
            raise ConfigurationError(
                f"chart has {self.m} parameters but the ambient expects m = {self.space.m}")
        if any(b <= a for a, b in bounds):
            raise ConfigurationError("empty parameter rectangle")
        if self.orientation == 0:
            object.__setattr__(self, "orientation", _resolve_orientation(self))
        elif self.orientation not in (1, -1):
            raise ConfigurationError("orientation must be +1, -1 or 0 (automatic)")

    @property
    def m(self) -> int:
        return len(self.bounds)

    @property
    def extents(self):
        return np.array([b - a for a, b in self.bounds])

    def point(self, u):
        return self.space.normalize(self.chart(np.asarray(u, dtype=float)))

    def jet(self, u):
        u = np.asarray(u, dtype=float)
        if self.jets is not None and self.fd_step is None:
            return self.jets(u)
        return self._fd_jet(u)

    def _fd_jet(self, u):
        m = self.m
        rel = FD_REL_STEP if self.fd_step is None else self.fd_step
        h = rel * self.extents
        X = self.point(u)
        dX = np.empty(u.shape[:-1] + (m, X.shape[-1]))
        ddX = np.empty(u.shape[:-1] + (m, m, X.shape[-1]))
        eye = np.eye(m)
        for i in range(m):
            up = self.point(u + h[i] * eye[i])
            dn = self.point(u - h[i] * eye[i])
            dX[..., i, :] = (up - dn) / (2 * h[i])
            ddX[..., i, i, :] = (up - 2 * X + dn) / h[i] ** 2
        for i, j in itertools.combinations(range(m), 2):
            pp = self.point(u + h[i] * eye[i] + h[j] * eye[j])
            pm = self.point(u + h[i] * eye[i] - h[j] * eye[j])
            mp = self.point(u - h[i] * eye[i] + h[j] * eye[j])
            mm = self.point(u - h[i] * eye[i] - h[j] * eye[j])
            ddX[..., i, j, :] = ddX[..., j, i, :] = (pp - pm - mp + mm) / (4 * h[i] * h[j])
        return X, dX, ddX

    def with_finite_differences(self, step=FD_REL_STEP):
        return replace(self, fd_step=step)

    def scaled(self, lam):
        """The homothetic image lam*M (Euclidean ambient only)."""
        if self.space.kind is not Kind.EUCLIDEAN:
            raise ConfigurationError("scaling is only an isometry class change in R^{m+1}")
        lam = float(lam)
        chart, jets = self.chart, self.jets

        def scaled_jets(u):
            X, dX, ddX = jets(u)
            return lam * X, lam * dX, lam * ddX

        return replace(self, chart=lambda u: lam * chart(u),
                       jets=None if jets is None else scaled_jets,
                       name=f"{self.name}*{lam:g}", oracles={})

    def coarse_nodes(self, n=8):
        axes = [a + (np.arange(n) + 0.5) * (b - a) / n for a, b in self.bounds]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.m)


@dataclass(frozen=True)
class CurvatureFrame:
    """Pointwise extrinsic geometry; arrays carry the batch shape of ``u``."""

    u: np.ndarray
    x: np.ndarray
    tangents: np.ndarray       # (..., m, N): dX/du_i
    g: np.ndarray
    ginv: np.ndarray
    b: np.ndarray
    A: np.ndarray              # g^{-1} b in chart coordinates
    k: np.ndarray              # principal curvatures, ascending
    frame: np.ndarray          # (..., m, m): column i is the g-unit eigenvector for k_i
    S1: np.ndarray
    S2: np.ndarray
    H: np.ndarray
    R: np.ndarray
    theta: np.ndarray          # eigenvalues S1 - k_i of P1
    eta: np.ndarray
    area_density: np.ndarray

    @property
    def m(self):
        return self.g.shape[-1]

    def take(self, index):
        return CurvatureFrame(**{f.name: getattr(self, f.name)[index] for f in fields(self)})

    @staticmethod
    def concatenate(parts):
        return CurvatureFrame(**{f.name: np.concatenate([getattr(p, f.name) for p in parts])
                                 for f in fields(CurvatureFrame)})


def _cofactor_normal(rows):
    # vector orthogonal (Euclidean dot) to the n-1 rows of an (n-1, n) stack
    n = rows.shape[-1]
    out = np.empty(rows.shape[:-2] + (n,))
    for k in range(n):
        minor = np.delete(rows, k, axis=-1)
        out[..., k] = (-1) ** k * np.linalg.det(minor)
    return out


def _elementary_symmetric_2(k):
    m = k.shape[-1]
    s = np.zeros(k.shape[:-1])
    for i, j in itertools.combinations(range(m), 2):
        s = s + k[..., i] * k[..., j]
    return s


def _frame_from_jet(space, orientation, u, X, dX, ddX, check=True):
    m = dX.shape[-2]
    g = np.einsum("...in,...jn->...ij", dX, space.lower(dX))
    lam, V = np.linalg.eigh(g)
    if check:
        bad = (lam[..., 0] <= 0) | (lam[..., -1] > MAX_CONDITION * np.maximum(lam[..., 0], 0))
        if np.any(bad):
            where = np.asarray(u)[bad][0]
            raise DegenerateImmersionError(f"first fundamental form degenerate near u = {where}")
    lam = np.maximum(lam, np.finfo(float).tiny)
    g_mhalf = np.einsum("...ik,...k,...jk->...ij", V, lam ** -0.5, V)
    ginv = np.einsum("...ik,...k,...jk->...ij", V, 1.0 / lam, V)

    rows = dX if space.kind is Kind.EUCLIDEAN else np.concatenate([X[..., None, :], dX], axis=-2)
    n = space.lower(_cofactor_normal(rows))
    eta = orientation * n / space.norm(n)[..., None]

    b = space.inner(eta[..., None, None, :], ddX)
    b = 0.5 * (b + np.swapaxes(b, -1, -2))
    sym = np.einsum("...ij,...jk,...kl->...il", g_mhalf, b, g_mhalf)
    sym = 0.5 * (sym + np.swapaxes(sym, -1, -2))
    k, W = np.linalg.eigh(sym)
    frame = np.einsum("...ij,...jk->...ik", g_mhalf, W)
    A = np.einsum("...ij,...jk->...ik", ginv, b)
    S1 = k.sum(axis=-1)
    S2 = _elementary_symmetric_2(k)
    R = space.kappa + 2.0 * S2 / (m * (m - 1))
    return CurvatureFrame(
        u=np.asarray(u, dtype=float), x=X, tangents=dX, g=g, ginv=ginv, b=b, A=A, k=k,
        frame=frame, S1=S1, S2=S2, H=S1 / m, R=R, theta=S1[..., None] - k, eta=eta,
        area_density=np.sqrt(np.prod(lam, axis=-1)))


def _resolve_orientation(M):
    u = M.coarse_nodes(8 if M.m == 2 else 5)
    X, dX, ddX = M.jet(u)
    fr = _frame_from_jet(M.space, 1, u, X, dX, ddX, check=False)
    mean = float(np.sum(fr.S1 * fr.area_density))
    return 1 if mean >= 0 else -1


def curvature_frame(M: Immersion, u) -> CurvatureFrame:
    """Curvature data at parameter point(s) ``u``.

    Eigenvalues come from the symmetric matrix g^{-1/2} b g^{-1/2}, so the
    principal curvatures are real by construction.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != M.m:
        raise ConfigurationError(f"expected {M.m} parameters, got {u.shape[-1]}")
    X, dX, ddX = M.jet(u)
    return _frame_from_jet(M.space, M.orientation, u, X, dX, ddX)


def newton_matrix(frame: CurvatureFrame):
    """P1 = S1 I - A in chart coordinates."""
    eye = np.eye(frame.m)
    return frame.S1[..., None, None] * eye - frame.A


def newton_apply(frame: CurvatureFrame, v):
    """Apply P1 to tangent vectors given in chart coordinates."""
    v = np.asarray(v, dtype=float)
    return frame.S1[..., None] * v - np.einsum("...ij,...j->...i", frame.A, v)


def g_inner(frame: CurvatureFrame, v, w):
    return np.einsum("...i,...ij,...j->...", v, frame.g, w)


def tangential_coords(frame: CurvatureFrame, space: SpaceForm, V):
    """Chart coordinates of the tangential part of an ambient vector V."""
    dv = space.inner(frame.tangents, np.asarray(V)[..., None, :])
    return np.einsum("...ij,...j->...i", frame.ginv, dv)


def normal_component(frame: CurvatureFrame, space: SpaceForm, V):
    return space.inner(V, frame.eta)


def field_derivative_matrix(frame: CurvatureFrame, space: SpaceForm, field_: RadialField):
    """Q_ij = <D_{T_i} X, T_j> for the chart tangents T_i."""
    n, a, bb = field_.derivative_coefficients(frame.x)
    dn = space.inner(frame.tangents, n[..., None, :])
    outer = dn[..., :, None] * dn[..., None, :]
    return a[..., None, None] * outer + bb[..., None, None] * (frame.g - outer)


def p1_trace_term(M: Immersion, u, field_: RadialField, frame: CurvatureFrame = None):
    """tr_M(E -> P1((D_E X)^T)) at ``u`` for a radial field X."""
    if frame is None:
        frame = curvature_frame(M, u)
    Q = field_derivative_matrix(frame, M.space, field_)
    D = np.einsum("...ij,...jk->...ik", frame.ginv, Q)
    return np.einsum("...ij,...ji->...", newton_matrix(frame), D)


def shrinker_residual(frame: CurvatureFrame, space: SpaceForm):
    """H + <X, eta>/(2m) with X the position vector; zero on self-shrinkers."""
    if space.kind is not Kind.EUCLIDEAN:
        raise ConfigurationError("self-shrinkers live in Euclidean space")
    return frame.H + space.inner(frame.x, frame.eta) / (2.0 * frame.m)


def unit_sphere_volume(m: int) -> float:
    """Volume of the unit m-sphere S^m in R^{m+1}."""
    return 2.0 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2)
