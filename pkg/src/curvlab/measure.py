"""Quadrature over chart domains, extrinsic balls and level-set boundaries.

Non-periodic chart axes are split into panels carrying ``order`` Gauss-Legendre
nodes; periodic axes use the trapezoid rule (one node per cell).  A cell is a
tensor product of one panel/cell per axis.

Masked integrals (sublevel domains, extrinsic balls) use the sharp indicator.
Cells entirely inside the region contribute their full Gauss sum; cut cells
are split into ``subcells**m`` sub-boxes whose covered fraction is computed
exactly for the linear interpolant of the level function, and the Gauss sum is
scaled by the covered share of the midpoint sum.

All sums go through :func:`tree_sum`, a fixed pairwise reduction, and node
evaluation uses fixed-size chunks, so results do not depend on the number of
worker threads.
"""

from __future__ import annotations

import csv
import functools
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .ambient import Kind, SpaceForm, geodesic_distance
from .errors import (ConfigurationError, EvaluationError, PreconditionError,
                     TracingError)
from .hypersurface import Immersion, curvature_frame

CHUNK = 4096
#: cell level ranges are padded by this fraction of their width
CELL_PAD = 0.5


# -- deterministic reduction ------------------------------------------------

def tree_sum(values, axis=0):
    """Pairwise sum along ``axis`` with a shape-determined combine order."""
    a = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    n = a.shape[0]
    if n == 0:
        return np.zeros(a.shape[1:])
    size = 1 << (n - 1).bit_length()
    if size != n:
        a = np.concatenate([a, np.zeros((size - n,) + a.shape[1:])])
    while a.shape[0] > 1:
        a = a[0::2] + a[1::2]
    return a[0]


# -- grids and domains --------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Nodes per chart axis, Gauss order per panel, cut-cell refinement, workers."""

    shape: tuple
    order: int = 4
    subcells: Optional[int] = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if self.order < 1 or any(n < 1 for n in self.shape):
            raise ConfigurationError("grid sizes and order must be positive")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")

    def q(self, m):
        if self.subcells is not None:
            return int(self.subcells)
        return 32 if m == 2 else 10

    def coarser(self):
        """Half resolution on every axis (keeping panel divisibility)."""
        shape = []
        for n in self.shape:
            h = max(self.order, ((n // 2) // self.order) * self.order)
            shape.append(h)
        return replace(self, shape=tuple(shape))

    def finer(self):
        return replace(self, shape=tuple(2 * n for n in self.shape))

    def label(self):
        return "x".join(str(n) for n in self.shape)


@dataclass(frozen=True)
class FullChart:
    pass


@dataclass(frozen=True)
class SubRectangle:
    bounds: tuple


@dataclass(frozen=True, eq=False)
class Sublevel:
    """Region {phi <= 0} of the parameter rectangle; ``grad`` returns d phi/du."""

    phi: Callable
    grad: Optional[Callable] = None
    name: str = "sublevel"

    def gradient(self, u, h=1e-6):
        if self.grad is not None:
            return self.grad(u)
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape)
        for i in range(u.shape[-1]):
            e = np.zeros(u.shape[-1])
            e[i] = h
            out[..., i] = (self.phi(u + e) - self.phi(u - e)) / (2 * h)
        return out


DomainSpec = (FullChart, SubRectangle, Sublevel)


# -- tensor rules -------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _gauss(p):
    x, w = np.polynomial.legendre.leggauss(p)
    return (x + 1) / 2, w / 2


@dataclass(frozen=True, eq=False)
class _Axis:
    edges: np.ndarray      # (ncell+1,)
    nodes: np.ndarray      # (ncell, p)
    weights: np.ndarray    # (ncell, p)
    rel: np.ndarray        # (p,) node positions within a panel, in [0, 1]


def _axis(a, b, n, periodic, order):
    if n % order:
        raise ConfigurationError(f"axis size {n} is not a multiple of the panel order {order}")
    k = n // order
    edges = np.linspace(a, b, k + 1)
    width = np.diff(edges)[:, None]
    if periodic:
        # trapezoid rule on a periodic grid, grouped into panels of `order` nodes
        x = (np.arange(order) + 0.5) / order
        w = np.full(order, 1.0 / order)
    else:
        x, w = _gauss(order)
    return _Axis(edges, edges[:-1, None] + width * x, width * w, x)


@functools.lru_cache(maxsize=None)
def _lagrange(x_rel, q):
    """Values at the q sub-cell centres of the Lagrange basis on nodes x_rel."""
    x = np.array(x_rel)
    c = (np.arange(q) + 0.5) / q
    L = np.ones((q, len(x)))
    for i in range(len(x)):
        for j in range(len(x)):
            if j != i:
                L[:, i] *= (c - x[j]) / (x[i] - x[j])
    return L


@dataclass(eq=False)
class TensorRule:
    """Cells and nodes of a tensor product rule over a parameter rectangle."""

    bounds: tuple
    periodic: tuple
    shape: tuple
    order: int

    def __post_init__(self):
        self.axes = [_axis(a, b, n, per, self.order)
                     for (a, b), n, per in zip(self.bounds, self.shape, self.periodic)]
        self.m = len(self.axes)
        self.cell_shape = tuple(len(ax.edges) - 1 for ax in self.axes)
        cell_idx = np.stack(np.meshgrid(*[np.arange(c) for c in self.cell_shape],
                                        indexing="ij"), axis=-1).reshape(-1, self.m)
        self.cell_index = cell_idx
        node_parts, weight_parts = [], []
        for i, ax in enumerate(self.axes):
            node_parts.append(ax.nodes[cell_idx[:, i]])
            weight_parts.append(ax.weights[cell_idx[:, i]])
        # combine per-axis node lists into per-cell node products
        ncell = len(cell_idx)
        grids = np.meshgrid(*[np.arange(p.shape[1]) for p in node_parts], indexing="ij")
        combos = np.stack([g.ravel() for g in grids], axis=-1)
        self.nodes = np.stack([node_parts[i][:, combos[:, i]] for i in range(self.m)], axis=-1)
        w = np.ones((ncell, len(combos)))
        for i in range(self.m):
            w = w * weight_parts[i][:, combos[:, i]]
        self.weights = w
        lo = np.stack([self.axes[i].edges[cell_idx[:, i]] for i in range(self.m)], axis=-1)
        hi = np.stack([self.axes[i].edges[cell_idx[:, i] + 1] for i in range(self.m)], axis=-1)
        self.cell_lo, self.cell_hi = lo, hi

    @property
    def ncell(self):
        return len(self.cell_index)

    def corner_points(self):
        """Parameter points at all cell corners, shape (*cell_shape+1, m)."""
        return np.stack(np.meshgrid(*[ax.edges for ax in self.axes], indexing="ij"), axis=-1)

    def cell_corners(self, corner_values):
        """Gather corner values (grid of shape cell_shape+1) to (ncell, 2**m)."""
        out = []
        for offs in itertools.product((0, 1), repeat=self.m):
            idx = tuple(self.cell_index[:, i] + offs[i] for i in range(self.m))
            out.append(corner_values[idx])
        return np.stack(out, axis=1)


@functools.lru_cache(maxsize=64)
def _subcell_template(m, q):
    t = (np.arange(q) + 0.5) / q
    centres = np.stack(np.meshgrid(*([t] * m), indexing="ij"), axis=-1).reshape(-1, m)
    c = np.arange(q + 1) / q
    corners = np.stack(np.meshgrid(*([c] * m), indexing="ij"), axis=-1).reshape(-1, m)
    # for each sub-box, the flat indices of its 2**m corners
    sub = np.stack(np.meshgrid(*([np.arange(q)] * m), indexing="ij"), axis=-1).reshape(-1, m)
    strides = (q + 1) ** np.arange(m - 1, -1, -1)
    corner_ids = []
    for offs in itertools.product((0, 1), repeat=m):
        corner_ids.append(((sub + np.array(offs)) * strides).sum(axis=1))
    return centres, corners, np.stack(corner_ids, axis=1)


def box_fraction(corner_values):
    """Share of a unit box where the linear fit of its corner values is <= 0.

    ``corner_values`` has shape (..., 2**m) in binary corner order.  The fit
    uses the box-averaged slope along each axis; the covered volume comes from
    the inclusion-exclusion formula for a simplex cut by a hypercube.
    """
    v = np.asarray(corner_values, dtype=float)
    n = int(round(math.log2(v.shape[-1])))
    bits = np.array(list(itertools.product((0, 1), repeat=n)), dtype=float)
    mean = v.mean(axis=-1)
    # slope s_i: mean difference across axis i
    s = np.stack([(v[..., bits[:, i] == 1].mean(axis=-1) - v[..., bits[:, i] == 0].mean(axis=-1))
                  for i in range(n)], axis=-1)
    a = np.abs(s)
    # region sum_i a_i y_i <= t with y in [0,1]^n after flipping negative slopes
    t = -(mean - 0.5 * a.sum(axis=-1))
    amax = a.max(axis=-1, keepdims=True)
    tiny = a <= 1e-4 * np.maximum(amax, 1e-300)
    # a dropped axis contributes its mean value to the offset
    t = t - 0.5 * np.where(tiny, a, 0.0).sum(axis=-1)
    a_eff = np.where(tiny, 0.0, a)
    k = (~tiny).sum(axis=-1)
    total = a_eff.sum(axis=-1)
    out = np.where(t >= total, 1.0, 0.0)
    middle = (t > 0) & (t < total)
    if np.any(middle):
        tm, am, km = t[middle], a_eff[middle], k[middle]
        res = np.zeros(tm.shape)
        for kk in np.unique(km):
            sel = km == kk
            if kk == 0:
                res[sel] = 1.0
                continue
            aa, tt = am[sel], tm[sel]
            acc = np.zeros(tt.shape)
            for subset in itertools.product((0, 1), repeat=n):
                sub = np.array(subset, dtype=float)
                shift = (aa * sub).sum(axis=-1)
                # subsets touching dropped axes are skipped (they are zero)
                valid = ~np.any((aa == 0) & (sub == 1), axis=-1)
                term = np.where(valid, np.maximum(tt - shift, 0.0) ** kk, 0.0)
                acc = acc + (-1) ** int(sub.sum()) * term
            prod = np.prod(np.where(aa == 0, 1.0, aa), axis=-1)
            res[sel] = acc / (math.factorial(int(kk)) * prod)
        out[middle] = np.clip(res, 0.0, 1.0)
    return out


# -- evaluation ---------------------------------------------------------------

def evaluate_nodes(M: Immersion, u, F: Callable, workers=1):
    """Evaluate ``F(frame) * area_density`` at flattened nodes ``u`` (n, m).

    F may return shape (n,) or (n, K); the result is always (n, K).
    """
    u = np.asarray(u, dtype=float).reshape(-1, M.m)
    starts = list(range(0, len(u), CHUNK))

    def work(s):
        fr = curvature_frame(M, u[s:s + CHUNK])
        val = np.asarray(F(fr), dtype=float)
        if val.ndim == 1:
            val = val[:, None]
        return val * fr.area_density[:, None]

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    if not parts:
        return np.zeros((0, 1))
    out = np.concatenate(parts)
    bad = ~np.isfinite(out)
    if np.any(bad):
        where = u[np.argwhere(bad)[0][0]]
        raise EvaluationError(f"integrand is not finite at u = {where}")
    return out


class Integrator:
    """Quadrature engine for one immersion at one grid resolution."""

    def __init__(self, M: Immersion, grid: GridSpec, bounds=None, periodic=None):
        if len(grid.shape) != M.m:
            raise ConfigurationError(f"grid has {len(grid.shape)} axes, chart has {M.m}")
        self.M = M
        self.grid = grid
        self.bounds = M.bounds if bounds is None else tuple(bounds)
        self.periodic = M.periodic if periodic is None else tuple(periodic)
        self.rule = TensorRule(self.bounds, self.periodic, grid.shape, grid.order)
        self.q = grid.q(M.m)
        self._sub_cache = {}
        self._level_cache = {}

    # node-level helpers
    def node_points(self):
        return self.rule.nodes.reshape(-1, self.M.m)

    def density(self, F):
        """F * area density at the nodes, shape (ncell, nodes per cell, K)."""
        r = self.rule
        vals = evaluate_nodes(self.M, r.nodes.reshape(-1, self.M.m), F, self.grid.workers)
        return vals.reshape(r.ncell, r.nodes.shape[1], -1)

    def cell_sums(self, D):
        # few nodes per cell: fixed-order accumulation
        return tree_sum(D * self.rule.weights[..., None], axis=1)

    def total(self, F):
        return tree_sum(self.cell_sums(self.density(F)))

    # level functions
    def level_data(self, key, level_fn):
        """Level values at nodes and cell corners with padded per-cell range."""
        if key in self._level_cache:
            return self._level_cache[key]
        r = self.rule
        Ln = level_fn(r.nodes)
        Lc = r.cell_corners(level_fn(r.corner_points()))
        allv = np.concatenate([Ln, Lc], axis=1)
        lo, hi = allv.min(axis=1), allv.max(axis=1)
        pad = CELL_PAD * (hi - lo)
        data = (lo - pad, hi + pad)
        self._level_cache[key] = data
        return data

    def _fine_levels(self, key, level_fn, cells):
        """Level values at the sub-box corners of each cell, (ncut, q**m, 2**m)."""
        cache = self._sub_cache.setdefault(key, {})
        missing = [c for c in cells if c not in cache]
        if missing:
            _, corners, corner_ids = _subcell_template(self.M.m, self.q)
            lo = self.rule.cell_lo[missing]
            width = self.rule.cell_hi[missing] - lo
            Lk = level_fn(lo[:, None, :] + width[:, None, :] * corners[None])
            for j, c in enumerate(missing):
                cache[c] = Lk[j][corner_ids]
        return np.stack([cache[c] for c in cells])

    def _interpolate(self, Dcut):
        """Panel interpolant of node densities at sub-box centres, (ncut, q**m, K)."""
        m, q = self.M.m, self.q
        p = [len(ax.rel) for ax in self.rule.axes]
        n, K = Dcut.shape[0], Dcut.shape[-1]
        T = Dcut.reshape((n,) + tuple(p) + (K,))
        for i, ax in enumerate(self.rule.axes):
            L = _lagrange(tuple(ax.rel), q)
            T = np.moveaxis(np.tensordot(T, L, axes=([1 + i], [1])), -1, 1 + i)
        return T.reshape(n, q ** m, K)

    def masked(self, key, level_fn, F, thresholds, D=None):
        """Integrals of F over {level <= r} for each r; returns (len(r), K)."""
        thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
        D = self.density(F) if D is None else D
        P = self.cell_sums(D)
        lo, hi = self.level_data(key, level_fn)
        vol = np.prod(self.rule.cell_hi - self.rule.cell_lo, axis=1)
        interp = {}
        out = []
        for r in thresholds:
            inside = hi <= r
            cut = np.nonzero((lo <= r) & ~inside)[0]
            cellv = np.where(inside[:, None], P, 0.0)
            if len(cut):
                Ls = self._fine_levels(key, level_fn, [int(c) for c in cut]) - r
                frac = (Ls.max(axis=-1) <= 0).astype(float)        # (ncut, q**m)
                straddle = (Ls.min(axis=-1) <= 0) & ~(frac > 0)
                frac[straddle] = box_fraction(Ls[straddle])
                missing = [int(c) for c in cut if int(c) not in interp]
                if missing:
                    Dm = self._interpolate(D[missing]) * (vol[missing] / self.q ** self.M.m)[:, None, None]
                    Pm = P[missing]
                    full_m = Dm.sum(axis=1)
                    sign_m = ((np.all(Dm >= 0, axis=1) & np.all(Pm >= 0, axis=-1, keepdims=True))
                              | (np.all(Dm <= 0, axis=1) & np.all(Pm <= 0, axis=-1, keepdims=True)))
                    sign_m &= full_m != 0
                    interp.update((c, (Dm[j], full_m[j], sign_m[j])) for j, c in enumerate(missing))
                Dq = np.stack([interp[int(c)][0] for c in cut])
                full = np.stack([interp[int(c)][1] for c in cut])
                onesign = np.stack([interp[int(c)][2] for c in cut])
                part = np.einsum("cs,csk->ck", frac, Dq)
                area_frac = frac.mean(axis=1)[:, None]
                Pc = P[cut]
                ratio = Pc * part / np.where(full == 0, 1.0, full)
                additive = part + (Pc - full) * area_frac
                cellv[cut] = np.where(onesign, ratio, additive)
            out.append(tree_sum(cellv))
        return np.array(out)


def _sub_bounds(M, bounds):
    bounds = tuple((float(a), float(b)) for a, b in bounds)
    periodic = []
    for (a, b), (A, B), per in zip(bounds, M.bounds, M.periodic):
        if a < A - 1e-12 or b > B + 1e-12 or b <= a:
            if not per:
                raise ConfigurationError("sub-rectangle leaves the chart")
        periodic.append(per and abs((b - a) - (B - A)) < 1e-12)
    return bounds, tuple(periodic)


def _integrate_at(M, domain, phi, grid):
    if isinstance(domain, FullChart):
        return Integrator(M, grid).total(phi)
    if isinstance(domain, SubRectangle):
        b, per = _sub_bounds(M, domain.bounds)
        return Integrator(M, grid, b, per).total(phi)
    if isinstance(domain, Sublevel):
        I = Integrator(M, grid)
        return I.masked(("sublevel", id(domain)), lambda u: domain.phi(u), phi, [0.0])[0]
    raise ConfigurationError(f"unknown domain {domain!r}")


def integrate(M: Immersion, domain, phi: Callable, grid: GridSpec, estimate=False):
    """Integral of ``phi(frame)`` dM over a domain (full chart, rectangle, sublevel).

    ``phi`` returns one value per point, or a trailing axis of K values; the
    result is a float or a length-K array.  With ``estimate=True`` returns
    ``(value, |value - value at half resolution|)``.
    """
    val = _integrate_at(M, domain, phi, grid)
    val = val[0] if val.shape == (1,) else val
    if not estimate:
        return val
    coarse = _integrate_at(M, domain, phi, grid.coarser())
    coarse = coarse[0] if coarse.shape == (1,) else coarse
    return val, np.abs(val - coarse)


# -- extrinsic balls ----------------------------------------------------------

def distance_level(M: Immersion, x0):
    space = M.space
    x0 = space.check_point(np.asarray(x0, dtype=float))

    def level(u):
        return geodesic_distance(space, x0, M.point(u))

    return level


def _check_ball(M, x0, radii):
    inj = M.space.injectivity_radius()
    radii = np.asarray(radii, dtype=float)
    if np.any(radii <= 0):
        raise PreconditionError("ball radii must be positive")
    if np.any(radii >= inj):
        raise PreconditionError(f"ball radius reaches the injectivity radius {inj:g}")
    if not M.closed:
        # chart boundary faces that are not collapsed poles belong to the boundary of M
        dmin = _boundary_distance(M, x0)
        if np.any(radii >= dmin):
            raise PreconditionError(
                f"ball of radius {radii.max():g} meets the boundary of M (distance {dmin:g})")


def _boundary_distance(M, x0, n=64):
    level = distance_level(M, x0)
    best = math.inf
    for i, ((a, b), per) in enumerate(zip(M.bounds, M.periodic)):
        if per:
            continue
        axes = [np.linspace(lo, hi, n) for (lo, hi) in M.bounds]
        for val in (a, b):
            axes_i = list(axes)
            axes_i[i] = np.array([val])
            pts = np.stack(np.meshgrid(*axes_i, indexing="ij"), axis=-1).reshape(-1, M.m)
            X = M.point(pts)
            if np.ptp(X, axis=0).max() < 1e-9 * max(1.0, np.abs(X).max()):
                continue  # collapsed face (pole of the chart)
            best = min(best, float(level(pts).min()))
    return best


@dataclass
class RadialProfile:
    center: np.ndarray
    radii: np.ndarray
    values: np.ndarray           # (N,) or (N, K)
    refinement_estimate: np.ndarray
    label: str = "integrand"

    def to_csv(self, path=None, column=0):
        """Write ``r,value,refinement_estimate`` rows; returns the text when ``path`` is None."""
        vals = self.values if self.values.ndim == 1 else self.values[:, column]
        est = self.refinement_estimate
        est = est if est.ndim == 1 else est[:, column]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "value", "refinement_estimate"])
        for row in zip(self.radii, vals, est):
            w.writerow([repr(float(x)) for x in row])
        if path is None:
            return buf.getvalue()
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())


def _ball_values(M, x0, radii, phi, grid):
    I = Integrator(M, grid)
    key = ("ball", np.asarray(x0, dtype=float).tobytes())
    return I.masked(key, distance_level(M, x0), phi, radii)


def radial_profile(M: Immersion, x0, phi: Callable, radii, grid: GridSpec,
                   estimate=True, label="integrand") -> RadialProfile:
    """r_j -> integral of phi over M within ambient distance r_j of x0."""
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or np.any(np.diff(radii) <= 0):
        raise ConfigurationError("radii must be strictly increasing")
    _check_ball(M, x0, radii)
    vals = _ball_values(M, x0, radii, phi, grid)
    if estimate:
        coarse = _ball_values(M, x0, radii, phi, grid.coarser())
        est = np.abs(vals - coarse)
    else:
        est = np.zeros_like(vals)
    if vals.shape[1] == 1:
        vals, est = vals[:, 0], est[:, 0]
    return RadialProfile(np.asarray(x0, dtype=float), radii, vals, est, label)


def integrate_ball(M: Immersion, x0, r, phi: Callable, grid: GridSpec, estimate=False):
    """Integral of phi over M within ambient distance r of x0 (sharp indicator)."""
    prof = radial_profile(M, x0, phi, [r], grid, estimate=estimate)
    v, e = prof.values[0], prof.refinement_estimate[0]
    return (v, e) if estimate else v


# -- boundary integrals (m = 2) ----------------------------------------------

def _segment_integral(M, u0, u1, phi):
    # midpoint rule on parameter segments, metric length at the midpoint
    mid = 0.5 * (u0 + u1)
    fr = curvature_frame(M, mid)
    du = u1 - u0
    ds = np.sqrt(np.einsum("ni,nij,nj->n", du, fr.g, du))
    val = np.asarray(phi(fr), dtype=float)
    if val.ndim == 1:
        val = val[:, None]
    return tree_sum(val * ds[:, None])


def trace_level_set(domain: Sublevel, bounds, periodic, n=(256, 512), newton=3):
    """Polylines of {phi = 0} in parameter space, vertices refined by Newton steps."""
    from skimage import measure as skm

    axes = [np.linspace(a, b, k + 1) for (a, b), k in zip(bounds, n)]
    U = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = domain.phi(U)
    if not np.all(np.isfinite(vals)):
        raise TracingError("level function is not finite on the tracing grid")
    lines = []
    for c in skm.find_contours(vals, 0.0):
        u = np.stack([np.interp(c[:, i], np.arange(len(axes[i])), axes[i]) for i in range(2)],
                     axis=-1)
        for _ in range(newton):
            g = domain.gradient(u)
            gg = (g * g).sum(axis=-1)
            if np.any(gg < 1e-16):
                raise TracingError("level set is not regular (vanishing gradient)")
            u = u - (domain.phi(u) / gg)[:, None] * g
        lines.append(u)
    return lines


def boundary_integral(M: Immersion, domain, phi: Callable, grid: GridSpec):
    """Line integral of phi(frame) along the boundary of a domain of a surface."""
    if M.m != 2:
        raise ConfigurationError("boundary integrals are only available for surfaces (m = 2)")
    if isinstance(domain, FullChart):
        return 0.0
    if isinstance(domain, SubRectangle):
        b, per = _sub_bounds(M, domain.bounds)
        total = []
        for i in range(2):
            if per[i]:
                continue
            j = 1 - i
            ax = _axis(b[j][0], b[j][1], grid.shape[j], per[j], grid.order)
            t, w = ax.nodes.ravel(), ax.weights.ravel()
            for val in b[i]:
                u = np.empty((len(t), 2))
                u[:, i] = val
                u[:, j] = t
                X = M.point(u)
                if np.ptp(X, axis=0).max() < 1e-9 * max(1.0, np.abs(X).max()):
                    continue  # edge collapsed to a chart pole
                fr = curvature_frame(M, u)
                speed = np.sqrt(fr.g[:, j, j])
                v = np.asarray(phi(fr), dtype=float)
                v = v[:, None] if v.ndim == 1 else v
                total.append(tree_sum(v * (w * speed)[:, None]))
        res = tree_sum(np.array(total)) if total else np.zeros(1)
        return res[0] if res.shape == (1,) else res
    if isinstance(domain, Sublevel):
        lines = trace_level_set(domain, M.bounds, M.periodic, n=tuple(2 * k for k in grid.shape))
        parts = [_segment_integral(M, L[:-1], L[1:], phi) for L in lines if len(L) > 1]
        if not parts:
            return 0.0
        res = tree_sum(np.array(parts))
        return res[0] if res.shape == (1,) else res
    raise ConfigurationError(f"unknown domain {domain!r}")


def domain_samples(M: Immersion, domain, grid: GridSpec):
    """Ambient points sampling the closure of a domain (nodes plus boundary)."""
    extra = []
    if isinstance(domain, SubRectangle):
        b, per = _sub_bounds(M, domain.bounds)
        u = Integrator(M, grid, b, per).node_points()
        box = np.stack(np.meshgrid(*[np.linspace(lo, hi, 65) for lo, hi in b],
                                   indexing="ij"), axis=-1).reshape(-1, M.m)
        lo_b = np.array([x[0] for x in b])
        hi_b = np.array([x[1] for x in b])
        extra.append(box[np.any(np.isclose(box, lo_b) | np.isclose(box, hi_b), axis=1)])
    else:
        u = Integrator(M, grid).node_points()
        if isinstance(domain, Sublevel):
            u = u[domain.phi(u) <= 0]
            if M.m == 2:
                extra.extend(trace_level_set(domain, M.bounds, M.periodic,
                                             n=tuple(2 * k for k in grid.shape)))
        elif not M.closed:
            box = np.stack(np.meshgrid(*[np.linspace(a, b_, 65) for a, b_ in M.bounds],
                                       indexing="ij"), axis=-1).reshape(-1, M.m)
            extra.append(box)
    pts = np.concatenate([u] + [e.reshape(-1, M.m) for e in extra]) if extra else u
    return M.point(pts)


# -- smallest enclosing ball --------------------------------------------------

@dataclass
class EnclosingBall:
    center: np.ndarray
    radius: float
    method: str
    pairwise_diameter: float = float("nan")

    @property
    def diameter(self):
        return 2.0 * self.radius


def _support_ball(space, S):
    """Smallest ball with all points of S on its boundary."""
    S = np.asarray(S, dtype=float)
    x0 = S[0]
    if len(S) == 1:
        return x0.copy(), 0.0
    D = S[1:] - x0
    if space.kind is Kind.EUCLIDEAN:
        G = 2.0 * D @ D.T
        rhs = (D * D).sum(axis=1)
        lam = np.linalg.lstsq(G, rhs, rcond=None)[0]
        c = x0 + lam @ D
        return c, float(np.sqrt(((S - c) ** 2).sum(axis=1)).max())
    # equidistance <=> <c, x_i - x_0> = 0; take c in the span of S
    Dl = np.array([space.lower(d) for d in D])
    G = Dl @ D.T
    coef = np.linalg.lstsq(G, Dl @ x0, rcond=None)[0]
    c = x0 - coef @ D
    q = space.kappa * space.inner(c, c)
    if q <= 0:
        raise PreconditionError("support points admit no enclosing ball centre")
    c = c / math.sqrt(q)
    if space.kind is Kind.SPHERE and space.inner(c, x0) < 0:
        c = -c
    if space.kind is Kind.HYPERBOLIC and c[0] < 0:
        c = -c
    return c, float(geodesic_distance(space, c, S).max())


def _dist(space, c, P):
    if space.kind is Kind.EUCLIDEAN:
        return np.sqrt(((P - c) ** 2).sum(axis=1))
    return geodesic_distance(space, c, P)


def min_enclosing_ball(space: SpaceForm, samples, seed=0, check_sandwich=True) -> EnclosingBall:
    """Smallest geodesic ball containing all samples (Welzl's algorithm).

    Sphere samples must lie in an open hemisphere; the returned radius is then
    below pi/(2 sqrt(kappa)).
    """
    P = np.atleast_2d(np.asarray(samples, dtype=float))
    if P.shape[0] == 0:
        raise ConfigurationError("no samples")
    P = space.check_point(P)
    P = np.unique(P, axis=0)
    rng = np.random.default_rng(seed)
    P = P[rng.permutation(len(P))]
    dmax = space.dim + 1  # support sets of at most dim + 1 points

    def tol(r):
        return 1e-12 * max(1.0, r, space.scale)

    def mb(n, support):
        c, r = _support_ball(space, support) if support else (P[0].copy(), 0.0)
        if len(support) == dmax:
            return c, r
        start = 0
        if not support:
            c, r = P[0].copy(), 0.0
            start = 1
        while start < n:
            d = _dist(space, c, P[start:n])
            viol = np.nonzero(d > r + tol(r))[0]
            if len(viol) == 0:
                break
            i = start + int(viol[0])
            c, r = mb(i, support + [P[i]])
            start = i + 1
        return c, r

    c, r = mb(len(P), [])
    if space.kind is Kind.SPHERE and r >= math.pi / (2 * math.sqrt(space.kappa)) - 1e-12:
        raise PreconditionError("samples are not contained in an open hemisphere")
    d_all = _dist(space, c, P)
    r = float(max(r, d_all.max()))
    pair = float("nan")
    if check_sandwich:
        pair = _pairwise_diameter(space, P)
    return EnclosingBall(c, r, "welzl", pair)


def _pairwise_diameter(space, P):
    if len(P) > 3000:
        # sampled diameter: farthest-point sweep from several seeds
        best = 0.0
        idx = 0
        for _ in range(8):
            d = _dist(space, P[idx], P)
            j = int(np.argmax(d))
            best = max(best, float(d[j]))
            idx = j
        return best
    return float(max(_dist(space, x, P).max() for x in P))
