"""Checkers for the Poincare, isoperimetric, mean value and monotonicity inequalities.

Every checker computes both sides by quadrature, attaches a grid-refinement
estimate (the change when the grid is halved) and classifies the outcome.

Slack is always the margin by which the inequality holds: ``rhs - lhs`` for an
upper bound ``lhs <= rhs`` and ``lhs - rhs`` for a lower bound ``lhs >= rhs``.
A negative slack within the tolerance (absolute floor plus refinement
estimate) still passes.  Hypothesis failures raise
:class:`~curvlab.errors.HypothesisViolation` instead of producing a verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ambient import Kind, RadialField, SpaceForm, _raw_direction, geodesic_distance
from .errors import (ConfigurationError, HypothesisViolation, NotAShrinkerError,
                     PreconditionError)
from .hypersurface import (Immersion, newton_apply, p1_trace_term,
                           shrinker_residual, tangential_coords, unit_sphere_volume)
from .measure import (FullChart, GridSpec, Integrator, RadialProfile, SubRectangle, Sublevel,
                      _check_ball, _sub_bounds, boundary_integral, distance_level,
                      domain_samples, min_enclosing_ball)
from .testfunctions import TestFunctionSpec, constant

ABS_TOL = 1e-8
EQ_RTOL = 1e-6
HYP_TOL = 1e-10
SHRINKER_TOL = 1e-8
PROFILE_TOL = 1e-8

PASS, EQUALITY, FAIL = "Pass", "EqualityCase", "Fail"


@dataclass
class InequalityReport:
    name: str
    lhs: float
    rhs: float
    slack: float
    rel_slack: float
    tolerance: float
    verdict: str
    grid: str
    params: dict = field(default_factory=dict)
    refinement_estimate: float = 0.0
    profiles: dict = field(default_factory=dict, repr=False)
    allow_equality: bool = field(default=True, repr=False)

    RECORD_KEYS = ("name", "lhs", "rhs", "slack", "rel_slack", "tolerance", "verdict",
                   "grid", "params", "refinement_estimate")

    def to_record(self):
        return {k: _jsonable(getattr(self, k)) for k in self.RECORD_KEYS}

    @property
    def passed(self):
        return self.verdict in (PASS, EQUALITY)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return v
    return v


def classify(slack, scale, tolerance, allow_equality=True, eq_rtol=EQ_RTOL):
    if allow_equality and abs(slack) <= eq_rtol * scale + 1e-12:
        return EQUALITY
    return PASS if slack >= -tolerance else FAIL


def make_report(name, lhs, rhs, sense="<=", estimate=0.0, grid="", params=None,
                allow_equality=True, eq_rtol=EQ_RTOL, abs_tol=ABS_TOL):
    lhs, rhs, estimate = float(lhs), float(rhs), float(estimate)
    if sense == "<=":
        slack = rhs - lhs
    elif sense == ">=":
        slack = lhs - rhs
    else:
        raise ValueError(f"unknown sense {sense!r}")
    scale = max(abs(lhs), abs(rhs))
    tol = abs_tol + estimate
    params = dict(params or {})
    params.setdefault("sense", sense)
    return InequalityReport(name=name, lhs=lhs, rhs=rhs, slack=slack,
                            rel_slack=slack / scale if scale > 0 else 0.0, tolerance=tol,
                            verdict=classify(slack, scale, tol, allow_equality, eq_rtol),
                            grid=grid, params=params, refinement_estimate=estimate,
                            allow_equality=allow_equality)


def apply_tolerances(report: InequalityReport, abs_tol=ABS_TOL, eq_rtol=EQ_RTOL):
    """Re-derive tolerance and verdict of an inequality report with other settings."""
    # profile checks carry their own relative tolerance
    if report.params.get("sense") not in ("<=", ">=") or "worst_index" in report.params:
        return report
    scale = max(abs(report.lhs), abs(report.rhs))
    report.tolerance = abs_tol + report.refinement_estimate
    report.verdict = classify(report.slack, scale, report.tolerance, report.allow_equality, eq_rtol)
    return report


# -- shared helpers ------------------------------------------------------------

class _Pair:
    """The same integral at a grid and at half resolution."""

    def __init__(self, M, grid, bounds=None, periodic=None):
        self.fine = Integrator(M, grid, bounds, periodic)
        self.coarse = Integrator(M, grid.coarser(), bounds, periodic)

    def both(self, fn):
        a = np.asarray(fn(self.fine), dtype=float)
        b = np.asarray(fn(self.coarse), dtype=float)
        return a, np.abs(a - b)


def _domain_integral(I: Integrator, domain, F):
    if isinstance(domain, FullChart):
        return I.total(F)
    if isinstance(domain, Sublevel):
        return I.masked(("sublevel", id(domain)), domain.phi, F, [0.0])[0]
    raise ConfigurationError("sub-rectangles are integrated with their own rule")


def _domain_pair(M, domain, grid):
    if isinstance(domain, SubRectangle):
        b, per = _sub_bounds(M, domain.bounds)
        return _Pair(M, grid, b, per), FullChart()
    return _Pair(M, grid), domain


def _piece_integral(I: Integrator, tf: TestFunctionSpec, G, domain=None):
    """Sum over pieces of the integral of G(frame, f, df); G returns (..., K)."""
    total = None
    for k, p in enumerate(tf.pieces):
        def F(fr, p=p):
            f, df = p.value(fr)
            return G(fr, f, df)

        if p.level is None:
            val = _domain_integral(I, FullChart() if domain is None else domain, F)
        else:
            val = I.masked(("piece", id(tf), k), p.level, F, [0.0])[0]
        total = val if total is None else total + val
    return total


def node_fields(M: Immersion, grid: GridSpec, domain=None, bounds=None, periodic=None):
    """Curvature fields at the quadrature nodes (restricted to a sublevel domain)."""
    I = Integrator(M, grid, bounds, periodic)
    names = ("S1", "S2", "H", "R", "kmin")

    def F(fr):
        return np.stack([fr.S1, fr.S2, fr.H, fr.R, fr.k[..., 0]], axis=-1) / fr.area_density[:, None]

    D = I.density(F).reshape(-1, len(names))
    if isinstance(domain, Sublevel):
        D = D[domain.phi(I.node_points()) <= 0]
    return {n: D[:, i] for i, n in enumerate(names)}


def _require_convexity_hypotheses(fields, where="M"):
    if fields["S1"].min() <= 0:
        raise HypothesisViolation(f"S1 > 0 fails on {where}", min_S1=float(fields["S1"].min()))
    if fields["S2"].min() < -HYP_TOL:
        raise HypothesisViolation(f"S2 >= 0 fails on {where}", min_S2=float(fields["S2"].min()))


def enclosing_diameter(M: Immersion, domain, grid: GridSpec, seed=0):
    ball = min_enclosing_ball(M.space, domain_samples(M, domain, grid), seed=seed)
    return ball.diameter, ball


def poincare_constant(diam, kappa, m):
    """Constant of the Poincare inequality for a domain of the given extrinsic diameter."""
    if m < 2:
        raise ConfigurationError("m must be >= 2")
    if diam < 0:
        raise ConfigurationError("diameter must be non-negative")
    if kappa <= 0:
        return diam / (m - 1)
    sk = math.sqrt(kappa)
    if diam >= math.pi / sk:
        raise PreconditionError(f"diameter {diam:g} must stay below pi/sqrt(kappa) = {math.pi / sk:g}")
    return 2.0 / (sk * (m - 1)) * math.tan(sk * diam / 2)


def _check_diameter(space: SpaceForm, diam):
    if diam >= 2 * space.injectivity_radius():
        raise PreconditionError("diameter must stay below twice the injectivity radius")
    if space.kind is Kind.SPHERE and diam >= math.pi / math.sqrt(space.kappa):
        raise PreconditionError("diameter must stay below pi/sqrt(kappa)")


def _grad_norm(fr, df):
    return np.sqrt(np.maximum(np.einsum("...i,...ij,...j->...", df, fr.ginv, df), 0.0))


# -- Poincare / isoperimetric ------------------------------------------------------

def verify_poincare(M: Immersion, domain, f: TestFunctionSpec, grid: GridSpec, seed=0):
    """int_Omega f S1 <= C(Omega) int_Omega [|grad f| S1 + (m(k - k0)/4 + S2) f]."""
    domain = FullChart() if domain is None else domain
    space, m = M.space, M.m
    fields = node_fields(M, grid, domain) if not isinstance(domain, SubRectangle) else \
        node_fields(M, grid, None, *_sub_bounds(M, domain.bounds))
    _require_convexity_hypotheses(fields, "the domain")
    diam, ball = enclosing_diameter(M, domain, grid, seed)
    _check_diameter(space, diam)
    C = poincare_constant(diam, space.kappa, m)
    defect = space.ricci_defect()
    _check_support(M, domain, f, grid)
    pair, dom = _domain_pair(M, domain, grid)

    def G(fr, fv, df):
        return np.stack([fv * fr.S1, _grad_norm(fr, df) * fr.S1 + (defect + fr.S2) * fv], axis=-1)

    val, est = pair.both(lambda I: _piece_integral(I, f, G, dom))
    lhs, rhs = val[0], C * val[1]
    return make_report("poincare", lhs, rhs, "<=", est[0] + C * est[1], grid.label(),
                       {"C": C, "diam": diam, "pairwise_diam": ball.pairwise_diameter,
                        "kappa": space.kappa, "m": m, "f": f.kind, **f.params})


def _check_support(M, domain, f, grid):
    if isinstance(domain, FullChart):
        return
    I = Integrator(M, grid)
    u = I.node_points()
    if isinstance(domain, Sublevel):
        outside = domain.phi(u) > 0
    else:
        b, _ = _sub_bounds(M, domain.bounds)
        lo = np.array([x[0] for x in b])
        hi = np.array([x[1] for x in b])
        outside = np.any((u < lo) | (u > hi), axis=1)
    if not np.any(outside):
        return
    from .hypersurface import curvature_frame

    fr = curvature_frame(M, u[outside])
    fv, _ = f.evaluate(fr)
    if np.abs(fv).max() > 1e-14:
        raise ConfigurationError("test function does not vanish outside the domain")


def verify_isoperimetric(M: Immersion, domain, grid: GridSpec, seed=0):
    """int_Omega S1 <= C(Omega) [int_{boundary} S1 + int_Omega (m(k - k0)/4 + S2)]."""
    domain = FullChart() if domain is None else domain
    space, m = M.space, M.m
    if isinstance(domain, FullChart) and not M.closed:
        raise ConfigurationError("the full chart of a hypersurface with boundary is not a valid domain")
    has_boundary = not isinstance(domain, FullChart)
    if has_boundary and m != 2:
        raise ConfigurationError("domains with boundary are only supported for surfaces (m = 2)")
    fields = node_fields(M, grid, domain) if not isinstance(domain, SubRectangle) else \
        node_fields(M, grid, None, *_sub_bounds(M, domain.bounds))
    _require_convexity_hypotheses(fields, "the domain")
    diam, ball = enclosing_diameter(M, domain, grid, seed)
    _check_diameter(space, diam)
    C = poincare_constant(diam, space.kappa, m)
    defect = space.ricci_defect()
    pair, dom = _domain_pair(M, domain, grid)
    val, est = pair.both(lambda I: _domain_integral(
        I, dom, lambda fr: np.stack([fr.S1, defect + fr.S2], axis=-1)))
    bnd, bnd_est = 0.0, 0.0
    if has_boundary:
        bnd = float(boundary_integral(M, domain, lambda fr: fr.S1, grid))
        bnd_est = abs(bnd - float(boundary_integral(M, domain, lambda fr: fr.S1, grid.coarser())))
    lhs = val[0]
    rhs = C * (bnd + val[1])
    return make_report("isoperimetric", lhs, rhs, "<=", est[0] + C * (est[1] + bnd_est),
                       grid.label(), {"C": C, "diam": diam, "boundary_S1": bnd,
                                      "pairwise_diam": ball.pairwise_diameter,
                                      "kappa": space.kappa, "m": m})


def verify_iso2(M: Immersion, grid: GridSpec, form="auto", seed=0):
    """Closed M: int H <= (diam/2) int (R - k) (flat or hyperbolic), 2 pi diam for surfaces
    in R^3, or the tangent form in a sphere."""
    space, m = M.space, M.m
    if not M.closed:
        raise ConfigurationError("this check needs a closed hypersurface")
    fields = node_fields(M, grid)
    if fields["H"].min() <= 0:
        raise HypothesisViolation("H > 0 fails", min_H=float(fields["H"].min()))
    if (fields["R"] - space.kappa).min() < -HYP_TOL:
        raise HypothesisViolation("R >= kappa fails", min_R=float(fields["R"].min()))
    diam, ball = enclosing_diameter(M, FullChart(), grid, seed)
    pair = _Pair(M, grid)
    val, est = pair.both(lambda I: I.total(
        lambda fr: np.stack([fr.H, fr.R - space.kappa], axis=-1)))
    if form == "auto":
        form = "two_pi_diam" if (m == 2 and space.kind is Kind.EUCLIDEAN) else "integral"
    if space.kind is Kind.SPHERE:
        sk = math.sqrt(space.kappa)
        if diam > math.pi / sk:
            raise PreconditionError("diameter must not exceed pi/sqrt(kappa)")
        factor = math.tan(sk * diam / 2) / sk
        rhs, rhs_est = factor * val[1], factor * est[1]
        form = "tangent"
    elif form == "two_pi_diam":
        if not (m == 2 and space.kind is Kind.EUCLIDEAN):
            raise ConfigurationError("the 2 pi diam form needs a closed surface in R^3")
        rhs, rhs_est = 2 * math.pi * diam, 0.0
    elif form == "integral":
        rhs, rhs_est = 0.5 * diam * val[1], 0.5 * diam * est[1]
    else:
        raise ConfigurationError(f"unknown form {form!r}")
    return make_report("iso2", val[0], rhs, "<=", est[0] + rhs_est, grid.label(),
                       {"form": form, "diam": diam, "integral_form_rhs": 0.5 * diam * val[1],
                        "int_R_minus_kappa": val[1], "kappa": space.kappa, "m": m})


def verify_diameter_bound(M: Immersion, grid: GridSpec, seed=0):
    """diam M >= 2 min H / (max R - kappa) for closed M in R^{m+1} or H^{m+1}."""
    space = M.space
    if space.kind is Kind.SPHERE:
        raise ConfigurationError("the diameter bound is stated for flat or hyperbolic ambients")
    if not M.closed:
        raise ConfigurationError("this check needs a closed hypersurface")
    fields = node_fields(M, grid)
    if fields["H"].min() <= 0:
        raise HypothesisViolation("H > 0 fails", min_H=float(fields["H"].min()))
    if (fields["R"] - space.kappa).min() < -HYP_TOL:
        raise HypothesisViolation("R >= kappa fails", min_R=float(fields["R"].min()))
    diam, ball = enclosing_diameter(M, FullChart(), grid, seed)
    coarse = node_fields(M, grid.coarser())
    denom = fields["R"].max() - space.kappa
    params = {"min_H": fields["H"].min(), "max_R": fields["R"].max(), "kappa": space.kappa,
              "pairwise_diam": ball.pairwise_diameter}
    if denom <= HYP_TOL:
        params["vacuous"] = True
        return make_report("diameter_bound", diam, 0.0, ">=", 0.0, grid.label(), params,
                           allow_equality=False)
    rhs = 2 * fields["H"].min() / denom
    rhs_c = 2 * coarse["H"].min() / max(coarse["R"].max() - space.kappa, HYP_TOL)
    return make_report("diameter_bound", diam, rhs, ">=", abs(rhs - rhs_c), grid.label(), params)


# -- self-shrinkers and volume ------------------------------------------------------

def shrinker_residual_max(M: Immersion, grid: GridSpec):
    I = Integrator(M, grid)

    def F(fr):
        return shrinker_residual(fr, M.space) / fr.area_density

    return float(np.abs(I.density(F)).max())


def _require_shrinker(M, grid):
    if M.space.kind is not Kind.EUCLIDEAN:
        raise ConfigurationError("self-shrinkers live in Euclidean space")
    res = shrinker_residual_max(M, grid)
    if res > SHRINKER_TOL:
        raise NotAShrinkerError(f"shrinker residual {res:.3e} exceeds {SHRINKER_TOL:g}",
                                residual=res)
    return res


def verify_self_shrinker_volume(M: Immersion, grid: GridSpec, seed=0):
    """vol(K) <= m/(m+1) diam(M) int R for a closed self-shrinker M = boundary of K."""
    if not M.closed:
        raise ConfigurationError("this check needs a closed hypersurface")
    res = _require_shrinker(M, grid)
    m = M.m
    fields = node_fields(M, grid)
    if fields["H"].min() <= 0:
        raise HypothesisViolation("H > 0 fails", min_H=float(fields["H"].min()))
    if fields["R"].min() < -HYP_TOL:
        raise HypothesisViolation("R >= 0 fails", min_R=float(fields["R"].min()))
    diam, ball = enclosing_diameter(M, FullChart(), grid, seed)
    pair = _Pair(M, grid)
    # divergence theorem with the inward normal: vol(K) = (1/(m+1)) int <X, -eta>
    val, est = pair.both(lambda I: I.total(
        lambda fr: np.stack([-M.space.inner(fr.x, fr.eta) / (m + 1), fr.R], axis=-1)))
    factor = m / (m + 1) * diam
    return make_report("self_shrinker_volume", val[0], factor * val[1], "<=",
                       est[0] + factor * est[1], grid.label(),
                       {"diam": diam, "int_R": val[1], "shrinker_residual": res, "m": m})


def volume_estimate_constant(m):
    return 2 ** (m - 1) * (m + 1) ** (1 + 1 / m) / (m * (m - 1) ** 2 * unit_sphere_volume(m) ** (1 / m))


def verify_volume_estimate(M: Immersion, grid: GridSpec, seed=0):
    """vol(M)^((m-1)/m) <= const * diam * int (m(k-k0)/4 + S2); the exponent m/(m-1)
    is evaluated alongside."""
    space, m = M.space, M.m
    if space.kappa > 0:
        raise ConfigurationError("the volume estimate needs kappa <= 0")
    if not M.closed:
        raise ConfigurationError("this check needs a closed hypersurface")
    _require_convexity_hypotheses(node_fields(M, grid))
    diam, ball = enclosing_diameter(M, FullChart(), grid, seed)
    defect = space.ricci_defect()
    pair = _Pair(M, grid)
    val, est = pair.both(lambda I: I.total(
        lambda fr: np.stack([np.ones_like(fr.S1), defect + fr.S2], axis=-1)))
    vol = val[0]
    const = volume_estimate_constant(m)
    rhs = const * diam * val[1]
    rhs_est = const * diam * est[1]
    e_stmt, e_alt = (m - 1) / m, m / (m - 1)
    lhs_est = e_stmt * vol ** (e_stmt - 1) * est[0]
    alt = make_report("volume_estimate_alt", vol ** e_alt, rhs, "<=",
                      e_alt * vol ** (e_alt - 1) * est[0] + rhs_est, grid.label())
    return make_report("volume_estimate", vol ** e_stmt, rhs, "<=", lhs_est + rhs_est,
                       grid.label(),
                       {"exponent": e_stmt, "volume": vol, "diam": diam, "constant": const,
                        "omega_m": unit_sphere_volume(m),
                        "alt_exponent": e_alt, "alt_lhs": alt.lhs, "alt_slack": alt.slack,
                        "alt_rel_slack": alt.rel_slack, "alt_verdict": alt.verdict})


# -- ball integrands ------------------------------------------------------------------

def _radial_data(space, x0, fr):
    """rho, unit grad rho (zero where singular) at the frame points."""
    rho = geodesic_distance(space, x0, fr.x)
    v = _raw_direction(space, x0, fr.x)
    nv = space.norm(v)
    ok = (rho > 1e-12 * space.scale) & (nv > 0)
    if space.kind is Kind.SPHERE:
        ok &= rho < space.injectivity_radius() - 1e-8
    n = np.where(ok[..., None], v / np.where(nv > 0, nv, 1.0)[..., None], 0.0)
    return rho, n


def _weight(space, r):
    """r for kappa <= 0, sin(sqrt(kappa) r) for kappa > 0."""
    r = np.asarray(r, dtype=float)
    if space.kappa <= 0:
        return r
    return np.sin(math.sqrt(space.kappa) * r)


def mean_value_integrand(space, x0, fr, fv, df):
    """W(rho) [<grad rho, P1 grad f> + 2 S2 f <grad rho, eta> + f ric((grad rho)^T, eta)]."""
    rho, n = _radial_data(space, x0, fr)
    grad_f = np.einsum("...ij,...j->...i", fr.ginv, df)
    p1 = newton_apply(fr, grad_f)
    dn = space.inner(fr.tangents, n[..., None, :])
    term1 = (p1 * dn).sum(axis=-1)
    term2 = 2 * fr.S2 * fv * space.inner(n, fr.eta)
    t = np.einsum("...ij,...j->...i", fr.ginv, dn)
    ntan = np.einsum("...i,...in->...n", t, fr.tangents)
    ric = space.m * space.kappa * space.inner(ntan, fr.eta)
    return _weight(space, rho) * (term1 + term2 + fv * ric)


def _r_rule(s, t, panels=8, order=4):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(s, t, panels + 1)
    h = np.diff(edges)[:, None]
    nodes = (edges[:-1, None] + h * (x + 1) / 2).ravel()
    weights = (h * w / 2).ravel()
    return nodes, weights


def _ball_pieces(I: Integrator, tf: TestFunctionSpec, x0, radii, G, key):
    if not tf.smooth:
        raise ConfigurationError("ball integrals need a smooth (unmasked) test function")
    total = None
    for p in tf.pieces:
        def F(fr, p=p):
            fv, df = p.value(fr)
            return G(fr, fv, df)

        val = I.masked(key, distance_level(I.M, x0), F, radii)
        total = val if total is None else total + val
    return total


def verify_mean_value(M: Immersion, f: Optional[TestFunctionSpec], x0, s, t, grid: GridSpec,
                      exponent_mode="General", r_panels=8):
    """Mean value inequality for int_{B_r} f S1 between radii s < t."""
    space, m = M.space, M.m
    f = constant(1.0) if f is None else f
    x0 = space.check_point(np.asarray(x0, dtype=float))
    if not 0 < s < t:
        raise ConfigurationError("need 0 < s < t")
    if space.kappa > 0 and t >= math.pi / (2 * math.sqrt(space.kappa)):
        raise PreconditionError("t must stay below pi/(2 sqrt(kappa))")
    _check_ball(M, x0, [t])
    fields = node_fields(M, grid)
    _require_convexity_hypotheses(fields)
    if exponent_mode == "General":
        e1, e2, factor = (m - 1) / 2, (m + 1) / 2, 0.5
    elif exponent_mode == "Convex":
        if fields["kmin"].min() < -HYP_TOL:
            raise HypothesisViolation("A >= 0 fails (convex mode)",
                                      min_k=float(fields["kmin"].min()))
        e1, e2, factor = m - 1, m, 1.0
    else:
        raise ConfigurationError(f"unknown exponent mode {exponent_mode!r}")

    rn, rw = _r_rule(s, t, r_panels)
    rn2, rw2 = _r_rule(s, t, max(r_panels // 2, 1))
    radii = np.unique(np.concatenate([[s, t], rn, rn2]))
    idx = {float(r): i for i, r in enumerate(radii)}

    def G(fr, fv, df):
        return np.stack([fv * fr.S1, mean_value_integrand(space, x0, fr, fv, df)], axis=-1)

    key = ("ball", x0.tobytes())

    w = _weight(space, radii)
    at_s, at_t = idx[float(s)], idx[float(t)]

    def sides(prof, rnodes, rweights):
        lhs = prof[at_t, 0] / w[at_t] ** e1 - prof[at_s, 0] / w[at_s] ** e1
        sel = [idx[float(r)] for r in rnodes]
        rhs = factor * float(np.sum(rweights * prof[sel, 1] / w[sel] ** e2))
        return np.array([lhs, rhs])

    pair = _Pair(M, grid)
    profs = {}

    def fine_or_coarse(I):
        profs[I is pair.fine] = _ball_pieces(I, f, x0, radii, G, key)
        return sides(profs[I is pair.fine], rn, rw)

    val, est = pair.both(fine_or_coarse)
    r_est = abs(val[1] - sides(profs[True], rn2, rw2)[1])
    branch = "ii" if space.kappa > 0 else "i"
    return make_report("mean_value", val[0], val[1], ">=", est[0] + est[1] + r_est, grid.label(),
                       {"s": s, "t": t, "branch": branch, "mode": exponent_mode,
                        "x0": list(x0), "f": f.kind, "r_quadrature_estimate": r_est})


# -- divergence identity ---------------------------------------------------------------

def verify_divergence_identity(M: Immersion, f: TestFunctionSpec, x0, grid: GridSpec,
                               field_kind=None, rel_tol=1e-5):
    """Weak form of div(P1 X^T) = tr(P1 (D X)^T) + ric(X^T, eta) + 2 S2 <X, eta>.

    Residual = int <grad f, P1 X^T> + int f [trace + ric + 2 S2 <X, eta>], zero for
    compactly supported f.  lhs/rhs are the two parts (with opposite sign).
    """
    space = M.space
    if not f.smooth:
        raise ConfigurationError("the weak form needs a smooth test function")
    if field_kind is None:
        field_kind = "position" if space.kind is Kind.EUCLIDEAN else "comparison"
    X = RadialField(space, x0, field_kind)
    _check_support_boundary(M, f, grid)

    def G(fr, fv, df):
        Xv = X.value(fr.x)
        t = tangential_coords(fr, space, Xv)
        part1 = (df * newton_apply(fr, t)).sum(axis=-1)
        trace = p1_trace_term(M, None, X, frame=fr)
        xt = np.einsum("...i,...in->...n", t, fr.tangents)
        ric = space.m * space.kappa * space.inner(xt, fr.eta)
        part2 = fv * (trace + ric + 2 * fr.S2 * space.inner(Xv, fr.eta))
        return np.stack([part1, part2], axis=-1)

    pair = _Pair(M, grid)
    val, est = pair.both(lambda I: _piece_integral(I, f, G))
    A, B = val
    denom = abs(A) + abs(B)
    rel = abs(A + B) / denom if denom > 0 else 0.0
    rep = make_report("divergence_identity", A, -B, "<=", 0.0, grid.label(),
                      {"residual": A + B, "rel_residual": rel, "rel_tol": rel_tol,
                       "field": field_kind, "f": f.kind, **f.params},
                      allow_equality=False)
    rep.slack = -abs(A + B)
    rep.params["sense"] = "="
    rep.refinement_estimate = float(est.sum())
    rep.tolerance = rel_tol * denom
    # both parts vanish identically when X^T = 0 and f is radial about x0
    rep.verdict = EQUALITY if rel <= rel_tol or abs(A + B) <= ABS_TOL else FAIL
    return rep


def _check_support_boundary(M, f, grid):
    if M.closed:
        return
    I = Integrator(M, grid)
    u = I.node_points()
    edge = np.zeros(len(u), dtype=bool)
    for i, ((a, b), per) in enumerate(zip(M.bounds, M.periodic)):
        if per:
            continue
        w = (b - a) / (grid.shape[i] / grid.order)
        edge |= (u[:, i] < a + w) | (u[:, i] > b - w)
    from .hypersurface import curvature_frame

    fv, _ = f.evaluate(curvature_frame(M, u[edge]))
    if np.abs(fv).max() > 1e-14:
        raise ConfigurationError("test function support touches the chart boundary")


# -- monotonicity ------------------------------------------------------------------

def _profile_report(name, values, radii, grid, params, tol=PROFILE_TOL):
    v = np.asarray(values, dtype=float)
    inc = np.diff(v) / np.maximum(np.abs(v[:-1]), 1e-300)
    worst = float(inc.min()) if len(inc) else 0.0
    rep = make_report(name, worst, 0.0, ">=", 0.0, grid, params, allow_equality=False, abs_tol=tol)
    rep.params["worst_index"] = int(np.argmin(inc)) if len(inc) else 0
    return rep


def monotonicity_h(M: Immersion, x0, radii, grid: GridSpec, Lambda=None, alpha=1.0, R0=None):
    """h(r) = exp(L R0^(1-a) r^a) / W(r)^((m-1)/2) int_{B_r} S1 must be non-decreasing."""
    space, m = M.space, M.m
    radii = np.asarray(radii, dtype=float)
    x0 = space.check_point(np.asarray(x0, dtype=float))
    R0 = float(radii[-1]) if R0 is None else float(R0)
    if not 0 < alpha <= 1:
        raise ConfigurationError("alpha must lie in (0, 1]")
    if Lambda is not None and Lambda < 0:
        raise ConfigurationError("Lambda must be non-negative")
    if not 0 < R0 < space.injectivity_radius():
        raise PreconditionError("R0 must lie in (0, injectivity radius)")
    if space.kappa > 0 and space.kappa * R0 ** 2 > math.pi ** 2:
        raise PreconditionError("kappa R0^2 must not exceed pi^2")
    if np.any(radii > R0):
        raise PreconditionError("radii must not exceed R0")
    _require_convexity_hypotheses(node_fields(M, grid))
    defect = space.ricci_defect()
    from .measure import radial_profile

    prof = radial_profile(M, x0, lambda fr: np.stack([fr.S1, defect + fr.S2], axis=-1),
                          radii, grid)
    S1r, S2r = prof.values[:, 0], prof.values[:, 1]
    ratio = S2r / alpha / ((radii / R0) ** (alpha - 1) * S1r)
    lam_min = float(ratio.max())
    lam = lam_min if Lambda is None else float(Lambda)
    if lam < lam_min * (1 - 1e-9) - 1e-12:
        raise HypothesisViolation(
            f"growth hypothesis fails: Lambda = {lam:g} below the minimal {lam_min:.6g}",
            minimal_lambda=lam_min, worst_radius=float(radii[int(np.argmax(ratio))]))
    w = _weight(space, radii)
    h = np.exp(lam * R0 ** (1 - alpha) * radii ** alpha) / w ** ((m - 1) / 2) * S1r
    h_est = np.exp(lam * R0 ** (1 - alpha) * radii ** alpha) / w ** ((m - 1) / 2) \
        * prof.refinement_estimate[:, 0]
    rep = _profile_report("monotonicity_h", h, radii, grid.label(),
                          {"Lambda": lam, "minimal_lambda": lam_min, "alpha": alpha, "R0": R0,
                           "branch": "ii" if space.kappa > 0 else "i"})
    rep.refinement_estimate = float((h_est / np.abs(h)).max())
    rep.profiles["h"] = RadialProfile(x0, radii, h, h_est, "h")
    rep.profiles["int_S1"] = RadialProfile(x0, radii, S1r, prof.refinement_estimate[:, 0], "int_S1")
    return rep


def monotonicity_phi_shrinker(M: Immersion, x0, radii, grid: GridSpec, Lambda=None):
    """phi(r) = r^-((m-1)(1/2 - m L)) int_{B_r} H for a self-shrinker with 0 <= R <= L."""
    m = M.m
    res = _require_shrinker(M, grid)
    fields = node_fields(M, grid)
    if fields["H"].min() <= 0:
        raise HypothesisViolation("H > 0 fails", min_H=float(fields["H"].min()))
    if fields["R"].min() < -HYP_TOL:
        raise HypothesisViolation("R >= 0 fails", min_R=float(fields["R"].min()))
    max_R = float(fields["R"].max())
    lam = max_R if Lambda is None else float(Lambda)
    if lam < max_R - HYP_TOL:
        raise HypothesisViolation(f"R <= Lambda fails: max R = {max_R:.6g} > {lam:g}",
                                  minimal_lambda=max_R)
    radii = np.asarray(radii, dtype=float)
    from .measure import radial_profile

    prof = radial_profile(M, x0, lambda fr: fr.H, radii, grid)
    expo = (m - 1) * (0.5 - m * lam)
    phi = prof.values / radii ** expo
    rep = _profile_report("monotonicity_phi_shrinker", phi, radii, grid.label(),
                          {"Lambda": lam, "exponent": expo, "divergence_regime": lam < 1 / (2 * m),
                           "shrinker_residual": res})
    est = prof.refinement_estimate / radii ** expo
    rep.refinement_estimate = float((est / np.abs(phi)).max())
    rep.profiles["phi"] = RadialProfile(np.asarray(x0, dtype=float), radii, phi, est, "phi")
    return rep


# -- L^p ----------------------------------------------------------------------------

def _weight_power_integral(space, s, t, a):
    """int_s^t W(r)^(-a) dr."""
    if t <= s:
        return 0.0
    if space.kappa <= 0:
        if abs(a - 1) < 1e-14:
            return math.log(t / s)
        return (t ** (1 - a) - s ** (1 - a)) / (1 - a)
    x, w = np.polynomial.legendre.leggauss(64)
    r = s + (t - s) * (x + 1) / 2
    return float((t - s) / 2 * np.sum(w * _weight(space, r) ** (-a)))


def lp_constants(m, p, c, Lambda, kappa):
    proof = Lambda / (p * c ** (1 - 1 / p))
    if abs(m - 1 - 2 * p) < 1e-14:
        stmt = math.inf
    elif kappa <= 0:
        stmt = 2 * Lambda / (c ** (1 - 1 / p) * (m - 1 - 2 * p))
    else:
        stmt = Lambda * (m - 1) / (c ** (1 - 1 / p) * (m - 1 - 2 * p))
    return proof, stmt


def verify_lp(M: Immersion, x0, s, t, p, c, grid: GridSpec, Lambda=None, R0=None):
    """(int_{B_s} S1 / W(s)^e)^(1/p) <= (int_{B_t} S1 / W(t)^e)^(1/p) + K int_s^t W^(-e/p)."""
    space, m = M.space, M.m
    x0 = space.check_point(np.asarray(x0, dtype=float))
    if p <= 1 or c <= 0:
        raise ConfigurationError("need p > 1 and c > 0")
    R0 = float(t) if R0 is None else float(R0)
    if not 0 < s <= t <= R0:
        raise ConfigurationError("need 0 < s <= t <= R0")
    if space.kappa > 0 and R0 > math.pi / (2 * math.sqrt(space.kappa)):
        raise PreconditionError("R0 must not exceed pi/(2 sqrt(kappa))")
    fields = node_fields(M, grid)
    _require_convexity_hypotheses(fields)
    if fields["S1"].min() < c - HYP_TOL:
        raise HypothesisViolation(f"S1 >= c fails: min S1 = {fields['S1'].min():.6g} < {c:g}",
                                  min_S1=float(fields["S1"].min()))
    defect = space.ricci_defect()
    from .measure import radial_profile

    radii = np.unique([s, t, R0])
    prof = radial_profile(M, x0, lambda fr: np.stack(
        [fr.S1, np.maximum(defect + fr.S2, 0.0) ** p], axis=-1), radii, grid)
    at = {float(r): i for i, r in enumerate(radii)}
    lam_min = float(prof.values[at[R0], 1] ** (1 / p))
    lam = lam_min if Lambda is None else float(Lambda)
    if lam < lam_min * (1 - 1e-9) - 1e-12:
        raise HypothesisViolation(f"L^p hypothesis fails: Lambda = {lam:g} below {lam_min:.6g}",
                                  minimal_lambda=lam_min)
    e = (m - 1) / 2
    w = _weight(space, radii)
    g = prof.values[:, 0] / w ** e
    g_est = prof.refinement_estimate[:, 0] / w ** e
    lhs = g[at[s]] ** (1 / p)
    base = g[at[t]] ** (1 / p)
    J = _weight_power_integral(space, s, t, e / p)
    k_proof, k_stmt = lp_constants(m, p, c, lam, space.kappa)
    est = (g_est[at[s]] / p * g[at[s]] ** (1 / p - 1) + g_est[at[t]] / p * g[at[t]] ** (1 / p - 1))
    stmt = make_report("lp_statement", lhs, base + k_stmt * J, "<=", est, grid.label())
    return make_report("lp", lhs, base + k_proof * J, "<=", est, grid.label(),
                       {"p": p, "c": c, "Lambda": lam, "minimal_lambda": lam_min, "R0": R0,
                        "s": s, "t": t, "proof_constant": k_proof,
                        "statement_constant": k_stmt, "statement_rhs": stmt.rhs,
                        "statement_slack": stmt.slack, "statement_verdict": stmt.verdict,
                        "branch": "ii" if space.kappa > 0 else "i"})
