"""Run configuration: schema, surface/domain/test-function builders.

A config is a YAML (or JSON) mapping validated by :class:`RunConfig`.  Unknown
keys are rejected everywhere.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import sympy as sp
import yaml
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator

from .ambient import SpaceForm
from .errors import ConfigurationError
from .fixtures import CATALOG, build_fixture, make_cap_domain, make_rectangle_domain
from .hypersurface import Immersion
from .measure import FullChart, GridSpec, Sublevel
from . import testfunctions as tfs

CHECKS = ("poincare", "isoperimetric", "iso2", "diameter_bound", "self_shrinker_volume",
          "volume_estimate", "mean_value", "divergence_identity", "monotonicity_h",
          "monotonicity_phi_shrinker", "lp")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class AmbientConfig(_Strict):
    kind: Literal["euclidean", "sphere", "hyperbolic"] = "euclidean"
    kappa: Optional[float] = None
    dim: PositiveInt = 3

    def build(self):
        if self.kind == "euclidean":
            return SpaceForm.euclidean(self.dim)
        if self.kind == "sphere":
            return SpaceForm.sphere(self.dim, 1.0 if self.kappa is None else self.kappa)
        return SpaceForm.hyperbolic(self.dim, -1.0 if self.kappa is None else self.kappa)


class InlineChart(_Strict):
    """Chart given by sympy expressions in the parameters u0, u1, ..."""

    coords: list[str]
    bounds: list[tuple[float, float]]
    periodic: Optional[list[bool]] = None
    closed: bool = False
    ambient: AmbientConfig = AmbientConfig()
    name: str = "inline"


class SurfaceConfig(_Strict):
    fixture: Optional[str] = None
    params: dict = Field(default_factory=dict)
    inline: Optional[InlineChart] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.fixture is None) == (self.inline is None):
            raise ValueError("give exactly one of 'fixture' or 'inline'")
        if self.fixture is not None and self.fixture not in CATALOG:
            raise ValueError(f"unknown fixture {self.fixture!r}; known: {sorted(CATALOG)}")
        return self


class GridConfig(_Strict):
    shape: list[PositiveInt]
    order: PositiveInt = 4
    subcells: Optional[PositiveInt] = None


class DomainConfig(_Strict):
    kind: Literal["full", "cap", "rectangle", "sublevel"] = "full"
    theta0: Optional[PositiveFloat] = None
    bounds: Optional[list[tuple[float, float]]] = None
    expr: Optional[str] = None


class TestFunctionConfig(_Strict):
    kind: Literal["constant", "tent", "smooth_bump", "radial_bump"] = "constant"
    c: float = Field(1.0, ge=0)
    eps: Optional[PositiveFloat] = None
    margin: Optional[PositiveFloat] = None
    x0: Optional[list[float]] = None
    x0_u: Optional[list[float]] = None
    r_in: float = Field(0.0, ge=0)
    r_out: Optional[PositiveFloat] = None


class RadiiConfig(_Strict):
    start: PositiveFloat
    stop: PositiveFloat
    num: PositiveInt


class CheckConfig(_Strict):
    check: Literal[CHECKS]
    label: Optional[str] = None
    surface: Optional[SurfaceConfig] = None
    domain: DomainConfig = DomainConfig()
    f: Optional[TestFunctionConfig] = None
    x0: Optional[list[float]] = None
    x0_u: Optional[list[float]] = None
    s: Optional[PositiveFloat] = None
    t: Optional[PositiveFloat] = None
    p: Optional[PositiveFloat] = None
    c: Optional[PositiveFloat] = None
    Lambda: Optional[float] = Field(None, ge=0)
    alpha: float = Field(1.0, gt=0, le=1)
    R0: Optional[PositiveFloat] = None
    exponent_mode: Literal["General", "Convex"] = "General"
    radii: Optional[Union[RadiiConfig, list[PositiveFloat]]] = None
    form: Literal["auto", "two_pi_diam", "integral"] = "auto"
    rel_tol: PositiveFloat = 1e-5
    grid: Optional[GridConfig] = None

    @property
    def name(self):
        return self.label or self.check


class ToleranceConfig(_Strict):
    abs: PositiveFloat = 1e-8
    equality_rtol: PositiveFloat = 1e-6


class OutputConfig(_Strict):
    report: str = "report.json"
    profiles_dir: Optional[str] = "profiles"
    plots_dir: Optional[str] = None


class RunConfig(_Strict):
    surface: SurfaceConfig
    grid: GridConfig
    checks: list[CheckConfig]
    tolerances: ToleranceConfig = ToleranceConfig()
    outputs: OutputConfig = OutputConfig()
    workers: PositiveInt = 1
    seed: int = 0

    @model_validator(mode="after")
    def _non_empty(self):
        if not self.checks:
            raise ValueError("the checker list is empty")
        return self


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping")
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config:\n{exc}") from None
    return apply_environment(cfg)


def apply_environment(cfg: RunConfig) -> RunConfig:
    """Environment overrides for output paths and worker count only."""
    out = cfg.outputs.model_dump()
    for key, var in (("report", "CURVLAB_REPORT"), ("profiles_dir", "CURVLAB_PROFILES_DIR"),
                     ("plots_dir", "CURVLAB_PLOTS_DIR")):
        if os.environ.get(var):
            out[key] = os.environ[var]
    workers = cfg.workers
    if os.environ.get("CURVLAB_WORKERS"):
        try:
            workers = int(os.environ["CURVLAB_WORKERS"])
        except ValueError:
            raise ConfigurationError("CURVLAB_WORKERS must be an integer") from None
        if workers < 1:
            raise ConfigurationError("CURVLAB_WORKERS must be >= 1")
    return cfg.model_copy(update={"outputs": OutputConfig(**out), "workers": workers})


# -- builders ---------------------------------------------------------------------

def inline_immersion(spec: InlineChart) -> Immersion:
    """Analytic jets by symbolic differentiation of the coordinate expressions."""
    m = len(spec.bounds)
    u = sp.symbols(f"u0:{m}")
    local = {f"u{i}": u[i] for i in range(m)}
    try:
        X = [sp.sympify(e, locals=local) for e in spec.coords]
    except (sp.SympifyError, TypeError) as exc:
        raise ConfigurationError(f"cannot parse chart expression: {exc}") from None
    extra = {str(s) for e in X for s in e.free_symbols} - set(local)
    if extra:
        raise ConfigurationError(f"unknown symbols in chart: {sorted(extra)}")
    dX = [[sp.diff(e, ui) for e in X] for ui in u]
    ddX = [[[sp.diff(e, ui, uj) for e in X] for uj in u] for ui in u]
    fX, fd, fdd = (sp.lambdify(u, expr, "numpy") for expr in (X, dX, ddX))

    def _eval(fn, uu, shape):
        cols = [uu[..., i] for i in range(m)]
        return np.moveaxis(_flatten(fn(*cols), cols[0]), 0, -1).reshape(uu.shape[:-1] + shape)

    N = len(X)

    def jets(uu):
        uu = np.asarray(uu, dtype=float)
        return _eval(fX, uu, (N,)), _eval(fd, uu, (m, N)), _eval(fdd, uu, (m, m, N))

    space = spec.ambient.build()
    if N != space.model_dim:
        raise ConfigurationError(f"chart has {N} coordinates, the ambient model needs {space.model_dim}")
    periodic = spec.periodic or [False] * m
    return Immersion(space, lambda uu: jets(uu)[0], tuple(spec.bounds), tuple(periodic),
                     jets=jets, closed=spec.closed, name=spec.name)


def _flatten(nested, like):
    """Nested lists of scalars/arrays -> (n_leaves, *like.shape)."""
    leaves = []

    def walk(v):
        if isinstance(v, (list, tuple)):
            for w in v:
                walk(w)
        else:
            leaves.append(np.broadcast_to(np.asarray(v, dtype=float), like.shape))

    walk(nested)
    return np.stack(leaves)


def build_surface(cfg: SurfaceConfig) -> Immersion:
    if cfg.inline is not None:
        return inline_immersion(cfg.inline)
    return build_fixture(cfg.fixture, **cfg.params)


def build_grid(cfg: GridConfig, workers=1) -> GridSpec:
    return GridSpec(tuple(cfg.shape), cfg.order, cfg.subcells, workers)


def _level_expr(M: Immersion, expr):
    u = sp.symbols(f"u0:{M.m}")
    local = {f"u{i}": u[i] for i in range(M.m)}
    try:
        e = sp.sympify(expr, locals=local)
    except (sp.SympifyError, TypeError) as exc:
        raise ConfigurationError(f"cannot parse level expression: {exc}") from None
    f = sp.lambdify(u, e, "numpy")
    g = sp.lambdify(u, [sp.diff(e, ui) for ui in u], "numpy")

    def phi(uu):
        uu = np.asarray(uu, dtype=float)
        return np.broadcast_to(np.asarray(f(*np.moveaxis(uu, -1, 0)), dtype=float), uu.shape[:-1])

    def grad(uu):
        uu = np.asarray(uu, dtype=float)
        return np.moveaxis(_flatten(g(*np.moveaxis(uu, -1, 0)), uu[..., 0]), 0, -1)

    return Sublevel(phi, grad, name=str(expr))


def build_domain(M: Immersion, cfg: DomainConfig):
    if cfg.kind == "full":
        return FullChart()
    if cfg.kind == "cap":
        if cfg.theta0 is None:
            raise ConfigurationError("cap domains need theta0")
        return make_cap_domain(M, cfg.theta0)
    if cfg.kind == "rectangle":
        if not cfg.bounds or len(cfg.bounds) != M.m:
            raise ConfigurationError("rectangle domains need one (lo, hi) pair per chart axis")
        return make_rectangle_domain(cfg.bounds)
    if not cfg.expr:
        raise ConfigurationError("sublevel domains need expr")
    return _level_expr(M, cfg.expr)


def resolve_point(M: Immersion, x0=None, x0_u=None):
    if (x0 is None) == (x0_u is None):
        raise ConfigurationError("give exactly one of x0 (ambient) or x0_u (chart parameters)")
    if x0_u is not None:
        if len(x0_u) != M.m:
            raise ConfigurationError(f"x0_u needs {M.m} parameters")
        return M.point(np.asarray(x0_u, dtype=float))
    return M.space.check_point(np.asarray(x0, dtype=float))


def build_test_function(M: Immersion, cfg: Optional[TestFunctionConfig], domain):
    if cfg is None:
        cfg = TestFunctionConfig()
    if cfg.kind == "constant":
        return tfs.constant(cfg.c, domain)
    if cfg.kind == "radial_bump":
        if cfg.r_out is None:
            raise ConfigurationError("radial_bump needs r_out")
        return tfs.radial_bump(M, resolve_point(M, cfg.x0, cfg.x0_u), cfg.r_in, cfg.r_out)
    if not isinstance(domain, Sublevel):
        raise ConfigurationError(f"{cfg.kind} test functions need a cap or sublevel domain")
    if cfg.kind == "tent":
        if cfg.eps is None:
            raise ConfigurationError("tent needs eps")
        return tfs.tent(M, domain, cfg.eps)
    if cfg.margin is None:
        raise ConfigurationError("smooth_bump needs margin")
    return tfs.smooth_bump(M, domain, cfg.margin)


def build_radii(cfg):
    if cfg is None:
        raise ConfigurationError("this check needs radii")
    if isinstance(cfg, RadiiConfig):
        if cfg.stop <= cfg.start or cfg.num < 2:
            raise ConfigurationError("radii need start < stop and num >= 2")
        return np.linspace(cfg.start, cfg.stop, cfg.num)
    return np.asarray(cfg, dtype=float)
