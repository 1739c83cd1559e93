"""Command line entry point: ``curvlab run | refine | list-fixtures | export-profile``.

Exit codes: 0 when every check passes (or is an equality case), 1 when some
check fails, 2 for configuration errors or when a check's hypotheses fail and
nothing failed outright.
"""

from __future__ import annotations

import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import verifier as V
from .config import (CheckConfig, RunConfig, build_domain, build_grid, build_radii,
                     build_surface, build_test_function, load_config, resolve_point)
from .errors import ConfigurationError, CurvlabError, HypothesisViolation
from .fixtures import CATALOG
from .measure import FullChart, GridSpec

log = logging.getLogger("curvlab")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def run_check(M, check: CheckConfig, grid: GridSpec, seed=0) -> V.InequalityReport:
    """Dispatch one configured check."""
    c = check
    name = c.check
    if name in ("poincare", "isoperimetric"):
        domain = build_domain(M, c.domain)
        if name == "isoperimetric":
            rep = V.verify_isoperimetric(M, domain, grid, seed)
        else:
            rep = V.verify_poincare(M, domain, build_test_function(M, c.f, domain), grid, seed)
    elif name == "iso2":
        rep = V.verify_iso2(M, grid, c.form, seed)
    elif name == "diameter_bound":
        rep = V.verify_diameter_bound(M, grid, seed)
    elif name == "self_shrinker_volume":
        rep = V.verify_self_shrinker_volume(M, grid, seed)
    elif name == "volume_estimate":
        rep = V.verify_volume_estimate(M, grid, seed)
    elif name == "mean_value":
        _need(c, "s", "t")
        f = build_test_function(M, c.f, FullChart()) if c.f is not None else None
        rep = V.verify_mean_value(M, f, resolve_point(M, c.x0, c.x0_u), c.s, c.t, grid,
                                  c.exponent_mode)
    elif name == "divergence_identity":
        if c.f is None:
            raise ConfigurationError("divergence_identity needs a test function f")
        f = build_test_function(M, c.f, build_domain(M, c.domain))
        rep = V.verify_divergence_identity(M, f, resolve_point(M, c.x0, c.x0_u), grid,
                                           rel_tol=c.rel_tol)
    elif name == "monotonicity_h":
        rep = V.monotonicity_h(M, resolve_point(M, c.x0, c.x0_u), build_radii(c.radii), grid,
                               c.Lambda, c.alpha, c.R0)
    elif name == "monotonicity_phi_shrinker":
        rep = V.monotonicity_phi_shrinker(M, resolve_point(M, c.x0, c.x0_u),
                                          build_radii(c.radii), grid, c.Lambda)
    else:
        _need(c, "s", "t", "p", "c")
        rep = V.verify_lp(M, resolve_point(M, c.x0, c.x0_u), c.s, c.t, c.p, c.c, grid,
                          c.Lambda, c.R0)
    rep.name = c.name
    return rep


def _need(c, *keys):
    missing = [k for k in keys if getattr(c, k) is None]
    if missing:
        raise ConfigurationError(f"{c.check} needs {', '.join(missing)}")


@dataclass
class SuiteResult:
    reports: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def exit_code(self):
        if self.errors:
            return EXIT_ERROR
        if any(r.verdict == V.FAIL for r in self.reports):
            return EXIT_FAIL
        if self.violations:
            return EXIT_ERROR
        return EXIT_OK

    def to_json(self):
        doc = {"records": [r.to_record() for r in self.reports],
               "hypothesis_violations": self.violations,
               "errors": self.errors}
        return json.dumps(V._jsonable(doc), indent=2, sort_keys=True) + "\n"


def run_suite(cfg: RunConfig, grid_scale=1) -> SuiteResult:
    res = SuiteResult()
    surfaces = {}
    for check in cfg.checks:
        scfg = check.surface or cfg.surface
        key = scfg.model_dump_json()
        if key not in surfaces:
            surfaces[key] = build_surface(scfg)
        M = surfaces[key]
        gcfg = check.grid or cfg.grid
        grid = build_grid(gcfg, cfg.workers)
        if grid_scale != 1:
            grid = GridSpec(tuple(n * grid_scale for n in grid.shape), grid.order,
                            grid.subcells, grid.workers)
        try:
            rep = run_check(M, check, grid, cfg.seed)
        except HypothesisViolation as exc:
            res.violations.append({"name": check.name, "message": str(exc),
                                   "details": exc.details})
            continue
        except ConfigurationError as exc:
            res.errors.append({"name": check.name, "message": str(exc)})
            continue
        V.apply_tolerances(rep, cfg.tolerances.abs, cfg.tolerances.equality_rtol)
        res.reports.append(rep)
    return res


def write_outputs(cfg: RunConfig, res: SuiteResult, base: Path):
    out = cfg.outputs
    report_path = _resolve(base, out.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(res.to_json())
    written = [report_path]
    if out.profiles_dir:
        pdir = _resolve(base, out.profiles_dir)
        for rep in res.reports:
            for key, prof in rep.profiles.items():
                pdir.mkdir(parents=True, exist_ok=True)
                path = pdir / f"{rep.name}_{key}.csv"
                prof.to_csv(path)
                written.append(path)
    if out.plots_dir:
        pdir = _resolve(base, out.plots_dir)
        for rep in res.reports:
            for key, prof in rep.profiles.items():
                pdir.mkdir(parents=True, exist_ok=True)
                path = pdir / f"{rep.name}_{key}.svg"
                plot_profile(prof, path, f"{rep.name}: {key}(r)")
                written.append(path)
    return written


def _resolve(base: Path, p):
    p = Path(p)
    return p if p.is_absolute() else base / p


def _svg_figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed hash salt keeps the SVG bytes reproducible
    matplotlib.rcParams["svg.hashsalt"] = "curvlab"
    return plt


def plot_profile(profile, path, title):
    plt = _svg_figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    vals = np.asarray(profile.values, dtype=float)
    vals = vals if vals.ndim == 1 else vals[:, 0]
    ax.plot(profile.radii, vals, marker="o", ms=3)
    ax.set_xlabel("r")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_refinement(table, path):
    plt = _svg_figure()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for name, rows in table.items():
        n = [r["nodes"] for r in rows]
        s = [abs(r["slack"]) if r["slack"] != 0 else np.nan for r in rows]
        ax.loglog(n, s, marker="o", label=name)
    ax.set_xlabel("nodes on first axis")
    ax.set_ylabel("|slack|")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def observed_orders(values):
    """log2 ratios of successive differences of a sequence at doubling resolutions."""
    v = np.asarray(values, dtype=float)
    d = np.abs(np.diff(v))
    orders = []
    for a, b in zip(d[:-1], d[1:]):
        if b == 0 or b < 1e-14 * max(1.0, np.abs(v).max()):
            orders.append(math.inf)
        elif a == 0:
            orders.append(math.nan)
        else:
            orders.append(math.log2(a / b))
    return orders


def residual_orders(values):
    """log2 ratios of a sequence converging to zero."""
    v = np.abs(np.asarray(values, dtype=float))
    out = []
    for a, b in zip(v[:-1], v[1:]):
        if b < 1e-15 * max(1.0, a):
            out.append(math.inf)
        else:
            out.append(math.log2(a / b))
    return out


def refine_suite(cfg: RunConfig, levels: int):
    """Rerun every check at ``levels`` doubling grids; returns a per-check table."""
    if levels < 2:
        raise ConfigurationError("refine needs at least two levels")
    table = {}
    status = EXIT_OK
    for lev in range(levels):
        res = run_suite(cfg, grid_scale=2 ** lev)
        if res.errors:
            return table, {}, EXIT_ERROR
        status = max(status, res.exit_code)
        for rep in res.reports:
            row = {"grid": rep.grid, "nodes": int(rep.grid.split("x")[0]), "lhs": rep.lhs,
                   "rhs": rep.rhs, "slack": rep.slack, "verdict": rep.verdict}
            if "residual" in rep.params:
                row["residual"] = rep.params["residual"]
                row["rel_residual"] = rep.params["rel_residual"]
            table.setdefault(rep.name, []).append(row)
    orders = {}
    for name, rows in table.items():
        if "residual" in rows[0]:
            orders[name] = residual_orders([r["residual"] for r in rows])
        else:
            orders[name] = observed_orders([r["slack"] for r in rows])
    return table, orders, status


def _load(config):
    try:
        return load_config(config)
    except ConfigurationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Curvature functionals and inequality checks on parametric hypersurfaces."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
def run(config):
    """Run the checks listed in CONFIG and write the JSON report."""
    cfg = _load(config)
    try:
        res = run_suite(cfg)
    except CurvlabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    for path in write_outputs(cfg, res, Path.cwd()):
        log.info("wrote %s", path)
    for rep in res.reports:
        click.echo(f"{rep.name:32s} {rep.verdict:13s} lhs={rep.lhs:.10g} rhs={rep.rhs:.10g} "
                   f"slack={rep.slack:.3e}")
    for v in res.violations:
        click.echo(f"{v['name']:32s} {'Hypothesis':13s} {v['message']}")
    for e in res.errors:
        click.echo(f"{e['name']:32s} {'Error':13s} {e['message']}", err=True)
    sys.exit(res.exit_code)


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--levels", default=3, show_default=True, type=int,
              help="Number of grids, each twice as fine as the previous.")
@click.option("--output", "-o", default=None, help="Write the table as JSON here.")
@click.option("--plot", default=None, help="Write a slack-vs-resolution SVG here.")
def refine(config, levels, output, plot):
    """Rerun CONFIG at doubling grids and print observed convergence orders."""
    cfg = _load(config)
    try:
        table, orders, status = refine_suite(cfg, levels)
    except CurvlabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    if status == EXIT_ERROR and not table:
        click.echo("error: configuration problem while refining", err=True)
        sys.exit(EXIT_ERROR)
    for name, rows in table.items():
        click.echo(name)
        for r in rows:
            extra = f" rel_residual={r['rel_residual']:.3e}" if "rel_residual" in r else ""
            click.echo(f"  {r['grid']:>12s} slack={r['slack']: .6e} {r['verdict']}{extra}")
        click.echo("  orders: " + ", ".join(f"{o:.3f}" for o in orders[name]))
    if output:
        Path(output).write_text(json.dumps(V._jsonable({"table": table, "orders": orders}),
                                           indent=2, sort_keys=True) + "\n")
    if plot:
        plot_refinement(table, plot)
    sys.exit(status)


@main.command("list-fixtures")
def list_fixtures():
    """List the named fixtures usable in configs."""
    for name, entry in CATALOG.items():
        tags = f" [{', '.join(entry.tags)}]" if entry.tags else ""
        click.echo(f"{name:18s} {entry.description}{tags}")


@main.command("export-profile")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--check", "check_name", required=True, help="Name (or label) of the check.")
@click.option("--output", "-o", default=None, help="CSV path (default: stdout).")
def export_profile(config, check_name, output):
    """Run one profile check from CONFIG and export its radial profile as CSV."""
    cfg = _load(config)
    chosen = [c for c in cfg.checks if c.name == check_name]
    if not chosen:
        click.echo(f"error: no check named {check_name!r}", err=True)
        sys.exit(EXIT_ERROR)
    check = chosen[0]
    try:
        M = build_surface(check.surface or cfg.surface)
        rep = run_check(M, check, build_grid(check.grid or cfg.grid, cfg.workers), cfg.seed)
    except CurvlabError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_ERROR)
    if not rep.profiles:
        click.echo(f"error: check {check_name!r} produces no radial profile", err=True)
        sys.exit(EXIT_ERROR)
    prof = next(iter(rep.profiles.values()))
    if output:
        prof.to_csv(output)
    else:
        click.echo(prof.to_csv(None), nl=False)
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
