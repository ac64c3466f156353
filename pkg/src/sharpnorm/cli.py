"""Command-line runs of every verification, with human, CSV or JSON output.

Each command collects named checks; the exit code is 0 exactly when all of
them pass.  JSON payloads carry ``"schema": 1`` and keep everything that
varies between runs under ``"timestamp"``, so two runs with the same
settings give identical payloads apart from that field.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import time
from datetime import datetime, timezone

import click
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .kernels import (
    FINE_STRUCTURE,
    SHARP_CONSTANT,
    DomainError,
    KernelSpec,
    PhysicalParams,
    critical_charge,
    dominance_check,
    g0,
    g1,
)
from .quadrature import QuadratureError, QuadSpec, integrate_semi_infinite
from .schur import (
    AnalysisFailure,
    UnboundedAbove,
    F,
    WeightPair,
    closed_form_h0_integral,
    schur_bound,
    schur_rhs_homogeneous,
    sup_F_analysis,
)
from .spectral import (
    build_nystrom,
    export_csv,
    extremal_escape_diagnostic,
    fit_effective_length,
    largest_eigenvalue,
    mass_median,
)
from .variational import ChiOverSqrt, fit_log_deficit, random_bumps, rayleigh_quotient, reference_norm, stability_check

SCHEMA_VERSION = 1
KERNELS = ("t", "t0", "g0", "g1")


class Run:
    """Accumulates checks, summary values and table rows for one command."""

    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = config
        self.checks: list[dict] = []
        self.data: dict = {}
        self.header: list[str] = []
        self.rows: list[list] = []
        self.started = time.perf_counter()

    def check(self, name: str, passed: bool, value=None, detail: str = "") -> bool:
        self.checks.append({"name": name, "passed": bool(passed), "value": value, "detail": detail})
        return bool(passed)

    def fail(self, name: str, exc: Exception) -> None:
        self.check(name, False, None, f"{type(exc).__name__}: {exc}")

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def payload(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "command": self.command,
            "version": __version__,
            "config": self.config,
            "passed": self.passed,
            "checks": self.checks,
            "data": self.data,
            "table": {"columns": self.header, "rows": self.rows},
            "timestamp": {
                "utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "wall_time_s": round(time.perf_counter() - self.started, 3),
            },
        }


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null
    with a sibling ``<key>_reason``."""
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            v = _clean(v)
            if isinstance(v, _NonFinite):
                out[k] = None
                out[f"{k}_reason"] = v.reason
            else:
                out[k] = v
        return out
    if isinstance(obj, (list, tuple)):
        return [None if isinstance(v, _NonFinite) else v for v in map(_clean, obj)]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else _NonFinite(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


class _NonFinite:
    def __init__(self, x: float):
        self.reason = "nan" if math.isnan(x) else ("+inf" if x > 0 else "-inf")


def _render(run: Run, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_clean(run.payload()), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(run.header)
        for row in run.rows:
            writer.writerow(["%.17g" % v if isinstance(v, float) else v for v in row])
        return buf.getvalue()
    lines = [f"sharpnorm {run.command}  (version {__version__})"]
    for key, val in run.data.items():
        if not isinstance(val, (list, dict)):
            lines.append(f"  {key} = {val}")
    for c in run.checks:
        mark = "PASS" if c["passed"] else "FAIL"
        extra = f" [{c['value']}]" if c["value"] is not None else ""
        lines.append(f"{mark}  {c['name']}{extra}  {c['detail']}".rstrip())
    ok = sum(c["passed"] for c in run.checks)
    lines.append(f"{ok}/{len(run.checks)} checks passed")
    return "\n".join(lines) + "\n"


def _finish(ctx: click.Context, run: Run) -> None:
    opts = ctx.obj
    text = _render(run, opts["format"])
    if opts["output"]:
        with open(opts["output"], "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        if opts["format"] != "human":
            click.echo(_render(run, "human"), nl=False)
    else:
        click.echo(text, nl=False)
    ctx.exit(0 if run.passed else 1)


def _option_names(command: click.Command) -> dict[str, str]:
    names = {}
    for param in command.params:
        for opt in getattr(param, "opts", []):
            names[opt.lstrip("-").replace("-", "_").lower()] = param.name
    return names


def _load_config(ctx, param, path):
    """Flat ``key = value`` file; keys are option names (with - or _)."""
    if not path:
        return path
    flat = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise click.BadParameter(f"line {lineno}: expected key=value", param=param)
            key, value = (part.strip() for part in line.split("=", 1))
            flat[key.replace("-", "_").lower()] = value

    def defaults(command):
        names = _option_names(command)
        return {names[k]: v for k, v in flat.items() if k in names}

    commands = getattr(ctx.command, "commands", {})
    unknown = set(flat) - set(_option_names(ctx.command)).union(*(_option_names(c) for c in commands.values()))
    if unknown:
        raise click.BadParameter(f"unknown keys: {', '.join(sorted(unknown))}", param=param)
    ctx.default_map = {**defaults(ctx.command), **{name: defaults(c) for name, c in commands.items()}}
    return path


def _spec(ctx) -> QuadSpec:
    return QuadSpec(rel_tol=ctx.obj["rel_tol"], abs_tol=ctx.obj["abs_tol"])


def _params(ctx) -> PhysicalParams:
    return PhysicalParams(alpha=ctx.obj["alpha"])


def _config(ctx, **local) -> dict:
    return {**{k: v for k, v in ctx.obj.items() if k not in ("output",)}, **local}


def _kernel(name: str, factor: float) -> KernelSpec:
    if name == "t":
        return KernelSpec("t", factor=factor)
    if name == "t0":
        return KernelSpec("t0", factor=factor)
    return KernelSpec.homogeneous(int(name[1:]), factor)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config, is_eager=True,
              expose_value=False, help="Flat key=value file supplying option defaults.")
@click.option("--format", "fmt", type=click.Choice(["human", "csv", "json"]), default="human", show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Write the payload here.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for randomized suites.")
@click.option("--rel-tol", type=click.FloatRange(min=0, min_open=True), default=1e-10, show_default=True)
@click.option("--abs-tol", type=click.FloatRange(min=0, min_open=True), default=1e-14, show_default=True)
@click.option("--alpha", type=click.FloatRange(0, 1, min_open=True, max_open=True), default=FINE_STRUCTURE,
              show_default=True, help="Fine-structure constant.")
@click.version_option(__version__, prog_name="sharpnorm")
@click.pass_context
def main(ctx, fmt, output, seed, rel_tol, abs_tol, alpha):
    """Numerical checks of the sharp norm pi^2/4 + 1 of the reduced
    Brown-Ravenhall kernel."""
    ctx.obj = {"format": fmt, "output": output, "seed": seed, "rel_tol": rel_tol, "abs_tol": abs_tol,
               "alpha": alpha}
    threads = os.environ.get("SHARPNORM_THREADS")
    if threads:
        ctx.with_resource(threadpool_limits(limits=int(threads)))


@main.command()
@click.option("--check-tol", type=float, default=1e-8, show_default=True, help="Allowed relative delta.")
@click.pass_context
def constants(ctx, check_tol):
    """Closed-form constants and their quadrature counterparts."""
    run = Run("constants", _config(ctx, check_tol=check_tol))
    spec = _spec(ctx)
    alpha = ctx.obj["alpha"]
    zc = critical_charge(alpha)
    run.data.update(
        {"sharp_constant": SHARP_CONSTANT, "pi2_over_2": math.pi**2 / 2, "two": 2.0, "alpha": alpha,
         "critical_charge": zc}
    )
    run.header = ["quantity", "computed", "closed_form", "rel_delta"]

    def compare(name, compute, exact):
        try:
            val = compute()
        except QuadratureError as exc:
            run.fail(name, exc)
            run.rows.append([name, math.nan, exact, math.nan])
            return
        delta = abs(val - exact) / abs(exact)
        run.rows.append([name, val, exact, delta])
        run.check(name, delta <= check_tol, delta, f"computed {val:.15g}, closed form {exact:.15g}")

    def row_integral(g):
        return lambda: integrate_semi_infinite(lambda u: np.asarray(g(u)) / u, spec.with_points(1.0)).value

    compare("int g0(u)/u du", row_integral(g0), math.pi**2 / 2)
    compare("int g1(u)/u du", row_integral(g1), 2.0)
    for x in (0.1, 0.5, 1.0, 2.0, 10.0, 100.0):
        compare(
            f"int y/(y^2+1) g0(y/x) dy at x={x:g}",
            lambda x=x: (x / (x * x + 1)) * schur_rhs_homogeneous(g0, lambda y: y / (y * y + 1), x, spec),
            closed_form_h0_integral(x),
        )
        compare(
            f"int g1(y/x)/y dy at x={x:g}",
            lambda x=x: schur_rhs_homogeneous(g1, lambda y: 1.0 / y, x, spec) / x,
            2.0,
        )
    _finish(ctx, run)


@main.command()
@click.option("--weights", type=click.Choice(["optimal", "unweighted", "table"]), default="optimal", show_default=True)
@click.option("--table", "table_path", type=click.Path(exists=True, dir_okay=False),
              help="CSV with columns x,h0,h1 (for --weights table).")
@click.option("--grid-points", type=click.IntRange(min=400), default=400, show_default=True)
@click.option("--sup-tol", type=float, default=1e-7, show_default=True)
@click.pass_context
def schur(ctx, weights, table_path, grid_points, sup_tol):
    """Weighted Schur bound and, for the default weights, the analysis of its supremum."""
    run = Run("schur", _config(ctx, weights=weights, table=table_path, grid_points=grid_points, sup_tol=sup_tol))
    spec = _spec(ctx)
    if weights == "optimal":
        pair = WeightPair.optimal()
    elif weights == "unweighted":
        pair = WeightPair.unweighted()
    else:
        if not table_path:
            raise click.UsageError("--weights table needs --table")
        with open(table_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        pair = WeightPair.from_table(*([float(r[k]) for r in rows] for k in ("x", "h0", "h1")))
    grid = np.geomspace(1e-4, 1e4, grid_points)
    try:
        rep = schur_bound(pair, spec, grid=grid)
    except (QuadratureError, UnboundedAbove, ValueError) as exc:
        run.fail("schur bound", exc)
        _finish(ctx, run)
        return
    run.data.update(rep.as_dict())
    run.data["weights"] = list(pair.labels)
    if weights == "optimal":
        closed = F(grid)
        delta = rep.values - closed
        run.header = ["x", "F_closed", "F_quadrature", "delta"]
        run.rows = [[float(x), float(c), float(q), float(d)] for x, c, q, d in zip(grid, closed, rep.values, delta)]
        run.check("sup equals pi^2/4 + 1", abs(rep.sup_value - SHARP_CONSTANT) <= sup_tol,
                  rep.sup_value - SHARP_CONSTANT, f"sup = {rep.sup_value:.12g}")
        run.check("supremum not attained", not rep.attained)
        run.check("F below pi^2/4 + 1 on the grid", bool(np.all(closed < SHARP_CONSTANT)),
                  float(np.max(closed)), f"{grid.size} points")
        run.check("quadrature matches F", bool(np.max(np.abs(delta) / closed) <= 1e-8),
                  float(np.max(np.abs(delta) / closed)))
        try:
            ana = sup_F_analysis()
            run.data["roots"] = [list(r) for r in ana.roots]
            run.check("two roots isolated with sign pattern (-, +, -)", True, None,
                      ", ".join(f"v in [{a:.13f}, {b:.13f}]" for a, b in ana.roots))
        except AnalysisFailure as exc:
            run.fail("two roots isolated with sign pattern (-, +, -)", exc)
    else:
        run.header = ["x", "bound_quadrature"]
        run.rows = [[float(x), float(v)] for x, v in zip(grid, rep.values)]
        run.check("finite supremum", math.isfinite(rep.sup_value), rep.sup_value)
        if weights == "unweighted":
            run.check("bound exceeds pi^2/4 + 1", rep.sup_value > SHARP_CONSTANT, rep.sup_value)
    _finish(ctx, run)


@main.command()
@click.option("--kernel", type=click.Choice(KERNELS), default="t", show_default=True)
@click.option("--factor", type=float, default=1.0, show_default=True)
@click.option("--deltas", default="1e2,1e3,1e4,1e5,1e6", show_default=True, help="Comma-separated, increasing.")
@click.option("--fit-tol", type=float, default=0.02, show_default=True)
@click.pass_context
def rayleigh(ctx, kernel, factor, deltas, fit_tol):
    """Quotients at chi_(1,delta)/sqrt(x) and their 1/ln(delta) extrapolation."""
    ds = _floats(deltas)
    run = Run("rayleigh", _config(ctx, kernel=kernel, factor=factor, deltas=ds, fit_tol=fit_tol))
    spec = _spec(ctx)
    k = _kernel(kernel, factor)
    bound = reference_norm(k, spec)
    run.data["bound"] = bound
    run.header = ["delta", "quotient", "deficit"]
    qs = []
    for d in ds:
        try:
            q = rayleigh_quotient(k, ChiOverSqrt(d), spec)
        except (QuadratureError, ValueError) as exc:
            run.fail(f"quotient at delta={d:g}", exc)
            continue
        qs.append((d, q))
        run.rows.append([d, q, bound - q])
    if bound is not None:
        run.check("all quotients below the norm", all(q < bound for _, q in qs), max((q for _, q in qs), default=None))
    run.check("quotients increase with delta", all(b[1] > a[1] for a, b in zip(qs, qs[1:])))
    if len(qs) >= 3:
        limit, coeffs, resid = fit_log_deficit([d for d, _ in qs], [q for _, q in qs])
        run.data.update({"fit_limit": limit, "fit_coeffs": list(coeffs), "fit_residual": resid})
        if bound is not None:
            run.check("fit extrapolates to the norm", abs(limit - bound) <= fit_tol, limit - bound,
                      f"limit {limit:.6f}")
    _finish(ctx, run)


@main.command()
@click.option("--kernel", type=click.Choice(KERNELS), default="t", show_default=True)
@click.option("--factor", type=float, default=1.0, show_default=True)
@click.option("--k-max", type=click.IntRange(min=1), default=3, show_default=True,
              help="Domains [10^-k, 10^k] for k = 1..k-max.")
@click.option("--per-decade", type=click.IntRange(min=8), default=40, show_default=True)
@click.option("--diagonal", type=click.Choice(["product", "ignore"]), default="product", show_default=True)
@click.option("--export", "export_path", type=click.Path(dir_okay=False), help="CSV of the widest matrix.")
@click.pass_context
def nystrom(ctx, kernel, factor, k_max, per_decade, diagonal, export_path):
    """Largest eigenvalue on widening domains and where its eigenvector lives."""
    run = Run("nystrom", _config(ctx, kernel=kernel, factor=factor, k_max=k_max, per_decade=per_decade,
                                 diagonal=diagonal, export=export_path))
    k = _kernel(kernel, factor)
    bound = reference_norm(k, _spec(ctx))
    run.data["bound"] = bound
    run.header = ["eps", "R", "n", "lambda_max", "deficit", "mass_median_log_x"]
    results = []
    for kk in range(1, k_max + 1):
        eps, R = 10.0**-kk, 10.0**kk
        try:
            d = build_nystrom(k, eps, R, per_decade=per_decade, diagonal=diagonal)
            res = largest_eigenvalue(d, tol=1e-10)
        except (ArithmeticError, ValueError) as exc:
            run.fail(f"eigenvalue on [1e-{kk}, 1e{kk}]", exc)
            continue
        results.append(res)
        run.rows.append([eps, R, d.n, res.lambda_max, (bound - res.lambda_max) if bound else math.nan,
                         mass_median(res)])
        if export_path and kk == k_max:
            export_csv(d, export_path)
    lams = [r.lambda_max for r in results]
    if bound is not None:
        run.check("lambda_max below the norm", all(x < bound - 1e-10 for x in lams), max(lams, default=None))
    run.check("lambda_max increases with the domain", all(b > a for a, b in zip(lams, lams[1:])))
    if len(results) >= 3:
        esc = extremal_escape_diagnostic(results)
        run.data["mass_medians"] = esc.medians
        # homogeneous kernels keep the eigenvector centred at x = 1 by symmetry
        if k.family == "t":
            run.check("eigenvector mass escapes to infinity", esc.strictly_increasing, None,
                      "medians " + ", ".join(f"{m:.4f}" for m in esc.medians))
    if len(results) >= 4:
        L = [math.log(r.domain[1] / r.domain[0]) for r in results]
        limit, err = fit_effective_length(L, lams)
        run.data.update({"fit_limit": limit, "fit_error": err})
        if bound is not None:
            run.check("extrapolation consistent with the norm", abs(limit - bound) <= 3 * err, limit - bound,
                      f"limit {limit:.6f} +- {err:.2g}")
    _finish(ctx, run)


@main.command()
@click.option("--lmax", type=click.IntRange(1, 7), default=4, show_default=True)
@click.option("--grid", type=click.IntRange(min=2), default=50, show_default=True)
@click.option("--lo", type=float, default=1e-2, show_default=True)
@click.option("--hi", type=float, default=1e2, show_default=True)
@click.option("--slack", type=float, default=1e-12, show_default=True)
@click.pass_context
def dominance(ctx, lmax, grid, lo, hi, slack):
    """k_{l,s} <= k_{0,1/2} on a log grid of momenta."""
    run = Run("dominance", _config(ctx, lmax=lmax, grid=grid, lo=lo, hi=hi, slack=slack))
    try:
        results = dominance_check(lmax, grid, lo, hi, _params(ctx), slack)
    except DomainError as exc:
        run.fail("dominance", exc)
        _finish(ctx, run)
        return
    run.header = ["l", "s", "max_ratio", "violations"]
    for r in results:
        run.rows.append([r.index.l, r.index.s, r.max_ratio, r.violations])
    total = sum(r.violations for r in results)
    run.data["violations"] = total
    run.check("no violations", total == 0, total, f"{len(results)} channels on a {grid}x{grid} grid")
    _finish(ctx, run)


@main.command()
@click.option("--trials", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--z-frac", "--Z-frac", "z_frac", default="0.3,0.7,1.0", show_default=True,
              help="Comma-separated values of Z/Z_c in [0, 1].")
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.pass_context
def stability(ctx, trials, z_frac, tol):
    """Lower-bound margins for random bump amplitudes up to the critical charge."""
    fracs = _floats(z_frac)
    run = Run("stability", _config(ctx, trials=trials, z_frac=fracs, tol=tol))
    if any(not 0 <= f <= 1 for f in fracs):
        raise click.BadParameter("Z/Z_c must lie in [0, 1]", param_hint="--z-frac")
    params = _params(ctx)
    zc = params.critical_charge
    run.data["critical_charge"] = zc
    run.header = ["trial", "z_frac", "form", "bound", "margin"]
    worst = math.inf
    failures = 0
    for i, bump in enumerate(random_bumps(trials, ctx.obj["seed"])):
        try:
            reports = stability_check(bump, [f * zc for f in fracs], params, _spec(ctx))
        except (QuadratureError, ValueError) as exc:
            failures += 1
            run.fail(f"trial {i}", exc)
            continue
        for f, rep in zip(fracs, reports):
            run.rows.append([i, f, rep.form_value, rep.bound_value, rep.margin])
            worst = min(worst, rep.margin)
    run.data["worst_margin"] = worst
    run.check("all margins nonnegative", worst >= -tol and failures == 0, worst,
              f"{trials} trials x {len(fracs)} charges")
    _finish(ctx, run)


if __name__ == "__main__":
    sys.exit(main())
