import functools
import json
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any, Literal

import numpy as np
import rich_click as click
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, ValidationError
from rich.traceback import install

from rcamkdv import __version__, log
from rcamkdv.bounds.boundedness import build_report, tail_bounds
from rcamkdv.errors import ExitCode, InputError, NumericRangeError, ParamsError, RcamError, VerificationError
from rcamkdv.exact.closed_form import ClosedFormContext, ode_residual, profile, profile_window
from rcamkdv.params import BUNDLED_TABLES, ParamRow, Tolerances, bundled_table, load_param_table
from rcamkdv.solver.rcam import DEFAULT_MAX_ORDER, convergence_probes, convergence_table, iterate
from rcamkdv.tools.files import rows_to_csv, safe_label, write_atomic, write_json
from rcamkdv.wave.pde import ThirdDerivativeReading, WaveGridSpec, pde_residual, surface
from rcamkdv.wave.samples import CurveSample

ODE_RANGE = (-40.0, 40.0)
PDE_RANGE = (0.5, 5.0)
WORST_POINTS = 5
FIGURE_POINTS = 2001
BODY_MARGIN = 1.5

OutputFormat = Literal["csv", "json"]
FloatArray = NDArray[np.float64]
Evaluator = Callable[[FloatArray], tuple[Any, Any]]


class RunConfig(BaseModel):
    """Options shared by every subcommand, validated before any work starts."""

    model_config = ConfigDict(frozen=True)

    rows: list[ParamRow]
    source: str
    out: Path
    output_format: OutputFormat = "csv"
    tolerances: Tolerances = Tolerances()
    seed: int = 0


def reports_errors(command: Callable[..., None]) -> Callable[..., None]:
    """Turn escaping errors into one JSON object on standard error and the matching exit code."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            command(*args, **kwargs)
        except RcamError as e:
            log.error(str(e))
            click.echo(json.dumps(e.to_dict()), err=True)
            sys.exit(e.exit_code)
        except OSError as e:
            log.error(f"File I/O error: {e}")
            click.echo(json.dumps({"error": "io-error", "message": str(e)}), err=True)
            sys.exit(ExitCode.INPUT_ERROR)

    return wrapper


params_file_option = click.option(
    "--params-file",
    "-p",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Parameter table (CSV with a header row, or YAML mapping / list of mappings)",
)

table_option = click.option(
    "--table",
    "-t",
    type=click.Choice(BUNDLED_TABLES),
    help="Use a parameter table shipped with rcamkdv instead of --params-file",
)

row_option = click.option(
    "--row",
    "row_labels",
    multiple=True,
    help="Only process rows with this case label (e.g. 'I.(a)'). Can be specified multiple times.",
)

out_option = click.option(
    "--out",
    "-o",
    type=click.Path(file_okay=False, writable=True, path_type=Path),
    default=Path("rcamkdv-output"),
    help="Output directory",
    show_default=True,
)

format_option = click.option(
    "--format",
    "output_format",
    type=click.Choice(["csv", "json"]),
    default="csv",
    help="Format of tables and samples (series state is always JSON)",
    show_default=True,
)

seed_option = click.option(
    "--seed",
    type=int,
    default=0,
    help="Seed for randomized sample points",
    show_default=True,
)


def tolerance_options(command: Callable[..., Any]) -> Callable[..., Any]:
    defaults = Tolerances()
    options = [
        click.option("--ode-tol", type=float, default=defaults.ode, show_default=True, help="ODE residual tolerance"),
        click.option("--pde-tol", type=float, default=defaults.pde, show_default=True, help="PDE residual tolerance"),
        click.option(
            "--series-tol",
            type=float,
            default=defaults.series,
            show_default=True,
            help="Relative tolerance of the partial sum against the exact solution",
        ),
        click.option(
            "--prominence",
            type=float,
            default=defaults.prominence,
            show_default=True,
            help="Hump prominence as a fraction of the global max",
        ),
        click.option(
            "--resonance-tol",
            type=float,
            default=defaults.resonance,
            show_default=True,
            help="Scale of the resonance threshold used for root checks and the series",
        ),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def run_options(command: Callable[..., Any]) -> Callable[..., Any]:
    for option in reversed([params_file_option, table_option, row_option, out_option, format_option, seed_option]):
        command = option(command)
    return tolerance_options(command)


def select_rows(rows: list[ParamRow], labels: tuple[str, ...]) -> list[ParamRow]:
    if not labels:
        return rows
    known = {row.label for row in rows}
    unknown = [label for label in labels if label not in known]
    if unknown:
        raise InputError(f"Unknown row label(s): {', '.join(unknown)}", known=sorted(known))
    return [row for row in rows if row.label in labels]


def build_config(
    params_file: Path | None,
    table: str | None,
    row_labels: tuple[str, ...],
    out: Path,
    output_format: OutputFormat,
    seed: int,
    ode_tol: float,
    pde_tol: float,
    series_tol: float,
    prominence: float,
    resonance_tol: float,
) -> RunConfig:
    """Load the selected rows and validate the shared options."""
    if params_file and table:
        raise InputError("Pass either --params-file or --table, not both")
    try:
        tolerances = Tolerances(
            ode=ode_tol, pde=pde_tol, series=series_tol, prominence=prominence, resonance=resonance_tol
        )
    except ValidationError as e:
        raise ParamsError.from_validation(e) from e

    if params_file:
        rows, source = load_param_table(params_file, tolerances.resonance), str(params_file)
    elif table:
        rows, source = bundled_table(table, tolerances.resonance), table
    else:
        raise InputError("No parameters given: pass --params-file or --table")
    return RunConfig(
        rows=select_rows(rows, row_labels),
        source=source,
        out=out,
        output_format=output_format,
        tolerances=tolerances,
        seed=seed,
    )


def write_report(config: RunConfig, stem: str, rows: list[dict[str, Any]], document: dict[str, Any]) -> Path:
    """Write flat ``rows`` as <stem>.csv, or the full ``document`` as <stem>.json."""
    if config.output_format == "json":
        return write_json(config.out / f"{stem}.json", document)
    return write_atomic(config.out / f"{stem}.csv", rows_to_csv(rows))


def write_sample(config: RunConfig, stem: str, sample: CurveSample) -> Path:
    if config.output_format == "json":
        return write_atomic(config.out / f"{stem}.json", sample.to_json())
    return write_atomic(config.out / f"{stem}.csv", sample.to_csv())


@click.group(context_settings={"auto_envvar_prefix": "rcamkdv"})
@click.option(
    "-l",
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], case_sensitive=False),
    default="INFO",
    help="Log level",
    show_default=True,
)
@click.option(
    "--log-file",
    type=click.Path(dir_okay=False, writable=True, path_type=Path),
    help="Log file",
)
@click.version_option(__version__)
def cli(log_level: str, log_file: Path | None) -> None:
    if log_file:
        file_handler = logging.FileHandler(log_file, mode="w")
        file_handler.setFormatter(logging.Formatter("%(asctime)s:%(levelname)s:%(message)s"))
        log.addHandler(file_handler)

    log.setLevel(log_level.upper())
    if log_level.upper() == "DEBUG":
        _ = install(show_locals=True)


# iterate
# ----------
@cli.command(name="iterate")
@run_options
@click.option(
    "-N",
    "--order",
    type=click.IntRange(min=0),
    default=8,
    help="Number of iterations after the leading term",
    show_default=True,
)
@click.option(
    "--max-order",
    type=click.IntRange(min=0),
    default=DEFAULT_MAX_ORDER,
    help="Refuse deeper iterations than this",
    show_default=True,
)
@click.option(
    "--xi",
    "xi_points",
    type=float,
    multiple=True,
    help="Probe point for the convergence table. Defaults to 5 points where the series ratio is at most 0.05.",
)
@reports_errors
def iterate_cmd(order: int, max_order: int, xi_points: tuple[float, ...], **options: Any) -> None:
    """Run the series iteration and compare partial sums with the exact solution."""
    config = build_config(**options)
    for row in config.rows:
        log.rule(f"Series {row.label}")
        log.key_value("lambda1", f"{row.params.lambda1:.6g}")
        log.key_value("lambda2", f"{row.params.lambda2:.6g}")
        state = iterate(row.params, order, max_order, config.tolerances.resonance)
        stem = safe_label(row.label)
        write_json(config.out / f"series_{stem}.json", {"label": row.label, **state.to_dict()})

        probes = list(xi_points)
        if not probes:
            if row.params.c1 == 0.0 and row.params.c2 == 0.0:
                log.warning(f"{row.label}: zero seed, no convergence probes")
            else:
                probes = convergence_probes(row.params)
        table = convergence_table(state, probes)
        document = {"label": row.label, "order": order, "tolerances": config.tolerances.model_dump(), "rows": table}
        write_report(config, f"convergence_{stem}", table, document)

        final = [r for r in table if r["n"] == order]
        worst = max((max(r["error_U"], r["error_V"]) for r in final), default=0.0)
        limit = config.tolerances.series
        if worst > limit:
            log.warning(f"{row.label}: worst relative error of S_{order} is {worst:.3e} (tolerance {limit:g})")
        else:
            log.check(True, f"{row.label}: {order} iterations, worst relative error of S_{order} = {worst:.3e}")


def _pde_evaluator(row: ParamRow, ctx: ClosedFormContext, reading: ThirdDerivativeReading) -> Evaluator:
    def evaluate(batch: FloatArray) -> tuple[Any, Any]:
        return pde_residual(row.params, batch[..., 0], batch[..., 1], reading, ctx)

    return evaluate


def _finite(value: float) -> float | None:
    return value if np.isfinite(value) else None


def _residuals(evaluate: Evaluator, batch: FloatArray) -> list[tuple[float, float, str]]:
    """Residual pairs for each point along the first axis of ``batch``.

    A point where evaluation leaves the numeric range gets inf residuals and the error kind.
    """
    try:
        r1, r2 = evaluate(batch)
        return [(float(a), float(b), "") for a, b in zip(np.ravel(r1), np.ravel(r2), strict=True)]
    except NumericRangeError:
        log.debug("Vectorized residual failed; evaluating point by point")
    results = []
    for point in batch:
        try:
            a, b = evaluate(point)
            results.append((float(a), float(b), ""))
        except NumericRangeError as e:
            results.append((float("inf"), float("inf"), e.error_kind))
    return results


def _verify_row(row: ParamRow, mode: str, tol: float, batch: FloatArray, evaluate: Evaluator) -> dict[str, Any]:
    results = _residuals(evaluate, batch)
    magnitude = [max(abs(r1), abs(r2)) for r1, r2, _ in results]
    worst = sorted(range(len(results)), key=lambda i: magnitude[i], reverse=True)[:WORST_POINTS]
    max_residual = max(magnitude)
    passed = bool(max_residual < tol)
    log.check(passed, f"{row.label} [{mode}]: max normalized residual {max_residual:.3e}")
    return {
        "label": row.label,
        "mode": mode,
        "tolerance": tol,
        "max_residual": _finite(max_residual),
        "passed": passed,
        "worst_points": [
            {
                "point": batch[i].tolist(),
                "residual_1": _finite(results[i][0]),
                "residual_2": _finite(results[i][1]),
                "error": results[i][2] or None,
            }
            for i in worst
        ],
    }


# verify
# ----------
@cli.command(name="verify")
@run_options
@click.option(
    "--mode",
    type=click.Choice(["ode", "pde", "both"]),
    default="both",
    help="Residuals of the reduced ODE system, of the conformable PDE system, or both",
    show_default=True,
)
@click.option(
    "--samples",
    type=click.IntRange(min=1),
    default=100,
    help="Uniform xi samples in [-40, 40] for the ODE check",
    show_default=True,
)
@click.option(
    "--points",
    type=click.IntRange(min=1),
    default=50,
    help="Random (x, t) points in (0.5, 5]^2 for the PDE check",
    show_default=True,
)
@click.option(
    "--reading",
    type=click.Choice([r.value for r in ThirdDerivativeReading]),
    default=ThirdDerivativeReading.NESTED.value,
    help="Reading of the conformable third x-derivative",
    show_default=True,
)
@click.option(
    "--lambda2-scale",
    type=click.FloatRange(min=0.0, min_open=True),
    default=1.0,
    help="Scale lambda2 inside the solution formulas (fault injection; the check should then fail)",
    show_default=True,
)
@reports_errors
def verify_cmd(mode: str, samples: int, points: int, reading: str, lambda2_scale: float, **options: Any) -> None:
    """Check ODE and PDE residuals of the exact solution."""
    config = build_config(**options)
    tol = config.tolerances
    rng = np.random.default_rng(config.seed)
    third_reading = ThirdDerivativeReading(reading)
    report = []
    for row in config.rows:
        ctx = ClosedFormContext(row.params)
        if lambda2_scale != 1.0:
            ctx = ctx.perturbed(lambda2_scale)
            log.warning(f"{row.label}: lambda2 scaled by {lambda2_scale} inside the solution")

        if mode in ("ode", "both"):
            xi = np.linspace(*ODE_RANGE, samples)
            report.append(_verify_row(row, "ode", tol.ode, xi, functools.partial(ode_residual, ctx)))
        if mode in ("pde", "both"):
            lo, hi = PDE_RANGE
            xt = hi - rng.uniform(0.0, hi - lo, size=(points, 2))
            report.append(_verify_row(row, "pde", tol.pde, xt, _pde_evaluator(row, ctx, third_reading)))

    flat = [{k: v for k, v in entry.items() if k != "worst_points"} for entry in report]
    document = {"source": config.source, "tolerances": tol.model_dump(), "report": report}
    write_report(config, "verify", flat, document)
    if config.output_format == "csv":
        write_json(config.out / "verify_worst_points.json", document)

    failed = [entry for entry in report if not entry["passed"]]
    if failed:
        raise VerificationError(
            f"{len(failed)} residual check(s) above tolerance",
            failures=[
                {"label": entry["label"], "mode": entry["mode"], "worst_points": entry["worst_points"]}
                for entry in failed
            ],
        )
    log.check(True, f"All {len(report)} residual checks passed")


# bounds
# ----------
@cli.command(name="bounds")
@run_options
@click.option(
    "--theorem",
    type=click.Choice(["1", "2"]),
    default="1",
    help="1: conditions on the profile in xi; 2: also the sign of c for the surfaces in (x, t)",
    show_default=True,
)
@reports_errors
def bounds_cmd(theorem: str, **options: Any) -> None:
    """Check the boundedness conditions for every row against its expected sub-case."""
    config = build_config(**options)
    tol = config.tolerances
    if not config.rows:
        log.warning(f"No rows in {config.source}; nothing to check")

    reports = []
    for row in config.rows:
        report = build_report(row.params, int(theorem), tol, row.label, row.expected_subcase)
        reports.append(report)
        message = f"{row.label}: {report.verdict} (expected {report.expected}), Q {report.q_sign.value}"
        log.check(report.matches_expected, message)
        for note in report.notes:
            log.note(note)

    rows = [
        {
            "label": r.label,
            "case": r.case_label.value,
            "subcase": r.subcase.value,
            "verdict": r.verdict,
            "expected": r.expected,
            "matches_expected": r.matches_expected,
            "q_sign": r.q_sign.value,
            "q_min_abs": r.q_min_abs,
            "q_certificate": r.q_certificate.value,
            "humps_U": r.humps_U,
            "humps_V": r.humps_V,
            "tail_ok_U": all(r.tail_ok),
            "tail_ok_V": all(r.tail_ok_V),
        }
        for r in reports
    ]
    document = {
        "source": config.source,
        "theorem": int(theorem),
        "tolerances": tol.model_dump(),
        "reports": [r.to_json_dict() for r in reports],
        "notes": [] if config.rows else ["empty parameter table"],
    }
    write_report(config, "bounds", rows, document)

    if reports:
        log.summary_table("Verdicts", {r.label: r.verdict for r in reports}, ("row", "verdict"))

    mismatched = [r.label for r in reports if not r.matches_expected]
    if mismatched:
        raise VerificationError(f"{len(mismatched)} row(s) do not match their expected sub-case", rows=mismatched)
    log.check(True, f"All {len(reports)} rows match their expected sub-case")


def _profile_for_figure(row: ParamRow, n: int) -> CurveSample:
    """(xi, U, V) on the body of the solution, found from where |U| rises above 1e-4 of its peak."""
    ctx = ClosedFormContext(row.params)
    lo, hi = profile_window(row.params)
    overview = profile(ctx, lo, hi, 4001)
    center, half = tail_bounds(overview.select("U"))
    if half == 0.0:
        lo, hi = ODE_RANGE
    else:
        lo, hi = max(lo, center - BODY_MARGIN * half), min(hi, center + BODY_MARGIN * half)
    sample = profile(ctx, lo, hi, n)
    return CurveSample(sample.header, sample.rows, row.label)


# figures
# ----------
@cli.command(name="figures")
@run_options
@click.option(
    "--kind",
    type=click.Choice(["auto", "profile", "surface", "both"]),
    default="auto",
    help="Profiles in xi, surfaces in (x, t), or both. 'auto' gives surfaces for table2 and profiles otherwise.",
    show_default=True,
)
@click.option("--points", type=click.IntRange(min=3), default=FIGURE_POINTS, help="Profile samples", show_default=True)
@click.option("--x-range", type=(float, float), default=(0.1, 10.0), help="Surface x range", show_default=True)
@click.option("--t-range", type=(float, float), default=(0.1, 10.0), help="Surface t range", show_default=True)
@click.option("--grid", "grid_size", type=(int, int), default=(81, 81), help="Surface nx, nt", show_default=True)
@click.option("--allow-unbounded", is_flag=True, default=False, help="Sample surfaces even if no sub-case holds")
@reports_errors
def figures_cmd(
    kind: str,
    points: int,
    x_range: tuple[float, float],
    t_range: tuple[float, float],
    grid_size: tuple[int, int],
    allow_unbounded: bool,
    **options: Any,
) -> None:
    """Write plot data: one profile file per row and/or one surface file per row."""
    config = build_config(**options)
    if kind == "auto":
        kind = "surface" if config.source == "table2" else "profile"
    try:
        grid = WaveGridSpec(
            x_min=x_range[0], x_max=x_range[1], t_min=t_range[0], t_max=t_range[1], nx=grid_size[0], nt=grid_size[1]
        )
    except ValidationError as e:
        raise InputError(f"Invalid surface grid: {e.errors()[0]['msg']}") from e

    failures: list[dict[str, Any]] = []
    written = 0
    for row in config.rows:
        stem = safe_label(row.label)
        try:
            if kind in ("profile", "both"):
                write_sample(config, f"profile_{stem}", _profile_for_figure(row, points))
                written += 1
            if kind in ("surface", "both"):
                u, v = surface(row.params, grid, require_bounded=not allow_unbounded, label=row.label)
                write_sample(config, f"surface_{stem}", u.join(v))
                written += 1
        except RcamError as e:
            log.check(False, f"{row.label}: {e}")
            failures.append({"label": row.label, "exit_code": e.exit_code, **e.to_dict()})

    log.check(True, f"Wrote {written} file(s) to {config.out}")
    if any(f["error"] == "unbounded-parameters" for f in failures):
        log.hint("Use --allow-unbounded to sample surfaces of rows that match no bounded sub-case")
    if failures:
        error = {
            "error": failures[0]["error"],
            "message": f"{len(failures)} row(s) failed",
            "failures": failures,
        }
        click.echo(json.dumps(error), err=True)
        sys.exit(int(failures[0]["exit_code"]))


if __name__ == "__main__":
    cli()
