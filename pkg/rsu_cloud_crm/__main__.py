#!/usr/bin/env python
import logging
import sys
from pathlib import Path

import click

from rsu_cloud_crm import __version__
from rsu_cloud_crm.exceptions import CrmException, InputError
from rsu_cloud_crm.harness import (
    DEFAULT_K_VALUES,
    DEFAULT_METHODS,
    DEFAULT_SOLVER_THREADS,
    RunSpec,
    compare_methods,
    emit_csv,
    run_trace,
    summarize,
    sweep_k,
)
from rsu_cloud_crm.planner import SelectionPolicy
from rsu_cloud_crm.scenario import default_scenario_path, load_scenario

log = logging.getLogger("rsu_cloud_crm")

POLICY_MODES = {"lex": "lexicographic", "weighted": "weighted"}


class State:
    """Maintain logging level."""

    def __init__(self, log_name="rsu_cloud_crm", level=logging.INFO):
        self.logger = logging.getLogger(log_name)
        self.logger.propagate = False
        for handler in list(self.logger.handlers):
            if handler.name == "CrmStreamHandler":
                self.logger.removeHandler(handler)
        self.stream = logging.StreamHandler()
        self.stream.setFormatter(logging.Formatter("%(levelname)-7s -  %(message)s"))
        self.stream.name = "CrmStreamHandler"
        self.logger.addHandler(self.stream)
        self.logger.setLevel(level)


def verbose_option(f):
    def callback(ctx, param, value):
        state = ctx.ensure_object(State)
        if value:
            state.logger.setLevel(logging.DEBUG)

    return click.option(
        "-v",
        "--verbose",
        is_flag=True,
        expose_value=False,
        help="Enable verbose output",
        callback=callback,
    )(f)


def quiet_option(f):
    def callback(ctx, param, value):
        state = ctx.ensure_object(State)
        if value:
            state.logger.setLevel(logging.ERROR)

    return click.option(
        "-q",
        "--quiet",
        is_flag=True,
        expose_value=False,
        help="Silence warnings",
        callback=callback,
    )(f)


def common_options(f):
    f = verbose_option(f)
    f = quiet_option(f)
    return f


def parse_int_list(value):
    return tuple(int(item) for item in value.split(",") if item.strip())


def parse_seeds(ctx, param, value):
    """A comma separated list of seeds, or a bare count n for seeds 0..n-1."""
    try:
        if "," in value:
            seeds = parse_int_list(value)
        else:
            seeds = tuple(range(int(value)))
    except ValueError:
        raise click.BadParameter(f"expected a seed list or count, got '{value}'")
    if not seeds:
        raise click.BadParameter("at least one seed is required")
    return seeds


def parse_methods(ctx, param, value):
    return tuple(item.strip() for item in value.split(",") if item.strip())


scenario_option = click.option(
    "-s",
    "--scenario",
    type=click.Path(dir_okay=False, path_type=Path),
    default=default_scenario_path,
    show_default="the packaged default scenario",
    help="Scenario JSON file",
)
k_option = click.option(
    "-k", "--k", "K", type=click.IntRange(min=1), default=100, show_default=True
)
seeds_option = click.option(
    "--seeds",
    default="1",
    callback=parse_seeds,
    show_default=True,
    help="Comma separated seeds, or a count n for seeds 0..n-1",
)
omega_option = click.option(
    "--omega", type=click.FloatRange(0, 1), default=0.5, show_default=True
)
policy_option = click.option(
    "--policy",
    type=click.Choice(sorted(POLICY_MODES)),
    default="lex",
    show_default=True,
)
rho_option = click.option(
    "--rho", type=click.FloatRange(0, 1), default=0.5, show_default=True
)
out_option = click.option(
    "-o",
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default="results",
    show_default=True,
)
charts_option = click.option("--charts/--no-charts", default=False, show_default=True)
workers_option = click.option(
    "--workers", type=click.IntRange(min=1), default=1, show_default=True
)
solver_threads_option = click.option(
    "--solver-threads",
    type=click.IntRange(min=1),
    default=DEFAULT_SOLVER_THREADS,
    show_default=True,
    help="Concurrent CBC solves for the exact frontier",
)
timing_option = click.option(
    "--timing", is_flag=True, help="Record wall clock times (output not reproducible)"
)


def _build_spec(
    scenario, methods, K, seeds, omega, policy, rho, out, workers, timing, **extra
):
    try:
        return RunSpec(
            scenario_path=scenario,
            methods=methods,
            K=K,
            seeds=seeds,
            policy=SelectionPolicy(mode=POLICY_MODES[policy], rho=rho, omega=omega),
            out_dir=out,
            workers=workers,
            timing=timing,
            **extra,
        )
    except ValueError as e:
        raise InputError(str(e))


def _write_outputs(rows, out, name, charts):
    emit_csv(rows, out / f"{name}.csv")
    if charts:
        from rsu_cloud_crm.charts import emit_charts

        emit_charts(rows, out)
    if rows:
        click.echo(summarize(compare_methods(rows)))


def _invoke(func, *args):
    """Run `func`, turning unexpected failures into the internal error code."""
    try:
        return func(*args)
    except (CrmException, click.ClickException):
        raise
    except Exception as e:
        log.exception(e)
        raise CrmException(f"internal error: {e}")


class CrmGroup(click.Group):
    """Report every usage error with the input error exit code."""

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as e:
            e.exit_code = InputError.exit_code
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = InputError.exit_code
            raise


@click.group(cls=CrmGroup, context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, "-V", "--version")
@common_options
def cli():
    """Service placement and flow rule reconfiguration planner."""


@cli.command(name="run")
@scenario_option
@click.option(
    "-m",
    "--methods",
    default=",".join(DEFAULT_METHODS),
    callback=parse_methods,
    show_default=True,
    help="heuristic, heuristic-k<K>, exact, purist or purist-delay",
)
@k_option
@seeds_option
@omega_option
@policy_option
@rho_option
@out_option
@charts_option
@workers_option
@solver_threads_option
@timing_option
@common_options
def run_command(
    scenario,
    methods,
    K,
    seeds,
    omega,
    policy,
    rho,
    out,
    charts,
    workers,
    solver_threads,
    timing,
):
    """Run the demand trace under each method and write metrics.csv"""
    run_spec = _build_spec(
        scenario,
        methods,
        K,
        seeds,
        omega,
        policy,
        rho,
        out,
        workers,
        timing,
        solver_threads=solver_threads,
    )
    rows = _invoke(run_trace, run_spec)
    _write_outputs(rows, out, "metrics", charts)


@cli.command(name="sweep-k")
@scenario_option
@click.option(
    "--values",
    default=",".join(str(k) for k in DEFAULT_K_VALUES),
    show_default=True,
    help="Comma separated replication counts",
)
@seeds_option
@omega_option
@policy_option
@rho_option
@out_option
@charts_option
@workers_option
@common_options
def sweep_k_command(scenario, values, seeds, omega, policy, rho, out, charts, workers):
    """Run the heuristic once per K and write sweep_k.csv"""
    try:
        k_values = parse_int_list(values)
    except ValueError:
        raise InputError(f"--values expects integers, got '{values}'")
    if not k_values or min(k_values) < 1:
        raise InputError("--values must be positive integers")
    run_spec = _build_spec(
        scenario,
        ("heuristic",),
        max(k_values),
        seeds,
        omega,
        policy,
        rho,
        out,
        workers,
        False,
    )
    rows = _invoke(sweep_k, run_spec, k_values)
    _write_outputs(rows, out, "sweep_k", charts)


@cli.command(name="validate")
@scenario_option
@common_options
def validate_command(scenario):
    """Validate a scenario file"""
    loaded = load_scenario(scenario)
    click.echo(
        f"{scenario}: {len(loaded.graph.nodes)} nodes, {len(loaded.graph.edges)} "
        f"edges, {len(loaded.services)} services, {len(loaded.trace)} steps"
    )


if __name__ == "__main__":  # pragma: no cover
    sys.exit(cli())
