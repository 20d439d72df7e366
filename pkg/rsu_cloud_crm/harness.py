"""
Trace runner: replays a demand trace under each deployment strategy and
records one metrics row per (seed, step, method).
"""
import csv
import logging
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from re import compile
from time import perf_counter
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from rsu_cloud_crm import utils
from rsu_cloud_crm.configuration import Configuration, reconfig_report
from rsu_cloud_crm.exceptions import InfeasibleError
from rsu_cloud_crm.planner import (
    SelectionPolicy,
    exact_pof,
    generate_pof,
    purist_cost,
    purist_delay,
    select_configuration,
)
from rsu_cloud_crm.scenario import Scenario, load_scenario, sample_demands

log = logging.getLogger(__name__)

BASE_METHODS = ("heuristic", "exact", "purist", "purist-delay")
DEFAULT_METHODS = ("heuristic", "exact", "purist")
DEFAULT_K_VALUES = (1, 10, 100)
DEFAULT_SOLVER_THREADS = 4
RE_HEURISTIC_K = compile(r"^heuristic-k([1-9][0-9]*)$")


@dataclass(frozen=True)
class MetricsRow:
    seed: int
    step: int
    method: str
    demand_mbps: float
    vm_migrations_added: int = 0
    vm_migrations_eq1_literal: int = 0
    control_plane_ops: int = 0
    host_count: int = 0
    total_infrastructure_delay: float = 0.0
    mean_unit_delay: float = 0.0
    max_edge_utilization: float = 0.0
    wall_time: float = 0.0
    feasible: bool = True


COLUMNS = tuple(f.name for f in fields(MetricsRow))
METRICS = COLUMNS[4:11]


def parse_method(name: str) -> Tuple[str, Optional[int]]:
    """Split a method name into its kind and, for `heuristic-k<K>`, its K."""
    if name in BASE_METHODS:
        return name, None
    match = RE_HEURISTIC_K.match(name)
    if match:
        return "heuristic", int(match.group(1))
    raise ValueError(
        f"unknown method '{name}', expected one of "
        f"{', '.join(BASE_METHODS)} or heuristic-k<K>"
    )


@dataclass(frozen=True)
class RunSpec:
    scenario_path: Path
    methods: Tuple[str, ...] = DEFAULT_METHODS
    K: int = 100
    seeds: Tuple[int, ...] = (0,)
    policy: SelectionPolicy = field(default_factory=SelectionPolicy)
    out_dir: Optional[Path] = None
    # process pool size for the seeds; 1 runs them in this process
    workers: int = 1
    timing: bool = False
    # concurrent CBC solves per exact frontier
    solver_threads: int = DEFAULT_SOLVER_THREADS

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be at least 1, got {self.K}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not self.methods:
            raise ValueError("at least one method is required")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError(f"duplicate methods in {', '.join(self.methods)}")
        for method in self.methods:
            parse_method(method)
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        if self.solver_threads < 1:
            raise ValueError(
                f"solver threads must be at least 1, got {self.solver_threads}"
            )


def _max_utilization(config: Configuration, scenario: Scenario) -> float:
    capacities = scenario.graph.capacities
    loads = config.assignment.edge_loads
    return max((loads[edge] / capacities[edge] for edge in loads), default=0.0)


def _deploy(method, scenario, demands, step, seed, prev, run_spec, solvers=None):
    kind, K = parse_method(method)
    if kind == "heuristic":
        pof = generate_pof(
            scenario,
            demands,
            K or run_spec.K,
            utils.derive_seed(seed, utils.HEURISTIC_STREAM, step),
            step=step,
        )
        return select_configuration(pof, prev, run_spec.policy, scenario)
    if kind == "exact":
        pof = exact_pof(scenario, demands, step=step, executor=solvers)
        return select_configuration(pof, prev, run_spec.policy, scenario)
    if kind == "purist":
        return purist_cost(scenario, demands, step=step)
    return purist_delay(scenario, demands, step=step)


def _solver_pool(run_spec: RunSpec):
    kinds = {parse_method(method)[0] for method in run_spec.methods}
    if "exact" in kinds and run_spec.solver_threads > 1:
        return ThreadPoolExecutor(max_workers=run_spec.solver_threads)
    return nullcontext()


def _replay(method, scenario, run_spec, seed, demands, solvers) -> List[MetricsRow]:
    rows = []
    prev: Optional[Configuration] = None
    for step, average in enumerate(scenario.trace.steps):
        start = perf_counter()
        try:
            config = _deploy(
                method, scenario, demands[step], step, seed, prev, run_spec, solvers
            )
        except InfeasibleError as e:
            log.warning(f"Seed {seed} step {step}: {method} is infeasible, {e}")
            rows.append(MetricsRow(seed, step, method, average, feasible=False))
            continue
        elapsed = perf_counter() - start
        if prev is None:
            added = literal = ops = 0
        else:
            report = reconfig_report(prev, config, run_spec.policy.rho)
            added = report.vm_migrations_added
            literal = report.vm_migrations_eq1_literal
            ops = report.control_plane_ops
        rows.append(
            MetricsRow(
                seed=seed,
                step=step,
                method=method,
                demand_mbps=average,
                vm_migrations_added=added,
                vm_migrations_eq1_literal=literal,
                control_plane_ops=ops,
                host_count=config.host_count,
                total_infrastructure_delay=config.total_delay,
                mean_unit_delay=config.mean_unit_delay,
                max_edge_utilization=_max_utilization(config, scenario),
                wall_time=elapsed if run_spec.timing else 0.0,
            )
        )
        prev = config
    log.info(f"Seed {seed}: {method} done")
    return rows


def _run_seed(scenario: Scenario, run_spec: RunSpec, seed: int) -> List[MetricsRow]:
    # one matrix per (seed, step) shared by every method
    steps = range(len(scenario.trace))
    demands = [sample_demands(scenario, step, seed) for step in steps]
    methods = run_spec.methods
    # each method only depends on its own previous step; timed runs go one by one
    threads = 1 if run_spec.timing else len(methods)
    with _solver_pool(run_spec) as solvers, ThreadPoolExecutor(threads) as pool:
        per_method = pool.map(
            _replay,
            methods,
            [scenario] * len(methods),
            [run_spec] * len(methods),
            [seed] * len(methods),
            [demands] * len(methods),
            [solvers] * len(methods),
        )
        return [row for rows in per_method for row in rows]


def _run_seed_from_path(run_spec: RunSpec, seed: int) -> List[MetricsRow]:
    return _run_seed(load_scenario(run_spec.scenario_path), run_spec, seed)


def run_trace(run_spec: RunSpec) -> List[MetricsRow]:
    """
    Run every method of `run_spec` over the whole trace, once per seed.

    Each CRM method carries its selected configuration to the next step; the
    purist baselines are solved afresh at every step and their reconfiguration
    metrics are the diff of successive solutions. An infeasible step becomes
    a row flagged `feasible=False` and the run goes on.
    """
    scenario = load_scenario(run_spec.scenario_path)
    log.info(
        f"Running {', '.join(run_spec.methods)} over {len(scenario.trace)} steps "
        f"for {len(run_spec.seeds)} seed(s)"
    )
    if run_spec.workers > 1 and len(run_spec.seeds) > 1:
        with ProcessPoolExecutor(max_workers=run_spec.workers) as executor:
            specs = [run_spec] * len(run_spec.seeds)
            per_seed = list(
                executor.map(_run_seed_from_path, specs, run_spec.seeds)
            )
    else:
        per_seed = [_run_seed(scenario, run_spec, seed) for seed in run_spec.seeds]
    order = {method: idx for idx, method in enumerate(run_spec.methods)}
    rows = [row for rows in per_seed for row in rows]
    return sorted(rows, key=lambda row: (row.seed, row.step, order[row.method]))


def sweep_k(
    run_spec: RunSpec, values: Sequence[int] = DEFAULT_K_VALUES
) -> List[MetricsRow]:
    """Run the heuristic alone once per K, as methods `heuristic-k<K>`."""
    if not values:
        raise ValueError("at least one K value is required")
    methods = tuple(f"heuristic-k{k}" for k in values)
    return run_trace(replace(run_spec, methods=methods))


@dataclass(frozen=True)
class MethodSummary:
    method: str
    rows: int
    seeds: int
    infeasible: int
    totals: Dict[str, float]
    means: Dict[str, float]

    def mean_total(self, metric: str) -> float:
        """Per seed total of `metric`, averaged over seeds."""
        return self.totals[metric] / self.seeds


@dataclass(frozen=True)
class Summary:
    methods: Dict[str, MethodSummary]
    # metric -> methods ordered by increasing mean total
    rankings: Dict[str, Tuple[str, ...]]

    def winners(self, metric: str) -> Tuple[str, ...]:
        ranking = self.rankings[metric]
        best = self.methods[ranking[0]].mean_total(metric)
        return tuple(m for m in ranking if self.methods[m].mean_total(metric) == best)

    @property
    def verdicts(self) -> Dict[str, str]:
        return {
            metric: f"{' and '.join(self.winners(metric))} minimizes {metric}"
            for metric in self.rankings
        }


def compare_methods(rows: Iterable[MetricsRow]) -> Summary:
    """
    Totals and means of every metric per method over steps and seeds, the
    infeasible rows left out, with the methods ranked per metric.
    """
    grouped: Dict[str, List[MetricsRow]] = {}
    for row in rows:
        grouped.setdefault(row.method, []).append(row)
    if not grouped:
        raise ValueError("cannot compare an empty run")
    methods = {}
    for method, method_rows in grouped.items():
        feasible = [row for row in method_rows if row.feasible]
        totals = {m: sum(getattr(row, m) for row in feasible) for m in METRICS}
        methods[method] = MethodSummary(
            method=method,
            rows=len(method_rows),
            seeds=len({row.seed for row in method_rows}),
            infeasible=len(method_rows) - len(feasible),
            totals=totals,
            means={m: totals[m] / max(len(feasible), 1) for m in METRICS},
        )
    rankings = {
        metric: tuple(
            sorted(methods, key=lambda m: (methods[m].mean_total(metric), m))
        )
        for metric in METRICS
    }
    return Summary(methods=methods, rankings=rankings)


def summarize(summary: Summary) -> str:
    """Render a comparison as a plain text table followed by the verdicts."""
    width = max(len(method) for method in summary.methods) + 2
    lines = [f"{'metric':<28}" + "".join(f"{m:>{width}}" for m in summary.methods)]
    for metric in METRICS:
        cells = "".join(
            f"{summary.methods[m].mean_total(metric):>{width}.6g}"
            for m in summary.methods
        )
        lines.append(f"{metric:<28}{cells}")
    lines.append("")
    lines.extend(summary.verdicts.values())
    return "\n".join(lines)


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def emit_csv(rows: Iterable[MetricsRow], path) -> Path:
    """Write `rows` with a header in `COLUMNS` order and LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({name: _format(getattr(row, name)) for name in COLUMNS})
    log.info(f"Metrics written to {path}")
    return path


_PARSERS = {
    int: int,
    float: float,
    str: str,
    bool: lambda value: value == "true",
}


def read_csv(path) -> List[MetricsRow]:
    """Parse a file written by `emit_csv` back into rows."""
    types = {f.name: f.type for f in fields(MetricsRow)}
    with Path(path).open(encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"{path} does not have the metrics columns")
        parsers = {name: _PARSERS[types[name]] for name in COLUMNS}
        return [
            MetricsRow(**{name: parsers[name](record[name]) for name in COLUMNS})
            for record in reader
        ]
