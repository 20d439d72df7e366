"""
Statistical trends over many seeds on the packaged default scenario.

These take minutes and are deselected by default, run them with
`pytest -m slow`.
"""
from math import inf

import pytest

from rsu_cloud_crm import utils
from rsu_cloud_crm.configuration import check_feasibility
from rsu_cloud_crm.harness import RunSpec, compare_methods, run_trace, sweep_k
from rsu_cloud_crm.planner import generate_candidate, generate_pof, halving_levels
from rsu_cloud_crm.scenario import default_scenario_path, sample_demands

pytestmark = pytest.mark.slow

SEEDS = tuple(range(30))
K_VALUES = (1, 10, 100)
# a low and a high demand step
TREND_STEPS = (0, 4)


@pytest.fixture(scope="module")
def comparison():
    run_spec = RunSpec(
        scenario_path=default_scenario_path(),
        methods=("heuristic", "exact", "purist"),
        K=100,
        seeds=SEEDS,
        workers=4,
    )
    return compare_methods(run_trace(run_spec))


def test_crm_migrates_less_than_purist(comparison):
    heuristic = comparison.methods["heuristic"]
    exact = comparison.methods["exact"]
    purist = comparison.methods["purist"]
    metric = "vm_migrations_added"
    assert heuristic.mean_total(metric) < purist.mean_total(metric)
    assert exact.mean_total(metric) <= purist.mean_total(metric)


def test_heuristic_pays_more_control_plane_operations(comparison):
    metric = "control_plane_ops"
    heuristic = comparison.methods["heuristic"]
    assert heuristic.mean_total(metric) >= comparison.methods["exact"].mean_total(
        metric
    )


def test_every_frontier_is_pareto_optimal(default_scenario):
    violations = 0
    for seed in range(50):
        for step in range(len(default_scenario.trace)):
            demands = sample_demands(default_scenario, step, seed)
            frontier = generate_pof(
                default_scenario,
                demands,
                10,
                utils.derive_seed(seed, utils.HEURISTIC_STREAM, step),
                step=step,
            )
            points = frontier.points
            for a in points:
                for b in points:
                    if b != a and b[0] <= a[0] and b[1] <= a[1]:
                        violations += 1
            for config in frontier:
                if not check_feasibility(config, default_scenario):
                    violations += 1
    assert violations == 0


def test_more_replications_find_lower_delays(default_scenario):
    for seed in range(10):
        demands = sample_demands(default_scenario, 0, seed)
        frontiers = [
            generate_pof(default_scenario, demands, K, seed) for K in K_VALUES
        ]
        for hosts in (1, 2, 3, 5):
            best = [
                min(
                    (delay for count, delay in frontier.points if count <= hosts),
                    default=float("inf"),
                )
                for frontier in frontiers
            ]
            assert best == sorted(best, reverse=True)


def test_more_replications_lower_the_delay_per_level(default_scenario):
    levels = halving_levels(len(default_scenario.graph.nodes))
    comparisons = violations = 0
    for seed in SEEDS:
        for step in TREND_STEPS:
            demands = sample_demands(default_scenario, step, seed)
            base = utils.derive_seed(seed, utils.HEURISTIC_STREAM, step)
            for level in levels:
                delays = []
                for rep in range(max(K_VALUES)):
                    config = generate_candidate(
                        default_scenario,
                        demands,
                        level,
                        utils.derive_seed(base, level, rep),
                    )
                    delays.append(inf if config is None else config.total_delay)
                # replication r has the same seed for every K
                best = [min(delays[:K]) for K in K_VALUES]
                for few, many in zip(best, best[1:]):
                    comparisons += 1
                    violations += many > few
    assert violations <= 0.05 * comparisons


def test_k_sweep_lowers_reconfiguration():
    run_spec = RunSpec(scenario_path=default_scenario_path(), seeds=SEEDS, workers=4)
    summary = compare_methods(sweep_k(run_spec, values=K_VALUES))
    for metric in ("vm_migrations_added", "control_plane_ops"):
        means = [
            summary.methods[f"heuristic-k{K}"].mean_total(metric) for K in K_VALUES
        ]
        assert means == sorted(means, reverse=True)
