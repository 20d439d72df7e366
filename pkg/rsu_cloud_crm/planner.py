"""
Pareto frontiers of configurations and the selection between them.

Two frontier generators are available: the randomized halving heuristic and
the exact integer program run once per host bound. The selection step then
picks, among the frontier, the configuration closest to the previous one.
"""
import logging
from collections import Counter
from concurrent.futures import Executor
from dataclasses import dataclass
from functools import lru_cache
from math import ceil
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

from rsu_cloud_crm import utils
from rsu_cloud_crm.configuration import (
    Configuration,
    canonical_key,
    check_feasibility,
    control_plane_overhead,
    deployment_objective,
    reconfig_cost,
    vm_migrations,
)
from rsu_cloud_crm.delay import DelayLUT, delay_table
from rsu_cloud_crm.exact import host_lower_bound, solve_deployment
from rsu_cloud_crm.exceptions import InfeasibleError, InstanceTooLargeError
from rsu_cloud_crm.routing import (
    CandidatePaths,
    Unit,
    assignment_from_units,
    enumerate_paths,
    route_units,
)
from rsu_cloud_crm.scenario import DemandMatrix, Edge, Scenario

log = logging.getLogger(__name__)

EXACT_GUARD = 12
SELECTION_MODES = ("lexicographic", "weighted")


@dataclass(frozen=True)
class NetworkContext:
    luts: Dict[Edge, DelayLUT]
    paths: CandidatePaths


@lru_cache(maxsize=32)
def network_context(scenario: Scenario) -> NetworkContext:
    """LUTs and candidate paths of a scenario, computed once."""
    return NetworkContext(
        luts=delay_table(scenario),
        paths=enumerate_paths(scenario.graph, scenario.path_limit),
    )


@dataclass(frozen=True)
class ParetoFrontier:
    """Non-dominated configurations sorted by increasing host count."""

    entries: Tuple[Configuration, ...] = ()

    def __iter__(self) -> Iterator[Configuration]:
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def points(self) -> List[Tuple[int, float]]:
        return [(entry.host_count, entry.total_delay) for entry in self.entries]

    def at(self, host_count: int) -> Optional[Configuration]:
        for entry in self.entries:
            if entry.host_count == host_count:
                return entry
        return None


@dataclass(frozen=True)
class SelectionPolicy:
    mode: str = "lexicographic"
    rho: float = 0.5
    omega: float = 0.5

    def __post_init__(self):
        if self.mode not in SELECTION_MODES:
            raise ValueError(
                f"selection mode must be one of {', '.join(SELECTION_MODES)}, "
                f"got '{self.mode}'"
            )
        for name in ("rho", "omega"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")


def halving_levels(node_count: int) -> List[int]:
    """
    Host count levels of the heuristic: ceil(|V|/2), then halved (rounding
    up) down to 1. A single node graph has the single level 1.
    """
    if node_count < 1:
        raise ValueError(f"the graph needs at least one node, got {node_count}")
    levels = []
    level = node_count
    while level > 1:
        level = ceil(level / 2)
        levels.append(level)
    return levels or [1]


def _draw_hosts(scenario: Scenario, host_count: int, seed: utils.Seed):
    rng = utils.make_rng(utils.derive_seed(seed, utils.HOST_STREAM))
    nodes = scenario.graph.nodes
    hosts = set()
    for service in scenario.services:
        count = min(host_count, service.host_bound)
        for idx in rng.choice(len(nodes), size=count, replace=False):
            hosts.add((nodes[idx], service.id))
    return hosts


def generate_candidate(
    scenario: Scenario,
    demands: DemandMatrix,
    host_count: int,
    seed: utils.Seed,
    step: Optional[int] = None,
) -> Optional[Configuration]:
    """
    Draw `host_count` hosts per service uniformly at random and route every
    unit greedily. Returns None when the demand cannot be routed or the
    result breaks a deployment constraint.
    """
    node_count = len(scenario.graph.nodes)
    if not 1 <= host_count <= node_count:
        raise ValueError(f"host count must lie in [1, {node_count}], got {host_count}")
    context = network_context(scenario)
    hosts = _draw_hosts(scenario, host_count, seed)
    try:
        assignment = route_units(
            demands,
            hosts,
            context.paths,
            context.luts,
            utils.derive_seed(seed, utils.ROUTING_STREAM),
        )
    except InfeasibleError as e:
        log.debug(f"Candidate with {host_count} hosts is infeasible: {e}")
        return None
    config = Configuration.from_assignment(hosts, assignment, context.luts, step)
    verdict = check_feasibility(config, scenario)
    if not verdict:
        log.debug(
            f"Candidate with {host_count} hosts violates "
            f"{', '.join(sorted(verdict.violated))}"
        )
        return None
    return config


def _level_best(candidates: Iterable[Optional[Configuration]]):
    best = None
    for config in candidates:
        if config is None:
            continue
        # strict comparison keeps the earliest replication on ties
        if best is None or config.total_delay < best.total_delay:
            best = config
    return best


def generate_pof(
    scenario: Scenario,
    demands: DemandMatrix,
    K: int,
    seed: utils.Seed,
    step: Optional[int] = None,
    executor: Optional[Executor] = None,
) -> ParetoFrontier:
    """
    Heuristic frontier: for every halving level keep the lowest delay of `K`
    random candidates, then drop the dominated levels.

    Replication `r` of level `h` is seeded from (seed, h, r) alone, so the
    frontier is the same whether or not `executor` runs them concurrently.
    """
    if K < 1:
        raise ValueError(f"K must be at least 1, got {K}")
    kept = []
    for level in halving_levels(len(scenario.graph.nodes)):
        seeds = [utils.derive_seed(seed, level, rep) for rep in range(K)]
        args = ([scenario] * K, [demands] * K, [level] * K, seeds, [step] * K)
        if executor is None:
            candidates = map(generate_candidate, *args)
        else:
            candidates = executor.map(generate_candidate, *args)
        best = _level_best(candidates)
        if best is None:
            log.warning(f"No feasible candidate with {level} hosts out of {K}")
            continue
        log.debug(
            f"Level {level}: best delay {best.total_delay * 1e3:.3f} ms "
            f"with {best.host_count} hosts"
        )
        kept.append(best)
    frontier = pareto_filter(kept)
    if not frontier:
        raise InfeasibleError(
            "every host count level is infeasible, the demand exceeds the network"
        )
    return frontier


def pareto_filter(configs: Iterable[Configuration]) -> ParetoFrontier:
    """
    Keep the configurations no other one dominates on (host count, total
    delay). Entries equal on both keep the smallest canonical serialization.
    """
    ordered = sorted(
        configs, key=lambda c: (c.host_count, c.total_delay, canonical_key(c))
    )
    entries = []
    for config in ordered:
        if entries and config.total_delay >= entries[-1].total_delay:
            continue
        entries.append(config)
    return ParetoFrontier(tuple(entries))


def select_configuration(
    pof: ParetoFrontier,
    prev: Optional[Configuration],
    policy: SelectionPolicy,
    scenario: Optional[Scenario] = None,
) -> Configuration:
    """
    Pick the frontier entry to deploy.

    Without a previous configuration the deployment objective weighted by
    `policy.omega` decides, which needs `scenario`. Otherwise the entry with
    the fewest VM migrations wins, then the fewest control plane operations
    (lexicographic mode), or the lowest weighted reconfiguration cost.
    """
    if not len(pof):
        raise InfeasibleError("cannot select from an empty frontier")
    if prev is None:
        if scenario is None:
            raise ValueError("selecting the first configuration needs the scenario")
        return min(
            pof,
            key=lambda c: (
                deployment_objective(c, scenario, policy.omega),
                canonical_key(c),
            ),
        )
    if policy.mode == "weighted":
        return min(
            pof, key=lambda c: (reconfig_cost(prev, c, policy.rho), canonical_key(c))
        )
    return min(
        pof,
        key=lambda c: (
            vm_migrations(prev, c).added,
            control_plane_overhead(prev, c),
            canonical_key(c),
        ),
    )


def _check_guard(scenario: Scenario, guard: int):
    if len(scenario.graph.nodes) > guard:
        raise InstanceTooLargeError(
            f"exact search is limited to {guard} nodes, the scenario has "
            f"{len(scenario.graph.nodes)}"
        )


def exact_deployment(
    scenario: Scenario,
    demands: DemandMatrix,
    omega: float,
    host_bound: int,
    qos: bool = True,
    guard: int = EXACT_GUARD,
    step: Optional[int] = None,
) -> Configuration:
    """
    Configuration with the minimal deployment objective among those with at
    most `host_bound` hosts per service, over the candidate paths.
    """
    _check_guard(scenario, guard)
    node_count = len(scenario.graph.nodes)
    if not 1 <= host_bound <= node_count:
        raise ValueError(f"host bound must lie in [1, {node_count}], got {host_bound}")
    if not 0 <= omega <= 1:
        raise ValueError(f"omega must lie in [0, 1], got {omega}")
    context = network_context(scenario)
    hosts, units = solve_deployment(
        scenario, demands, context.paths, context.luts, omega, host_bound, qos=qos
    )
    assignment = assignment_from_units(
        units, scenario.graph.edge_keys, scenario.lut_interval, demands
    )
    config = Configuration.from_assignment(hosts, assignment, context.luts, step)
    verdict = check_feasibility(config, scenario)
    ignored = set() if qos else {"v"}
    if verdict.violated - ignored:
        for violation in verdict.violations:
            log.warning(f"Exact deployment violates {violation}")
    log.debug(
        f"Exact deployment (omega={omega}, bound={host_bound}): "
        f"{config.host_count} hosts, {config.total_delay * 1e3:.3f} ms"
    )
    return config


def _hosts_per_service(config: Configuration) -> int:
    return max(Counter(service for _, service in config.hosts).values())


def _try_exact(scenario, demands, bound, guard, step):
    try:
        return exact_deployment(scenario, demands, 0.0, bound, guard=guard, step=step)
    except InfeasibleError as e:
        return e


def exact_pof(
    scenario: Scenario,
    demands: DemandMatrix,
    step: Optional[int] = None,
    guard: int = EXACT_GUARD,
    executor: Optional[Executor] = None,
) -> ParetoFrontier:
    """
    Delay optimal configuration for every host bound 1..|V|, filtered.

    The sweep goes downwards. A deployment found under bound `b` that uses
    only `h` hosts per service is also optimal for every bound in [h, b], so
    the next bound solved is h - 1, and the first infeasible bound ends the
    sweep. Bounds below the capacity lower bound are never solved.

    With an `executor` the remaining bounds are solved ahead concurrently;
    the walk over their results is the same, and so is the frontier.
    """
    _check_guard(scenario, guard)
    top = min(
        len(scenario.graph.nodes),
        max(service.host_bound for service in scenario.services),
    )
    context = network_context(scenario)
    lower = host_lower_bound(scenario, demands, context.luts)
    for service in scenario.services:
        if lower[service.id] > service.host_bound:
            raise InfeasibleError(
                f"service '{service.id}' needs at least {lower[service.id]} hosts "
                f"to absorb its demand, its bound is {service.host_bound}"
            )
    lowest = max(lower.values())
    bounds = range(top, lowest - 1, -1)
    args = (scenario, demands)
    if executor is None:
        pending = {}
    else:
        pending = {
            bound: executor.submit(_try_exact, *args, bound, guard, step)
            for bound in bounds
        }

    configs = []
    bound = top
    while bound >= lowest:
        if bound in pending:
            result = pending[bound].result()
        else:
            result = _try_exact(*args, bound, guard, step)
        if isinstance(result, InfeasibleError):
            log.debug(f"Exact deployment with at most {bound} hosts: {result}")
            break
        configs.append(result)
        bound = min(bound, _hosts_per_service(result)) - 1
    for future in pending.values():
        future.cancel()
    frontier = pareto_filter(configs)
    if not frontier:
        raise InfeasibleError("no host bound admits a feasible deployment")
    return frontier


def purist_cost(
    scenario: Scenario,
    demands: DemandMatrix,
    step: Optional[int] = None,
    guard: int = EXACT_GUARD,
) -> Configuration:
    """
    Cost optimization baseline: the fewest hosts able to carry the demand
    within the service host bounds, whatever the delay and the previous
    configuration.
    """
    return exact_deployment(
        scenario,
        demands,
        1.0,
        len(scenario.graph.nodes),
        qos=False,
        guard=guard,
        step=step,
    )


def purist_delay(
    scenario: Scenario, demands: DemandMatrix, step: Optional[int] = None
) -> Configuration:
    """Delay optimization baseline: every node hosts every service."""
    context = network_context(scenario)
    hosts = {
        (node, service.id)
        for node in scenario.graph.nodes
        for service in scenario.services
    }
    units = [
        Unit(node, service, node)
        for (node, service), count in sorted(demands.units.items())
        for _ in range(count)
    ]
    assignment = assignment_from_units(
        units, scenario.graph.edge_keys, scenario.lut_interval, demands
    )
    return Configuration.from_assignment(hosts, assignment, context.luts, step)
