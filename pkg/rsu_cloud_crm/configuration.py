"""
Configurations and reconfiguration overhead.

A configuration is the tuple (X, Y, Z) of service hosts, flow rules and group
rules at one time step, kept together with the routing it was derived from.
"""
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import FrozenSet, Mapping, NamedTuple, Optional, Tuple

from rsu_cloud_crm.delay import (
    DelayLUT,
    delay_table,
    edge_delay,
    load_bucket,
    max_delay,
)
from rsu_cloud_crm.exceptions import DelayError
from rsu_cloud_crm.routing import (  # noqa: F401 (rule types are part of this API)
    Assignment,
    FlowRule,
    GroupRule,
    Host,
    derive_rules,
    path_end,
    unit_delays,
)
from rsu_cloud_crm.scenario import Edge, Scenario

log = logging.getLogger(__name__)

CONSTRAINTS = {
    "i": "demand satisfaction",
    "ii": "edge capacity",
    "iii": "load granularity",
    "iv": "local service at hosts",
    "v": "QoS bound",
    "vi": "host count bound",
}


@dataclass(frozen=True)
class Configuration:
    hosts: FrozenSet[Host]
    flow_rules: FrozenSet[FlowRule]
    group_rules: FrozenSet[GroupRule]
    assignment: Assignment
    # sum of every unit's path delay at the final loads, seconds
    total_delay: float = 0.0
    step: Optional[int] = field(default=None, compare=False)

    @classmethod
    def from_assignment(
        cls,
        hosts,
        assignment: Assignment,
        luts: Mapping[Edge, DelayLUT],
        step: Optional[int] = None,
    ) -> "Configuration":
        flow_rules, group_rules = derive_rules(assignment)
        return cls(
            hosts=frozenset(hosts),
            flow_rules=flow_rules,
            group_rules=group_rules,
            assignment=assignment,
            total_delay=float(sum(unit_delays(assignment, luts))),
            step=step,
        )

    @property
    def host_count(self) -> int:
        return len(self.hosts)

    @property
    def mean_unit_delay(self) -> float:
        units = len(self.assignment.units)
        return self.total_delay / units if units else 0.0

    @cached_property
    def canonical(self) -> str:
        """Byte-stable serialization, also the final tie-breaker everywhere."""
        return to_canonical_json(self)


class MigrationCounts(NamedTuple):
    added: int
    eq1_literal: int


@dataclass(frozen=True)
class ReconfigReport:
    vm_migrations_added: int
    vm_migrations_eq1_literal: int
    control_plane_ops: int
    weighted_cost: float


@dataclass(frozen=True)
class Violation:
    constraint: str
    message: str

    def __str__(self):
        return f"({self.constraint}) {CONSTRAINTS[self.constraint]}: {self.message}"


@dataclass(frozen=True)
class FeasibilityVerdict:
    violations: Tuple[Violation, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def violated(self) -> FrozenSet[str]:
        return frozenset(violation.constraint for violation in self.violations)

    def __bool__(self):
        return self.feasible


def _edge_name(edge: Edge) -> str:
    return f"{edge[0]}-{edge[1]}"


def to_dict(config: Configuration) -> dict:
    assignment = config.assignment
    return {
        "step": config.step,
        "hosts": sorted([node, service] for node, service in config.hosts),
        "flow_rules": sorted(
            (
                {
                    "switch": rule.switch,
                    "service": rule.service,
                    "destination": rule.destination,
                    "out_edge": _edge_name(rule.out_edge),
                }
                for rule in config.flow_rules
            ),
            key=lambda rule: (rule["switch"], rule["service"], rule["destination"]),
        ),
        "group_rules": sorted(
            (
                {
                    "switch": rule.switch,
                    "service": rule.service,
                    "destination": rule.destination,
                    "branches": [
                        {
                            "out_edge": _edge_name(edge),
                            "weight": f"{weight.numerator}/{weight.denominator}",
                        }
                        for edge, weight in rule.branches
                    ],
                }
                for rule in config.group_rules
            ),
            key=lambda rule: (rule["switch"], rule["service"], rule["destination"]),
        ),
        "units": sorted(
            [unit.node, unit.service, unit.host, [_edge_name(e) for e in unit.path]]
            for unit in assignment.units
        ),
        "edge_loads_mbps": {
            _edge_name(edge): load for edge, load in assignment.edge_loads.items()
        },
    }


def to_canonical_json(config: Configuration) -> str:
    return json.dumps(to_dict(config), sort_keys=True, separators=(",", ":"))


def canonical_key(config: Configuration) -> str:
    """Final tie-breaker: the lexicographically smallest serialization wins."""
    return config.canonical


def vm_migrations(prev: Configuration, next: Configuration) -> MigrationCounts:
    """
    Count service host changes between two configurations.

    `added` counts hosts activated in `next`, tear downs being free; the
    `eq1_literal` count is the reverse set difference |X_prev - X_next|.
    """
    return MigrationCounts(
        added=len(next.hosts - prev.hosts),
        eq1_literal=len(prev.hosts - next.hosts),
    )


def control_plane_overhead(prev: Configuration, next: Configuration) -> int:
    """
    Count rule deletions and additions between two configurations.

    Rules of one type are compared on their full content, so a modified rule
    costs a deletion and an addition. A flow rule turning into a group rule
    (or back) at the same (switch, service, destination) key costs one more.
    """
    flow_keys = {rule.key for rule in next.flow_rules}
    group_keys = {rule.key for rule in next.group_rules}
    return (
        len(prev.flow_rules - next.flow_rules)
        + len(next.flow_rules - prev.flow_rules)
        + len(prev.group_rules - next.group_rules)
        + len(next.group_rules - prev.group_rules)
        + sum(1 for rule in prev.flow_rules if rule.key in group_keys)
        + sum(1 for rule in prev.group_rules if rule.key in flow_keys)
    )


def reconfig_cost(prev: Configuration, next: Configuration, rho: float) -> float:
    if not 0 <= rho <= 1:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return rho * vm_migrations(prev, next).added + (1 - rho) * control_plane_overhead(
        prev, next
    )


def reconfig_report(
    prev: Configuration, next: Configuration, rho: float = 0.5
) -> ReconfigReport:
    migrations = vm_migrations(prev, next)
    return ReconfigReport(
        vm_migrations_added=migrations.added,
        vm_migrations_eq1_literal=migrations.eq1_literal,
        control_plane_ops=control_plane_overhead(prev, next),
        weighted_cost=reconfig_cost(prev, next, rho),
    )


def delay_term(
    config: Configuration,
    luts: Mapping[Edge, DelayLUT],
    idle_edges_contribute: bool = True,
) -> float:
    """Sum over edges of the edge delay normalized by the edge's maximum delay."""
    total = 0.0
    for edge, load in config.assignment.edge_loads.items():
        if load == 0 and not idle_edges_contribute:
            continue
        total += edge_delay(luts[edge], load) / max_delay(luts[edge])
    return total


def deployment_objective(
    config: Configuration,
    scenario: Scenario,
    omega: float,
    idle_edges_contribute: bool = True,
) -> float:
    """
    Weighted deployment cost: omega * |X| plus (1 - omega) times the
    normalized delay summed over every edge.
    """
    if not 0 <= omega <= 1:
        raise ValueError(f"omega must lie in [0, 1], got {omega}")
    luts = delay_table(scenario)
    return omega * config.host_count + (1 - omega) * delay_term(
        config, luts, idle_edges_contribute
    )


def check_feasibility(config: Configuration, scenario: Scenario) -> FeasibilityVerdict:
    """Collect every violated deployment constraint; violations are data."""
    violations = []
    assignment = config.assignment
    luts = delay_table(scenario)
    interval = scenario.lut_interval

    # (i) every requested unit is served, by a service host, over a path
    # actually ending at that host
    served = assignment.units_by_demand()
    if assignment.demands is not None:
        requested = {key: n for key, n in assignment.demands.units.items() if n}
        for key in sorted(set(requested) | set(served)):
            if served.get(key, 0) != requested.get(key, 0):
                violations.append(
                    Violation(
                        "i",
                        f"{key[0]}/{key[1]} requests {requested.get(key, 0)} units, "
                        f"{served.get(key, 0)} are served",
                    )
                )
    for unit in assignment.units:
        if (unit.host, unit.service) not in config.hosts:
            violations.append(
                Violation("i", f"unit of {unit.node} is served by non-host {unit.host}")
            )
        try:
            end = path_end(unit.node, unit.path)
        except ValueError as e:
            violations.append(Violation("i", str(e)))
            continue
        if end != unit.host:
            violations.append(
                Violation("i", f"path of a unit from {unit.node} ends at {end}")
            )

    # (ii) and (iii) loads stay below capacity in whole intervals
    overloaded = set()
    for edge, count in assignment.unit_loads.items():
        load = count * interval
        if not isinstance(count, int) or count < 0:
            violations.append(
                Violation("iii", f"load on {_edge_name(edge)} is {count} units")
            )
            continue
        try:
            load_bucket(luts[edge], load)
        except DelayError as e:
            overloaded.add(edge)
            violations.append(Violation("ii", f"{_edge_name(edge)}: {e}"))
    crossings = {edge: 0 for edge in assignment.unit_loads}
    for unit in assignment.units:
        for edge in unit.path:
            crossings[edge] = crossings.get(edge, 0) + 1
    if crossings != dict(assignment.unit_loads):
        violations.append(
            Violation("iii", "edge loads differ from the units crossing each edge")
        )

    # (iv) hosts serve their own demand locally
    for unit in assignment.units:
        if (unit.node, unit.service) in config.hosts and unit.path:
            violations.append(
                Violation(
                    "iv", f"host {unit.node} routes its own {unit.service} demand"
                )
            )

    # (v) QoS bounds, only meaningful on edges inside their capacity
    bounds = {service.id: service.qos_bound for service in scenario.services}
    if not overloaded:
        loads = assignment.edge_loads
        for unit in assignment.units:
            bound = bounds.get(unit.service)
            if bound is None or not unit.path:
                continue
            if any(edge not in loads for edge in unit.path):
                continue
            delay = sum(edge_delay(luts[edge], loads[edge]) for edge in unit.path)
            if delay > bound:
                violations.append(
                    Violation(
                        "v",
                        f"unit {unit.node}->{unit.host} delay {delay * 1e6:.1f} us "
                        f"exceeds {bound * 1e6:.1f} us",
                    )
                )

    # (vi) host count bounds
    for service in scenario.services:
        count = sum(1 for _, sid in config.hosts if sid == service.id)
        if count > service.host_bound:
            violations.append(
                Violation(
                    "vi",
                    f"service {service.id} has {count} hosts, "
                    f"bound {service.host_bound}",
                )
            )
    return FeasibilityVerdict(tuple(violations))
