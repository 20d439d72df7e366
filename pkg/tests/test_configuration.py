import json
from dataclasses import replace
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from rsu_cloud_crm.configuration import (
    Configuration,
    FlowRule,
    GroupRule,
    canonical_key,
    check_feasibility,
    control_plane_overhead,
    delay_term,
    deployment_objective,
    reconfig_cost,
    reconfig_report,
    to_canonical_json,
    vm_migrations,
)
from rsu_cloud_crm.delay import delay_table, max_delay, path_delay
from rsu_cloud_crm.planner import network_context
from rsu_cloud_crm.routing import Unit, assignment_from_units, route_units
from rsu_cloud_crm.scenario import ServiceSpec, sample_demands
from tests.conftest import demand

E01 = ("0", "1")
E12 = ("1", "2")
E02 = ("0", "2")
TRIANGLE_EDGES = (E01, E12, E02)
INCIDENT = {"0": (E01, E02), "1": (E01, E12), "2": (E12, E02)}
EMPTY = assignment_from_units([], TRIANGLE_EDGES, 1)


def config(hosts=(), flow_rules=(), group_rules=(), assignment=EMPTY):
    return Configuration(
        hosts=frozenset(hosts),
        flow_rules=frozenset(flow_rules),
        group_rules=frozenset(group_rules),
        assignment=assignment,
    )


def hosts(*nodes):
    return {(node, "s") for node in nodes}


def random_config(rng):
    """Up to 20 rules on the triangle, one entry per (switch, service, dest)."""
    keys = [
        (switch, service, destination)
        for switch in "012"
        for service in ("a", "b")
        for destination in "012"
        if destination != switch
    ]
    size = int(rng.integers(0, len(keys) + 1))
    picked = rng.choice(len(keys), size=size, replace=False)
    flow_rules, group_rules = set(), set()
    for idx in picked:
        switch, service, destination = keys[idx]
        first, second = INCIDENT[switch]
        kind = rng.integers(3)
        if kind == 0:
            flow_rules.add(FlowRule(switch, service, destination, first))
        elif kind == 1:
            flow_rules.add(FlowRule(switch, service, destination, second))
        else:
            weight = Fraction(int(rng.integers(1, 4)), 4)
            group_rules.add(
                GroupRule(
                    switch,
                    service,
                    destination,
                    ((first, weight), (second, 1 - weight)),
                )
            )
    nodes = rng.choice(3, size=int(rng.integers(0, 4)), replace=False)
    return config(
        {(str(node), "a") for node in nodes}, flow_rules, group_rules, EMPTY
    )


def oracle_overhead(prev, next):
    """Element by element evaluation of the six rule difference terms."""
    total = 0
    for old, new in ((prev, next), (next, prev)):
        for rule in old.flow_rules:
            if not any(rule == other for other in new.flow_rules):
                total += 1
        for rule in old.group_rules:
            if not any(rule == other for other in new.group_rules):
                total += 1
    for rule in prev.flow_rules:
        for other in next.group_rules:
            if (rule.switch, rule.service, rule.destination) == (
                other.switch,
                other.service,
                other.destination,
            ):
                total += 1
    for rule in prev.group_rules:
        for other in next.flow_rules:
            if (rule.switch, rule.service, rule.destination) == (
                other.switch,
                other.service,
                other.destination,
            ):
                total += 1
    return total


def oracle_migrations(prev, next):
    added = sum(1 for host in next.hosts if host not in prev.hosts)
    removed = sum(1 for host in prev.hosts if host not in next.hosts)
    return added, removed


def test_vm_migrations_examples():
    assert vm_migrations(config(hosts("0")), config(hosts("0"))) == (0, 0)
    assert vm_migrations(config(hosts("0")), config(hosts("0", "1"))) == (1, 0)
    counts = vm_migrations(config(hosts("0", "1")), config(hosts("1", "2")))
    assert counts.added == 1
    assert counts.eq1_literal == 1


def test_control_plane_overhead_examples():
    rule = FlowRule("1", "s", "0", E01)
    before = config(flow_rules=[rule])
    assert control_plane_overhead(before, config(flow_rules=[rule])) == 0

    moved = FlowRule("1", "s", "0", E12)
    assert control_plane_overhead(before, config(flow_rules=[moved])) == 2

    group = GroupRule("1", "s", "0", ((E01, Fraction(1, 2)), (E12, Fraction(1, 2))))
    assert control_plane_overhead(before, config(group_rules=[group])) == 3


def test_reconfig_cost_examples():
    prev = config(hosts("0"), [FlowRule("1", "s", "0", E01)])
    next = config(
        hosts("0", "1"),
        [FlowRule("1", "s", "0", E12), FlowRule("2", "s", "0", E02)],
    )
    assert vm_migrations(prev, next).added == 1
    assert control_plane_overhead(prev, next) == 3
    assert reconfig_cost(prev, next, 1) == 1
    assert reconfig_cost(prev, next, 0) == 3
    assert reconfig_cost(prev, next, 0.5) == 2.0
    report = reconfig_report(prev, next, 0.5)
    assert report.vm_migrations_added == 1
    assert report.vm_migrations_eq1_literal == 0
    assert report.control_plane_ops == 3
    assert report.weighted_cost == 2.0
    with pytest.raises(ValueError):
        reconfig_cost(prev, next, 1.5)


def test_overhead_matches_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        prev, next = random_config(rng), random_config(rng)
        assert control_plane_overhead(prev, next) == oracle_overhead(prev, next)
        assert tuple(vm_migrations(prev, next)) == oracle_migrations(prev, next)
        overhead = control_plane_overhead(prev, next)
        assert overhead == control_plane_overhead(next, prev)
        assert vm_migrations(prev, next).added == vm_migrations(next, prev).eq1_literal
        same_rules = (
            prev.flow_rules == next.flow_rules and prev.group_rules == next.group_rules
        )
        assert (overhead == 0) == same_rules
        assert (vm_migrations(prev, next).added == 0) == (next.hosts <= prev.hosts)


def test_canonical_serialization(triangle, triangle_luts):
    paths = network_context(triangle).paths
    assignment = route_units(
        demand({"0": 1, "1": 4, "2": 2}), {("0", "s0")}, paths, triangle_luts, 3
    )
    first = Configuration.from_assignment({("0", "s0")}, assignment, triangle_luts)
    second = Configuration.from_assignment({("0", "s0")}, assignment, triangle_luts)
    assert to_canonical_json(first) == to_canonical_json(second)
    assert canonical_key(first) == first.canonical
    data = json.loads(first.canonical)
    assert data["hosts"] == [["0", "s0"]]
    assert data["edge_loads_mbps"] == {"0-1": 4, "1-2": 0, "0-2": 2}
    assert first.canonical == json.dumps(data, sort_keys=True, separators=(",", ":"))


def test_canonical_group_weights():
    units = [Unit("1", "s", "0", (E01,))] + [Unit("1", "s", "0", (E12, E02))] * 2
    assignment = assignment_from_units(units, TRIANGLE_EDGES, 1)
    data = json.loads(
        to_canonical_json(
            config(
                hosts("0"),
                [FlowRule("2", "s", "0", E02)],
                [
                    GroupRule(
                        "1", "s", "0", ((E01, Fraction(1, 3)), (E12, Fraction(2, 3)))
                    )
                ],
                assignment,
            )
        )
    )
    assert data["group_rules"][0]["branches"] == [
        {"out_edge": "0-1", "weight": "1/3"},
        {"out_edge": "1-2", "weight": "2/3"},
    ]


def test_deployment_objective_all_local(default_scenario):
    luts = delay_table(default_scenario)
    local = assignment_from_units(
        [], default_scenario.graph.edge_keys, default_scenario.lut_interval
    )
    every_node = {(node, "s0") for node in default_scenario.graph.nodes}
    all_hosts = config(every_node, [], [], local)
    assert deployment_objective(all_hosts, default_scenario, 1) == 10.0

    idle = sum(lut.buckets[0] / max_delay(lut) for lut in luts.values())
    assert deployment_objective(all_hosts, default_scenario, 0.3) == pytest.approx(
        0.3 * 10 + 0.7 * idle
    )
    assert deployment_objective(
        all_hosts, default_scenario, 0.3, idle_edges_contribute=False
    ) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        deployment_objective(all_hosts, default_scenario, -0.1)


def test_deployment_objective_single_loaded_edge(triangle, triangle_luts):
    units = [Unit("1", "s0", "0", (E01,))] * 50
    assignment = assignment_from_units(units, TRIANGLE_EDGES, 1)
    single = config({("0", "s0")}, [], [], assignment)
    lut = triangle_luts[E01]
    expected = (138e-6 + 2 * 74e-6) / max_delay(lut)
    assert deployment_objective(single, triangle, 0) == pytest.approx(expected)
    assert delay_term(single, triangle_luts) == pytest.approx(expected)


def test_deployment_objective_monotone_in_load(triangle, triangle_luts):
    previous = -1
    for count in range(0, 99, 7):
        units = [Unit("1", "s0", "0", (E01,))] * count
        assignment = assignment_from_units(units, TRIANGLE_EDGES, 1)
        single = config({("0", "s0")}, [], [], assignment)
        value = deployment_objective(single, triangle, 0.5)
        assert value >= previous
        previous = value


def test_feasible_routing(default_scenario):
    context = network_context(default_scenario)
    demands = sample_demands(default_scenario, 0)
    active = {(node, "s0") for node in ("0", "3", "5", "7", "9")}
    assignment = route_units(demands, active, context.paths, context.luts, 1)
    configuration = Configuration.from_assignment(active, assignment, context.luts)
    verdict = check_feasibility(configuration, default_scenario)
    assert verdict.feasible
    assert verdict


def test_violation_edge_capacity(triangle):
    units = [Unit("1", "s0", "0", (E01,))] * 100
    assignment = assignment_from_units(units, TRIANGLE_EDGES, 1, demand({"1": 100}))
    verdict = check_feasibility(config({("0", "s0")}, [], [], assignment), triangle)
    assert not verdict
    assert "ii" in verdict.violated


def test_violation_host_routes_own_demand(triangle):
    units = [Unit("1", "s0", "0", (E01,))]
    assignment = assignment_from_units(units, TRIANGLE_EDGES, 1, demand({"1": 1}))
    verdict = check_feasibility(
        config({("0", "s0"), ("1", "s0")}, [], [], assignment), triangle
    )
    assert verdict.violated == {"iv"}


def test_violation_unserved_demand(triangle):
    assignment = assignment_from_units([], TRIANGLE_EDGES, 1, demand({"1": 2}))
    verdict = check_feasibility(config({("0", "s0")}, [], [], assignment), triangle)
    assert verdict.violated == {"i"}
    assert "requests 2 units" in str(verdict.violations[0])


def test_violation_non_host(triangle):
    units = [Unit("1", "s0", "2", (E12,))]
    assignment = assignment_from_units(units, TRIANGLE_EDGES, 1, demand({"1": 1}))
    verdict = check_feasibility(config({("0", "s0")}, [], [], assignment), triangle)
    assert "i" in verdict.violated


def test_violation_qos_bound(triangle, triangle_luts):
    bounded = replace(
        triangle, services=(ServiceSpec("s0", 3, qos_bound=100e-6),)
    )
    units = [Unit("1", "s0", "0", (E12, E02))]
    assignment = assignment_from_units(units, TRIANGLE_EDGES, 1, demand({"1": 1}))
    delay = path_delay(triangle_luts, assignment.edge_loads, (E12, E02))
    assert delay > 100e-6
    verdict = check_feasibility(config({("0", "s0")}, [], [], assignment), bounded)
    assert verdict.violated == {"v"}


def test_violation_host_bound(triangle):
    bounded = replace(triangle, services=(ServiceSpec("s0", 1),))
    verdict = check_feasibility(
        config({("0", "s0"), ("1", "s0")}, [], [], EMPTY), bounded
    )
    assert verdict.violated == {"vi"}


def test_violation_granularity(triangle):
    assignment = replace(EMPTY, unit_loads={E01: 1, E12: 0, E02: 0})
    verdict = check_feasibility(config({("0", "s0")}, [], [], assignment), triangle)
    assert "iii" in verdict.violated


def test_pairwise_subsets_are_counted_once():
    rules = [FlowRule("1", "s", dest, E01) for dest in "02"]
    for size in range(3):
        for subset in combinations(rules, size):
            assert control_plane_overhead(config(flow_rules=subset), config()) == size
