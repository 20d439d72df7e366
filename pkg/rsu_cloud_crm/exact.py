"""
Mixed-integer deployment model solved with CBC through PuLP.

Variables are host binaries h[m, k] and integral unit counts x[n, k, m, p]
on every candidate path p from n to m (the empty path when n == m). Each
edge load is split into one [0, 1] variable per LUT bucket; the LUT being
convex, the cheapest fill is bucket order and the piecewise-linear delay
equals the LUT at every integral load.
"""
import logging
import os
from collections import defaultdict
from typing import Dict, List, Mapping, Tuple

import pulp

from rsu_cloud_crm.delay import DelayLUT, max_delay
from rsu_cloud_crm.exceptions import InfeasibleError
from rsu_cloud_crm.routing import CandidatePaths, Host, Unit
from rsu_cloud_crm.scenario import DemandMatrix, Edge, Scenario

log = logging.getLogger(__name__)

# slack when pinning the optimum of a stage before the next one
STAGE_TOLERANCE = 1e-7


def _solver(warm=False):
    # CBC on Windows only reads a start file kept on disk
    warm = warm and os.name != "nt"
    return pulp.PULP_CBC_CMD(msg=False, gapRel=0, gapAbs=0, warmStart=warm)


def _solve(problem, objective, stage, warm=False):
    problem.setObjective(objective)
    problem.solve(_solver(warm))
    status = pulp.LpStatus[problem.status]
    if status != "Optimal":
        raise InfeasibleError(f"deployment model is {status.lower()} ({stage} stage)")
    value = pulp.value(objective)
    log.debug(f"Deployment model {stage} stage optimum: {value}")
    return value


def _pin(problem, expression, value, name):
    problem += expression <= value + STAGE_TOLERANCE * max(1.0, abs(value)), name


def is_convex(lut: DelayLUT) -> bool:
    steps = [b - a for a, b in zip(lut.buckets, lut.buckets[1:])]
    return all(b >= a for a, b in zip(steps, steps[1:]))


def solve_deployment(
    scenario: Scenario,
    demands: DemandMatrix,
    paths: CandidatePaths,
    luts: Mapping[Edge, DelayLUT],
    omega: float,
    host_bound: int,
    qos: bool = True,
) -> Tuple[List[Host], List[Unit]]:
    """
    Minimize omega * hosts + (1 - omega) * normalized edge delays.

    Ties are resolved by further stages: the delay term, then the fewest
    hosts, then hosts on the earliest declared nodes. Each service is capped
    by the lower of `host_bound` and its own host bound.
    """
    nodes = scenario.graph.nodes
    edges = list(luts)
    problem = pulp.LpProblem("crm_deployment", pulp.LpMinimize)

    host = {
        (node, service.id): pulp.LpVariable(f"h_{i}_{j}", cat=pulp.LpBinary)
        for i, node in enumerate(nodes)
        for j, service in enumerate(scenario.services)
    }
    routes: Dict[Tuple[str, str, str, int], pulp.LpVariable] = {}
    crossing = defaultdict(list)
    for j, service in enumerate(scenario.services):
        sid = service.id
        for i, node in enumerate(nodes):
            demand = demands.units_of(node, sid)
            if demand == 0:
                continue
            own = []
            for mi, target in enumerate(nodes):
                served = []
                for pi, path in enumerate(paths[(node, target)]):
                    var = pulp.LpVariable(
                        f"x_{j}_{i}_{mi}_{pi}",
                        lowBound=0,
                        upBound=demand,
                        cat=pulp.LpInteger,
                    )
                    routes[(node, sid, target, pi)] = var
                    served.append(var)
                    for edge in path:
                        crossing[edge].append(var)
                own.extend(served)
                problem += (
                    pulp.lpSum(served) <= demand * host[(target, sid)],
                    f"served_by_host_{j}_{i}_{mi}",
                )
            problem += pulp.lpSum(own) == demand, f"demand_{j}_{i}"
            problem += (
                routes[(node, sid, node, 0)] >= demand * host[(node, sid)],
                f"local_{j}_{i}",
            )
        hosts_of_service = pulp.lpSum(host[(node, sid)] for node in nodes)
        bound = min(host_bound, service.host_bound)
        problem += hosts_of_service <= bound, f"bound_{j}"
        problem += hosts_of_service >= 1, f"hosted_{j}"

    delay = {}
    for ei, edge in enumerate(edges):
        lut = luts[edge]
        if not is_convex(lut):
            log.warning(f"LUT of edge {edge} is not convex, the model may be loose")
        fill = [
            pulp.LpVariable(f"z_{ei}_{b}", lowBound=0, upBound=1)
            for b in range(1, len(lut))
        ]
        problem += pulp.lpSum(crossing[edge]) == pulp.lpSum(fill), f"load_{ei}"
        delay[edge] = lut.buckets[0] + pulp.lpSum(
            (lut.buckets[b] - lut.buckets[b - 1]) * fill[b - 1]
            for b in range(1, len(lut))
        )

    if qos:
        big_m = sum(max_delay(lut) for lut in luts.values())
        for (node, sid, target, pi), var in routes.items():
            bound = scenario.service(sid).qos_bound
            path = paths[(node, target)][pi]
            if bound is None or not path:
                continue
            used = pulp.LpVariable(f"u_{var.name[2:]}", cat=pulp.LpBinary)
            problem += var <= demands.units_of(node, sid) * used
            problem += (
                pulp.lpSum(delay[edge] for edge in path) <= bound + big_m * (1 - used)
            )

    host_count = pulp.lpSum(host.values())
    delay_sum = pulp.lpSum(
        (1.0 / max_delay(luts[edge])) * delay[edge] for edge in edges
    )
    objective = omega * host_count + (1 - omega) * delay_sum

    if omega == 1:
        # host counts are integral and the delay term lies in (0, |E|], so a
        # single weighted solve already ranks hosts first and delay second
        _solve(problem, (len(edges) + 1) * host_count + delay_sum, "objective")
        best = round(pulp.value(host_count))
        best_delay = pulp.value(delay_sum)
        _pin(problem, host_count, best, "pin_objective")
    else:
        best = _solve(problem, objective, "objective")
        if omega > 0:
            _pin(problem, objective, best, "pin_objective")
            best_delay = _solve(problem, delay_sum, "delay", warm=True)
        else:
            best_delay = best
    _pin(problem, delay_sum, best_delay, "pin_delay")
    # fewest hosts first, then the lowest node positions
    weight = len(scenario.services) * 2 ** len(nodes)
    _solve(
        problem,
        pulp.lpSum(
            (weight + 2**i) * host[(node, service.id)]
            for i, node in enumerate(nodes)
            for service in scenario.services
        ),
        "tie-break",
        warm=True,
    )

    hosts = [key for key, var in host.items() if var.value() > 0.5]
    units = []
    for (node, sid, target, pi), var in routes.items():
        count = int(round(var.value() or 0))
        path = paths[(node, target)][pi]
        units.extend(Unit(node, sid, target, path) for _ in range(count))
    return hosts, units


def host_lower_bound(
    scenario: Scenario, demands: DemandMatrix, luts: Mapping[Edge, DelayLUT]
) -> Dict[str, int]:
    """
    Per service, the fewest hosts that could possibly absorb its demand.

    A host receives at most its own units plus one full LUT of units over
    each incident edge, so fewer hosts than this count make the model
    infeasible. A shared edge is counted once per host and per service.
    """
    graph = scenario.graph
    intake = {
        node: sum(
            len(luts[graph.edge_key(node, other)]) - 1
            for other in graph.neighbors(node)
        )
        for node in graph.nodes
    }
    bounds = {}
    for service in scenario.services:
        total = sum(demands.units_of(node, service.id) for node in graph.nodes)
        capacities = sorted(
            (
                demands.units_of(node, service.id) + intake[node]
                for node in graph.nodes
            ),
            reverse=True,
        )
        count, absorbed = 1, capacities[0]
        while absorbed < total:
            absorbed += capacities[count]
            count += 1
        bounds[service.id] = count
    return bounds
