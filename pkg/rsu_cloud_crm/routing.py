"""
Candidate paths, unit routing and the flow/group rules realizing a routing.

Demand travels in units of one LUT interval. A routing (`Assignment`) lists
every unit with the host serving it and the candidate path it uses; the
switch rules are derived from it and must reproduce its edge loads.
"""
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import (
    AbstractSet,
    Dict,
    FrozenSet,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import networkx as nx
import numpy as np

from rsu_cloud_crm import utils
from rsu_cloud_crm.delay import DelayLUT, edge_delay
from rsu_cloud_crm.exceptions import InfeasibleError
from rsu_cloud_crm.scenario import DemandMatrix, Edge, NetworkGraph, Node

log = logging.getLogger(__name__)

Path = Tuple[Edge, ...]
CandidatePaths = Dict[Tuple[Node, Node], Tuple[Path, ...]]
Host = Tuple[Node, str]


@dataclass(frozen=True)
class Unit:
    """One interval of demand of `service` at `node`, served by `host`."""

    node: Node
    service: str
    host: Node
    path: Path = ()


@dataclass(frozen=True)
class Assignment:
    units: Tuple[Unit, ...]
    # number of units crossing each edge, every edge of the graph present
    unit_loads: Mapping[Edge, int]
    interval: float
    demands: Optional[DemandMatrix] = None

    @property
    def edge_loads(self) -> Dict[Edge, float]:
        """Total load per edge in Mbps."""
        return {edge: count * self.interval for edge, count in self.unit_loads.items()}

    def units_by_demand(self) -> Counter:
        return Counter((unit.node, unit.service) for unit in self.units)


@dataclass(frozen=True)
class FlowRule:
    switch: Node
    service: str
    destination: Node
    out_edge: Edge

    def __post_init__(self):
        if self.switch not in self.out_edge:
            raise ValueError(f"{self.out_edge} is not incident to switch {self.switch}")

    @property
    def key(self) -> Tuple[Node, str, Node]:
        return (self.switch, self.service, self.destination)


@dataclass(frozen=True)
class GroupRule:
    """
    Stochastic multipath entry: traffic for (service, destination) leaving
    `switch` is split over `branches` with exact rational weights.
    """

    switch: Node
    service: str
    destination: Node
    branches: Tuple[Tuple[Edge, Fraction], ...]

    def __post_init__(self):
        if len(self.branches) < 2:
            raise ValueError("a group rule needs at least two branches")
        edges = [edge for edge, _ in self.branches]
        if len(set(edges)) != len(edges):
            raise ValueError(f"duplicate out edges in group rule at {self.switch}")
        for edge, weight in self.branches:
            if self.switch not in edge:
                raise ValueError(f"{edge} is not incident to switch {self.switch}")
            if weight <= 0:
                raise ValueError(f"non-positive weight {weight} on {edge}")
        if sum(weight for _, weight in self.branches) != 1:
            raise ValueError(f"group rule weights at {self.switch} do not sum to 1")

    @property
    def key(self) -> Tuple[Node, str, Node]:
        return (self.switch, self.service, self.destination)


def _edges_of(graph: NetworkGraph, nodes: Sequence[Node]) -> Path:
    return tuple(graph.edge_key(a, b) for a, b in zip(nodes, nodes[1:]))


def enumerate_paths(graph: NetworkGraph, limit: int) -> CandidatePaths:
    """
    Return up to `limit` loopless paths for every ordered node pair.

    Paths are ranked by hop count, ties broken by the node sequence in
    declaration order. A node reaches itself through the single empty path.
    """
    if limit < 1:
        raise ValueError(f"path limit must be at least 1, got {limit}")
    nx_graph = graph.to_networkx()
    paths: CandidatePaths = {}
    for source in graph.nodes:
        for target in graph.nodes:
            if source == target:
                paths[(source, target)] = ((),)
                continue
            found: List[List[Node]] = []
            for nodes in nx.shortest_simple_paths(nx_graph, source, target):
                # the generator is ordered by hop count, keep every path tied
                # with the limit-th one so the tie-break sees all of them
                if len(found) >= limit and len(nodes) > len(found[limit - 1]):
                    break
                found.append(nodes)
            found.sort(
                key=lambda nodes: (len(nodes), [graph.position[n] for n in nodes])
            )
            paths[(source, target)] = tuple(
                _edges_of(graph, nodes) for nodes in found[:limit]
            )
    log.debug(f"Enumerated candidate paths for {len(paths)} node pairs (limit {limit})")
    return paths


def walk(source: Node, path: Path) -> Iterator[Tuple[Node, Edge, Node]]:
    """Yield (switch, out edge, next node) hops of `path` starting at `source`."""
    current = source
    for edge in path:
        u, v = edge
        if current == u:
            following = v
        elif current == v:
            following = u
        else:
            raise ValueError(f"path {path} is not contiguous from {source}")
        yield current, edge, following
        current = following


def path_end(source: Node, path: Path) -> Node:
    end = source
    for _, _, end in walk(source, path):
        pass
    return end


def _delay_matrix(luts: Mapping[Edge, DelayLUT]) -> np.ndarray:
    """
    Stack the LUTs into one (edges + 1) x (buckets + 1) matrix.

    Columns past an edge's last bucket are infinite so an overloaded edge is
    never chosen; the extra last row is a zero-delay pad for short paths.
    """
    width = max(len(lut) for lut in luts.values()) + 1
    table = np.full((len(luts) + 1, width), np.inf)
    for row, lut in enumerate(luts.values()):
        table[row, : len(lut)] = lut.buckets
    table[len(luts), :] = 0.0
    return table


def route_units(
    demands: DemandMatrix,
    hosts: AbstractSet[Host],
    paths: CandidatePaths,
    luts: Mapping[Edge, DelayLUT],
    order_seed: utils.Seed,
) -> Assignment:
    """
    Greedily place every unit of demand on its best (host, path) pair.

    Hosts serve their own demand locally. The remaining units are visited in
    an order drawn from `order_seed`; each one takes the candidate whose path
    delay, with the unit itself added to the current loads, is the lowest.
    Ties are broken at random from the same generator, over candidates
    sorted by (host, path).
    """
    rng = utils.make_rng(order_seed)
    edges = list(luts)
    index = {edge: row for row, edge in enumerate(edges)}
    pad = len(edges)
    table = _delay_matrix(luts)
    loads = np.zeros(len(edges) + 1, dtype=int)

    hosts_by_service = defaultdict(list)
    for node, service in sorted(hosts):
        hosts_by_service[service].append(node)

    units: List[Unit] = []
    pending: List[Tuple[Node, str]] = []
    for (node, service), count in demands.units.items():
        if (node, service) in hosts:
            units.extend(Unit(node, service, node) for _ in range(count))
        else:
            pending.extend([(node, service)] * count)

    options = {}
    for node, service in dict.fromkeys(pending):
        candidates = sorted(
            (host, path)
            for host in hosts_by_service[service]
            for path in paths[(node, host)]
        )
        if not candidates:
            raise InfeasibleError(f"service {service} has no host to serve node {node}")
        hops = max(len(path) for _, path in candidates)
        rows = np.full((len(candidates), hops), pad, dtype=int)
        for row, (_, path) in enumerate(candidates):
            rows[row, : len(path)] = [index[edge] for edge in path]
        options[(node, service)] = (candidates, rows)

    for position in rng.permutation(len(pending)):
        node, service = pending[position]
        candidates, rows = options[(node, service)]
        delays = table[rows, loads[rows] + 1].sum(axis=1)
        best = delays.min()
        if not np.isfinite(best):
            raise InfeasibleError(
                f"no candidate path can carry one more unit of {service} from {node}"
            )
        tied = np.flatnonzero(delays <= best * (1 + 1e-12))
        if len(tied) > 1:
            choice = int(tied[rng.integers(len(tied))])
        else:
            choice = int(tied[0])
        host, path = candidates[choice]
        for edge in path:
            loads[index[edge]] += 1
        units.append(Unit(node, service, host, path))

    return Assignment(
        units=tuple(units),
        unit_loads={edge: int(loads[row]) for row, edge in enumerate(edges)},
        interval=demands.interval,
        demands=demands,
    )


def assignment_from_units(
    units: Sequence[Unit],
    edges: Sequence[Edge],
    interval: float,
    demands: Optional[DemandMatrix] = None,
) -> Assignment:
    """Build an `Assignment`, counting the units crossing each edge."""
    counts = Counter(edge for unit in units for edge in unit.path)
    return Assignment(
        units=tuple(units),
        unit_loads={edge: counts.get(edge, 0) for edge in edges},
        interval=interval,
        demands=demands,
    )


def derive_rules(
    assignment: Assignment,
) -> Tuple[FrozenSet[FlowRule], FrozenSet[GroupRule]]:
    """
    Return the flow rules Y and group rules Z realizing `assignment`.

    Every (switch, service, destination host) with traffic gets one entry: a
    flow rule when all its units leave on one edge, otherwise a group rule
    weighted by the unit counts per out edge.
    """
    out_counts: Dict[Tuple[Node, str, Node], Counter] = defaultdict(Counter)
    for unit in assignment.units:
        for switch, edge, _ in walk(unit.node, unit.path):
            out_counts[(switch, unit.service, unit.host)][edge] += 1

    flow_rules = set()
    group_rules = set()
    for (switch, service, destination), counts in out_counts.items():
        if len(counts) == 1:
            (edge,) = counts
            flow_rules.add(FlowRule(switch, service, destination, edge))
            continue
        total = sum(counts.values())
        branches = tuple(
            (edge, Fraction(count, total)) for edge, count in sorted(counts.items())
        )
        group_rules.add(GroupRule(switch, service, destination, branches))
    return frozenset(flow_rules), frozenset(group_rules)


def _solve_exact(matrix: List[List[Fraction]], rhs: List[Fraction]) -> List[Fraction]:
    """Gauss-Jordan elimination over rationals for a non-singular system."""
    size = len(rhs)
    rows = [list(matrix[i]) + [rhs[i]] for i in range(size)]
    for col in range(size):
        pivot = next(r for r in range(col, size) if rows[r][col] != 0)
        rows[col], rows[pivot] = rows[pivot], rows[col]
        lead = rows[col][col]
        rows[col] = [value / lead for value in rows[col]]
        for r in range(size):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[col])]
    return [rows[i][size] for i in range(size)]


def replay_rules(
    flow_rules: AbstractSet[FlowRule],
    group_rules: AbstractSet[GroupRule],
    assignment: Assignment,
) -> Dict[Edge, Fraction]:
    """
    Push the unit sources of `assignment` through the switch rules.

    For each (service, destination) the throughput of a switch is its own
    originating units plus the weighted share of its upstream switches; the
    system is solved exactly and the per edge unit loads returned.
    """
    tables: Dict[Tuple[str, Node], Dict[Node, List[Tuple[Edge, Fraction]]]]
    tables = defaultdict(dict)
    for rule in flow_rules:
        tables[(rule.service, rule.destination)][rule.switch] = [
            (rule.out_edge, Fraction(1))
        ]
    for rule in group_rules:
        tables[(rule.service, rule.destination)][rule.switch] = list(rule.branches)

    origins = Counter(
        (unit.node, unit.service, unit.host) for unit in assignment.units if unit.path
    )
    loads = {edge: Fraction(0) for edge in assignment.unit_loads}
    for (service, destination), table in tables.items():
        switches = sorted(table)
        position = {switch: idx for idx, switch in enumerate(switches)}
        matrix = [
            [Fraction(int(i == j)) for j in range(len(switches))]
            for i in range(len(switches))
        ]
        rhs = [Fraction(origins.get((s, service, destination), 0)) for s in switches]
        for switch in switches:
            for edge, weight in table[switch]:
                following = edge[1] if edge[0] == switch else edge[0]
                if following in position:
                    matrix[position[following]][position[switch]] -= weight
        throughput = _solve_exact(matrix, rhs)
        for switch in switches:
            for edge, weight in table[switch]:
                loads[edge] = loads.get(edge, Fraction(0)) + (
                    weight * throughput[position[switch]]
                )
    return loads


def unit_delays(
    assignment: Assignment, luts: Mapping[Edge, DelayLUT]
) -> Tuple[float, ...]:
    """Path delay of every unit, evaluated at the final edge loads."""
    loads = assignment.edge_loads
    delays = {edge: edge_delay(luts[edge], load) for edge, load in loads.items()}
    return tuple(sum(delays[edge] for edge in unit.path) for unit in assignment.units)


def total_infrastructure_delay(
    assignment: Assignment, luts: Mapping[Edge, DelayLUT]
) -> float:
    return sum(unit_delays(assignment, luts))
