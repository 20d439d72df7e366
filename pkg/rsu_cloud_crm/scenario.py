"""
Network graph, services, demand trace and the per-node demand sampler.

Every type here is an immutable value: scenarios are hashable so derived
structures (delay tables, candidate paths) can be cached per scenario.
"""
import json
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, Mapping, Optional, Tuple

import networkx as nx
import numpy as np

from rsu_cloud_crm import utils
from rsu_cloud_crm.config import validate_document
from rsu_cloud_crm.delay import QueueParams
from rsu_cloud_crm.exceptions import ScenarioError

log = logging.getLogger(__name__)

Node = str
Edge = Tuple[Node, Node]

DEFAULT_SCENARIO = Path(__file__).resolve().parent / "scenarios" / "default.json"


@dataclass(frozen=True)
class NetworkGraph:
    """
    The undirected RSU cloud: `nodes` in declaration order and `edges` as
    `(u, v, capacity_mbps)` with `u` declared before `v`.
    """

    nodes: Tuple[Node, ...]
    edges: Tuple[Tuple[Node, Node, float], ...]

    @classmethod
    def build(cls, nodes, edges):
        """Normalize edge orientation to the node declaration order."""
        nodes = tuple(nodes)
        position = {node: idx for idx, node in enumerate(nodes)}
        normalized = []
        for u, v, capacity in edges:
            if position[u] > position[v]:
                u, v = v, u
            normalized.append((u, v, capacity))
        return cls(nodes=nodes, edges=tuple(normalized))

    @cached_property
    def position(self) -> Dict[Node, int]:
        return {node: idx for idx, node in enumerate(self.nodes)}

    @cached_property
    def capacities(self) -> Dict[Edge, float]:
        return {(u, v): capacity for u, v, capacity in self.edges}

    @property
    def edge_keys(self) -> Tuple[Edge, ...]:
        return tuple((u, v) for u, v, _ in self.edges)

    def edge_key(self, a: Node, b: Node) -> Edge:
        """Return the canonical key of the edge joining `a` and `b`."""
        key = (a, b) if self.position[a] < self.position[b] else (b, a)
        if key not in self.capacities:
            raise KeyError(f"no edge between '{a}' and '{b}'")
        return key

    def neighbors(self, node: Node) -> Iterator[Node]:
        for u, v, _ in self.edges:
            if u == node:
                yield v
            elif v == node:
                yield u

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.nodes)
        for u, v, capacity in self.edges:
            graph.add_edge(u, v, capacity=capacity)
        return graph

    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())


@dataclass(frozen=True)
class ServiceSpec:
    id: str
    host_bound: int
    # seconds, None when unbounded
    qos_bound: Optional[float] = None


@dataclass(frozen=True)
class DemandTrace:
    steps: Tuple[float, ...]
    sigma: float = 0.05

    def __len__(self):
        return len(self.steps)


@dataclass(frozen=True)
class Scenario:
    graph: NetworkGraph
    services: Tuple[ServiceSpec, ...]
    trace: DemandTrace
    lut_interval: float = 1
    queue_params: QueueParams = QueueParams()
    path_limit: int = 4
    seed: int = 0

    @property
    def service_ids(self) -> Tuple[str, ...]:
        return tuple(service.id for service in self.services)

    def service(self, service_id: str) -> ServiceSpec:
        for service in self.services:
            if service.id == service_id:
                return service
        raise KeyError(service_id)


@dataclass(frozen=True)
class DemandMatrix:
    """
    Per (node, service) demand, kept as integral counts of `interval` units.
    """

    interval: float
    units: Mapping[Tuple[Node, str], int]

    def __getitem__(self, key: Tuple[Node, str]) -> float:
        return self.units.get(key, 0) * self.interval

    @property
    def entries(self) -> Dict[Tuple[Node, str], float]:
        """Demands b_{n,k} in Mbps."""
        return {key: count * self.interval for key, count in self.units.items()}

    def units_of(self, node: Node, service: str) -> int:
        return self.units.get((node, service), 0)

    @property
    def total_units(self) -> int:
        return sum(self.units.values())


def default_topology() -> NetworkGraph:
    """
    Fixed 10 node stand-in for the FDOT RSU deployment: a ring plus the
    chords 0-5, 2-7 and 4-9, every edge a 100 Mbps Fast Ethernet link.
    """
    nodes = [str(i) for i in range(10)]
    edges = [(str(i), str((i + 1) % 10), 100) for i in range(10)]
    edges.extend((str(u), str(v), 100) for u, v in ((0, 5), (2, 7), (4, 9)))
    return NetworkGraph.build(nodes, edges)


def default_scenario_path() -> Path:
    return DEFAULT_SCENARIO


def _us(value):
    return value / 1e6


def _to_us(seconds):
    return round(seconds * 1e6, 6)


def parse_scenario(data, source="<scenario>") -> Scenario:
    """Validate a decoded scenario document and build the `Scenario`."""
    if not isinstance(data, dict):
        raise ScenarioError([("<root>", f"expected a JSON object in {source}")])
    config, errors = validate_document(data, config_file_path=source)
    if errors:
        raise ScenarioError(errors)

    graph = NetworkGraph.build(config["nodes"], config["edges"])
    services = tuple(
        ServiceSpec(
            id=service["id"],
            host_bound=service["host_bound"],
            qos_bound=(
                None
                if service["qos_bound_us"] is None
                else _us(service["qos_bound_us"])
            ),
        )
        for service in config["services"]
    )
    trace = DemandTrace(
        steps=tuple(config["trace"]["steps_mbps"]), sigma=config["trace"]["sigma"]
    )
    queue = config["queue"]
    params = QueueParams(
        processing_delay=_us(queue["processing_delay_us"]),
        packet_size=queue["packet_size_bytes"] * 8,
        ca=queue["ca"],
        cs=queue["cs"],
        propagation_delay=_us(queue["propagation_delay_us"]),
    )
    scenario = Scenario(
        graph=graph,
        services=services,
        trace=trace,
        lut_interval=config["lut_interval_mbps"],
        queue_params=params,
        path_limit=config["path_limit"],
        seed=config["seed"],
    )
    log.debug(
        f"Loaded scenario {source}: {len(graph.nodes)} nodes, {len(graph.edges)} "
        f"edges, {len(services)} services, {len(trace)} steps"
    )
    return scenario


def load_scenario(path) -> Scenario:
    """Load and validate a JSON scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError([(str(path), f"cannot read scenario file: {e}")])
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(
            [(f"{path}:{e.lineno}:{e.colno}", f"parse failure: {e.msg}")]
        )
    return parse_scenario(data, source=str(path))


def emit_scenario(scenario: Scenario) -> dict:
    """Return the JSON document `load_scenario` reads back as `scenario`."""
    params = scenario.queue_params
    return {
        "nodes": list(scenario.graph.nodes),
        "edges": [[u, v, capacity] for u, v, capacity in scenario.graph.edges],
        "services": [
            {
                "id": service.id,
                "host_bound": service.host_bound,
                "qos_bound_us": (
                    None if service.qos_bound is None else _to_us(service.qos_bound)
                ),
            }
            for service in scenario.services
        ],
        "trace": {
            "steps_mbps": list(scenario.trace.steps),
            "sigma": scenario.trace.sigma,
        },
        "lut_interval_mbps": scenario.lut_interval,
        "queue": {
            "processing_delay_us": _to_us(params.processing_delay),
            "packet_size_bytes": params.packet_size // 8,
            "ca": params.ca,
            "cs": params.cs,
            "propagation_delay_us": _to_us(params.propagation_delay),
        },
        "path_limit": scenario.path_limit,
        "seed": scenario.seed,
    }


def dump_scenario(scenario: Scenario, path) -> Path:
    path = Path(path)
    path.write_text(
        json.dumps(emit_scenario(scenario), indent=2) + "\n", encoding="utf-8"
    )
    return path


def sample_demands(
    scenario: Scenario, step_index: int, seed: Optional[int] = None
) -> DemandMatrix:
    """
    Draw b_{n,k} for one trace step.

    Each entry is a normal draw around the step average with relative
    deviation `trace.sigma`, rounded half-up to a multiple of the LUT
    interval and clamped to at least one interval. The generator is keyed on
    (seed, step_index) only, so the matrix does not depend on call order.
    """
    if not 0 <= step_index < len(scenario.trace):
        raise IndexError(
            f"step {step_index} is outside the {len(scenario.trace)} step trace"
        )
    if seed is None:
        seed = scenario.seed
    mean = scenario.trace.steps[step_index]
    rng = utils.make_rng(utils.derive_seed(seed, utils.DEMAND_STREAM, step_index))
    draws = rng.normal(
        loc=mean,
        scale=scenario.trace.sigma * mean,
        size=(len(scenario.graph.nodes), len(scenario.services)),
    )
    units = np.maximum(np.floor(draws / scenario.lut_interval + 0.5), 1).astype(int)
    return DemandMatrix(
        interval=scenario.lut_interval,
        units={
            (node, service.id): int(units[i, j])
            for i, node in enumerate(scenario.graph.nodes)
            for j, service in enumerate(scenario.services)
        },
    )
