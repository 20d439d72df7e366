"""
Scenario file schema.

Scenario files are validated with the mkdocs configuration machinery: every
block is a `base.Config` and the domain specific checks are config options
raising `ValidationError`. Cross-key invariants (edge endpoints, connectivity,
interval divisibility) run in `post_validation` once every key is parsed.
"""
import logging
from fractions import Fraction
from re import compile

import networkx as nx
from mkdocs.config import base
from mkdocs.config import config_options as c
from mkdocs.config.base import ValidationError

log = logging.getLogger(__name__)


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def divides(interval, capacity):
    """Return whether `capacity` is an integral multiple of `interval`."""
    return (Fraction(str(capacity)) / Fraction(str(interval))).denominator == 1


class Number(c.Type):
    """
    Number Config Option

    Validate an int or float against a lower bound, rejecting booleans.
    """

    def __init__(self, minimum=0, strict=False, integer=False, **kwargs):
        super().__init__(int if integer else (int, float), **kwargs)
        self.minimum = minimum
        self.strict = strict

    def run_validation(self, value):
        if isinstance(value, bool):
            raise ValidationError(f"Expected a number, received a boolean: {value}")
        value = super().run_validation(value)
        if value < self.minimum or (self.strict and value == self.minimum):
            bound = ">" if self.strict else ">="
            raise ValidationError(
                f"Expected a value {bound} {self.minimum}, got {value}"
            )
        return value


class NodeList(c.Type):
    """The ordered node identifiers of the RSU cloud."""

    def __init__(self, **kwargs):
        super().__init__(list, **kwargs)

    def run_validation(self, value):
        value = super().run_validation(value)
        if not value:
            raise ValidationError("At least one node is required")
        for idx, node in enumerate(value):
            if not isinstance(node, str) or not node:
                raise ValidationError(
                    f"[{idx}]: node identifiers must be non-empty strings, got {node!r}"
                )
        duplicates = sorted({node for node in value if value.count(node) > 1})
        if duplicates:
            raise ValidationError(f"duplicate nodes: {', '.join(duplicates)}")
        return value


class EdgeList(c.Type):
    """
    Edge List Config Option

    Validate the undirected `[u, v, capacity_mbps]` triples. Checks needing
    the node list or the LUT interval are deferred to `post_validation`.
    """

    def __init__(self, **kwargs):
        super().__init__(list, **kwargs)

    def run_validation(self, value):
        value = super().run_validation(value)
        seen = {}
        edges = []
        for idx, item in enumerate(value):
            if not isinstance(item, list) or len(item) != 3:
                raise ValidationError(
                    f"[{idx}]: expected [u, v, capacity_mbps], got {item!r}"
                )
            u, v, capacity = item
            if not isinstance(u, str) or not isinstance(v, str):
                raise ValidationError(f"[{idx}]: endpoints must be node identifiers")
            if u == v:
                raise ValidationError(f"[{idx}]: self-loop on node '{u}'")
            if not _is_number(capacity) or capacity <= 0:
                raise ValidationError(
                    f"[{idx}]: capacity must be a positive number, got {capacity!r}"
                )
            key = frozenset((u, v))
            if key in seen:
                raise ValidationError(
                    f"[{idx}]: duplicate edge {u}-{v} (first declared at [{seen[key]}])"
                )
            seen[key] = idx
            edges.append([u, v, capacity])
        return edges

    def post_validation(self, config, key_name):
        nodes = config["nodes"]
        edges = config[key_name]
        declared = set(nodes)
        for idx, (u, v, _) in enumerate(edges):
            for endpoint in (u, v):
                if endpoint not in declared:
                    raise ValidationError(
                        f"[{idx}]: unknown node '{endpoint}' (not listed in 'nodes')"
                    )
        graph = nx.Graph()
        graph.add_nodes_from(nodes)
        graph.add_edges_from((u, v) for u, v, _ in edges)
        if not nx.is_connected(graph):
            components = sorted(
                (sorted(component) for component in nx.connected_components(graph)),
                key=len,
            )
            raise ValidationError(
                f"graph is disconnected, isolated component: {components[0]}"
            )
        interval = config["lut_interval_mbps"]
        for idx, (u, v, capacity) in enumerate(edges):
            if not divides(interval, capacity):
                raise ValidationError(
                    f"[{idx}]: interval does not divide capacity "
                    f"({interval} Mbps does not divide {capacity} Mbps on {u}-{v})"
                )


class ServiceConfig(base.Config):
    id = c.Type(str)
    host_bound = Number(minimum=1, integer=True)
    qos_bound_us = c.Optional(Number(minimum=0, strict=True))


class ServiceList(c.Type):
    """
    Service List Config Option

    Each item is validated against `ServiceConfig`, unknown keys included, and
    errors are reported with the item index.
    """

    def __init__(self, **kwargs):
        super().__init__(list, **kwargs)

    def run_validation(self, value):
        value = super().run_validation(value)
        if not value:
            raise ValidationError("At least one service is required")
        services = []
        for idx, item in enumerate(value):
            if not isinstance(item, dict):
                raise ValidationError(f"[{idx}]: expected an object, got {item!r}")
            service = ServiceConfig()
            service.load_dict(item)
            failed, warnings = service.validate()
            for key, err in failed + warnings:
                raise ValidationError(f"[{idx}].{key}: {err}")
            services.append(service)
        ids = [service["id"] for service in services]
        duplicates = sorted({sid for sid in ids if ids.count(sid) > 1})
        if duplicates:
            raise ValidationError(f"duplicate service ids: {', '.join(duplicates)}")
        return services

    def post_validation(self, config, key_name):
        node_count = len(config["nodes"])
        for idx, service in enumerate(config[key_name]):
            if service["host_bound"] > node_count:
                raise ValidationError(
                    f"[{idx}].host_bound: {service['host_bound']} exceeds the "
                    f"{node_count} nodes of the graph"
                )


class DemandSteps(c.Type):
    def __init__(self, **kwargs):
        super().__init__(list, **kwargs)

    def run_validation(self, value):
        value = super().run_validation(value)
        if not value:
            raise ValidationError("The trace needs at least one step")
        for idx, step in enumerate(value):
            if not _is_number(step) or step <= 0:
                raise ValidationError(
                    f"[{idx}]: average demands must be positive numbers, got {step!r}"
                )
        return value


class TraceConfig(base.Config):
    steps_mbps = DemandSteps()
    sigma = Number(minimum=0, default=0.05)


class QueueConfig(base.Config):
    processing_delay_us = Number(minimum=0, default=10)
    packet_size_bytes = Number(minimum=0, strict=True, integer=True, default=800)
    ca = Number(minimum=0, default=1.5)
    cs = Number(minimum=0, default=1.5)
    propagation_delay_us = Number(minimum=0, default=0)


class ScenarioConfig(base.Config):
    nodes = NodeList()
    edges = EdgeList()
    services = ServiceList()
    trace = c.SubConfig(TraceConfig)
    lut_interval_mbps = Number(minimum=0, strict=True, default=1)
    queue = c.SubConfig(QueueConfig)
    path_limit = Number(minimum=1, integer=True, default=4)
    seed = Number(minimum=0, integer=True, default=0)


RE_SUB_OPTION = compile(r"^Sub-option '([^']+)': (.*)$")
RE_ITEM = compile(r"^(\[\d+\](?:\.[A-Za-z_]+)?): (.*)$")


def _key_path(key, message):
    """
    Fold the location prefixes mkdocs and our options put in messages
    ("Sub-option 'ca': ...", "[3]: ...") into a dotted key path.
    """
    message = str(message)
    while True:
        match = RE_SUB_OPTION.match(message)
        if match:
            key = f"{key}.{match.group(1)}"
            message = match.group(2)
            continue
        match = RE_ITEM.match(message)
        if match:
            key = f"{key}{match.group(1)}"
            message = match.group(2)
            continue
        return key, message


def validate_document(data, config_file_path=None):
    """
    Validate a decoded scenario document.

    Returns the validated `ScenarioConfig` and the list of (key path, message)
    errors. mkdocs only warns about unknown keys; they are errors here.
    """
    config = ScenarioConfig(config_file_path=config_file_path)
    config.load_dict(data)
    failed, warnings = config.validate()
    errors = [_key_path(key, err) for key, err in failed]
    errors.extend(_key_path(key, msg) for key, msg in warnings)
    for key, msg in errors:
        log.debug(f"Scenario validation error at '{key}': {msg}")
    return config, errors
