"""
Edge delay model.

An edge behaves as a G/G/1 queue: fixed processing, transmission and
propagation delays plus a queueing term from the Kingman approximation.
The delay is materialized once per edge as a lookup table indexed by load
bucket, load = j * interval.
"""
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import TYPE_CHECKING, Dict, Mapping, Sequence, Tuple

from rsu_cloud_crm.exceptions import (
    EdgeOverloadError,
    LoadGranularityError,
    QueueDomainError,
    QueueSaturationError,
)

if TYPE_CHECKING:
    from rsu_cloud_crm.scenario import Edge, Scenario

log = logging.getLogger(__name__)

MBPS = 1e6


@dataclass(frozen=True)
class QueueParams:
    """
    Queue parameters shared by every edge.

    Delays are in seconds and the packet size in bits. `ca` and `cs` are the
    coefficients of variation of inter-arrival and processing times.
    """

    processing_delay: float = 10e-6
    packet_size: int = 6400
    ca: float = 1.5
    cs: float = 1.5
    propagation_delay: float = 0.0

    def __post_init__(self):
        if self.processing_delay < 0 or self.propagation_delay < 0:
            raise QueueDomainError("fixed delays must be non-negative")
        if self.packet_size <= 0:
            raise QueueDomainError(
                f"packet size must be positive, got {self.packet_size}"
            )
        if self.ca < 0 or self.cs < 0:
            raise QueueDomainError("coefficients of variation must be non-negative")


@dataclass(frozen=True)
class DelayLUT:
    interval: float
    capacity: float
    buckets: Tuple[float, ...]

    def __len__(self):
        return len(self.buckets)

    @property
    def max_load(self) -> float:
        """Largest representable load, C_e - interval."""
        return (len(self.buckets) - 1) * self.interval


def kingman_queue_delay(lam: float, mu: float, ca: float, cs: float) -> float:
    """
    Mean G/G/1 waiting time ((ca^2 + cs^2) / 2) * (rho / (mu - lambda)).

    `lam` and `mu` are arrival and service rates in events per second.
    """
    if lam < 0 or ca < 0 or cs < 0 or mu <= 0:
        raise QueueDomainError(
            f"invalid queue inputs lambda={lam} mu={mu} ca={ca} cs={cs}"
        )
    if lam >= mu:
        raise QueueSaturationError(
            f"arrival rate {lam} reaches service rate {mu}, the queue is saturated"
        )
    return ((ca**2 + cs**2) / 2) * ((lam / mu) / (mu - lam))


def bucket_count(capacity: float, interval: float) -> int:
    ratio = Fraction(str(capacity)) / Fraction(str(interval))
    if ratio.denominator != 1 or ratio <= 0:
        raise LoadGranularityError(
            f"interval does not divide capacity ({interval} into {capacity})"
        )
    return int(ratio)


def build_lut(capacity: float, interval: float, params: QueueParams) -> DelayLUT:
    """
    Tabulate the total edge delay for loads 0, interval, ..., C_e - interval.

    A load of exactly C_e saturates the queue and has no bucket.
    """
    count = bucket_count(capacity, interval)
    mu = capacity * MBPS / params.packet_size
    fixed = (
        params.processing_delay
        + params.packet_size / (capacity * MBPS)
        + params.propagation_delay
    )
    buckets = tuple(
        fixed
        + kingman_queue_delay(
            j * interval * MBPS / params.packet_size, mu, params.ca, params.cs
        )
        for j in range(count)
    )
    return DelayLUT(interval=interval, capacity=capacity, buckets=buckets)


def load_bucket(lut: DelayLUT, load: float) -> int:
    """Return the bucket index of `load`, validating granularity and range."""
    ratio = load / lut.interval
    index = round(ratio)
    if abs(ratio - index) > 1e-9:
        raise LoadGranularityError(
            f"load {load} Mbps is not a multiple of the {lut.interval} Mbps interval"
        )
    if index < 0:
        raise LoadGranularityError(f"negative load {load} Mbps")
    if index >= len(lut.buckets):
        raise EdgeOverloadError(
            f"load {load} Mbps reaches the {lut.capacity} Mbps capacity, "
            f"at most {lut.max_load} Mbps can be carried"
        )
    return index


def edge_delay(lut: DelayLUT, load: float) -> float:
    return lut.buckets[load_bucket(lut, load)]


def max_delay(lut: DelayLUT) -> float:
    """The normalizer q_{C_e,e}: the delay of the last representable bucket."""
    return lut.buckets[-1]


def path_delay(
    luts: Mapping["Edge", DelayLUT],
    loads: Mapping["Edge", float],
    path: Sequence["Edge"],
) -> float:
    """
    Sum the edge delays along `path` at each edge's current total load.

    The empty path is local service and costs nothing.
    """
    return sum(edge_delay(luts[edge], loads.get(edge, 0)) for edge in path)


@lru_cache(maxsize=32)
def delay_table(scenario: "Scenario") -> Dict["Edge", DelayLUT]:
    """Build the LUT of every edge of `scenario`, sharing equal capacities."""
    by_capacity = {}
    luts = {}
    for u, v, capacity in scenario.graph.edges:
        if capacity not in by_capacity:
            by_capacity[capacity] = build_lut(
                capacity, scenario.lut_interval, scenario.queue_params
            )
            log.debug(
                f"Built a {len(by_capacity[capacity])} bucket LUT for "
                f"{capacity} Mbps edges"
            )
        luts[(u, v)] = by_capacity[capacity]
    return luts
