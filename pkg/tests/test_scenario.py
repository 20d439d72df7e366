import json
from dataclasses import replace

import pytest

from rsu_cloud_crm.exceptions import ScenarioError
from rsu_cloud_crm.scenario import (
    DemandTrace,
    default_topology,
    dump_scenario,
    emit_scenario,
    load_scenario,
    parse_scenario,
    sample_demands,
)
from tests.conftest import TRIANGLE

DEFAULT_TRACE = (50, 60, 80, 70, 90, 50, 70)

MINIMAL = {
    "nodes": ["a", "b"],
    "edges": [["a", "b", 10]],
    "services": [{"id": "s0", "host_bound": 1}],
    "trace": {"steps_mbps": [5]},
}


def errors_of(data):
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    return excinfo.value.errors


def test_default_scenario(default_scenario):
    assert len(default_scenario.graph.nodes) == 10
    assert default_scenario.service_ids == ("s0",)
    assert default_scenario.trace.steps == DEFAULT_TRACE
    assert set(default_scenario.graph.capacities.values()) == {100}
    assert default_scenario.lut_interval == 1
    assert default_scenario.graph == default_topology()


def test_default_topology():
    graph = default_topology()
    assert len(graph.nodes) == 10
    assert len(graph.edges) == 13
    assert set(graph.neighbors("0")) == {"1", "9", "5"}
    assert graph.is_connected()


def test_edge_key_normalizes_orientation():
    graph = default_topology()
    assert graph.edge_key("9", "0") == ("0", "9")
    assert graph.edge_key("0", "9") == ("0", "9")
    with pytest.raises(KeyError):
        graph.edge_key("0", "3")


def test_minimal_defaults():
    scenario = parse_scenario(MINIMAL)
    assert scenario.trace.sigma == 0.05
    assert scenario.path_limit == 4
    assert scenario.seed == 0
    assert scenario.queue_params.packet_size == 6400
    assert scenario.queue_params.processing_delay == pytest.approx(10e-6)
    assert scenario.services[0].qos_bound is None


def test_optional_and_required_keys():
    service = {"id": "s0", "host_bound": 1}
    for qos in ({}, {"qos_bound_us": None}):
        data = {**MINIMAL, "services": [{**service, **qos}]}
        assert parse_scenario(data).services[0].qos_bound is None
    data = {**MINIMAL, "services": [{**service, "qos_bound_us": 250}]}
    assert parse_scenario(data).services[0].qos_bound == pytest.approx(250e-6)

    missing = {key: value for key, value in MINIMAL.items() if key != "nodes"}
    ((key, msg),) = errors_of(missing)
    assert key == "nodes"
    assert "Required" in msg
    keys = [key for key, _ in errors_of({**MINIMAL, "services": [{"id": "s0"}]})]
    assert keys == ["services[0].host_bound"]


def test_self_loop():
    with pytest.raises(ScenarioError) as excinfo:
        load_scenario("tests/scenarios/self_loop.json")
    assert any("self-loop" in msg for _, msg in excinfo.value.errors)
    assert excinfo.value.exit_code == 1


def test_interval_does_not_divide_capacity():
    with pytest.raises(ScenarioError) as excinfo:
        load_scenario("tests/scenarios/bad_interval.json")
    assert any(
        "interval does not divide capacity" in msg for _, msg in excinfo.value.errors
    )


def test_parse_failure_reports_position():
    with pytest.raises(ScenarioError) as excinfo:
        load_scenario("tests/scenarios/broken.json")
    ((key, msg),) = excinfo.value.errors
    assert key.startswith("tests/scenarios/broken.json:")
    assert "parse failure" in msg


def test_missing_file():
    with pytest.raises(ScenarioError):
        load_scenario("tests/scenarios/missing.json")


def test_unknown_key_is_an_error():
    keys = [key for key, _ in errors_of({**MINIMAL, "bogus": 1})]
    assert keys == ["bogus"]


def test_nested_key_paths():
    data = {**MINIMAL, "queue": {"ca": -1}}
    assert [key for key, _ in errors_of(data)] == ["queue.ca"]

    data = {**MINIMAL, "services": [{"id": "s0", "host_bound": 0}]}
    assert [key for key, _ in errors_of(data)] == ["services[0].host_bound"]


def test_cross_key_invariants():
    data = {**MINIMAL, "edges": [["a", "c", 10]]}
    assert any("unknown node 'c'" in msg for _, msg in errors_of(data))

    data = {**MINIMAL, "nodes": ["a", "b", "c"]}
    assert any("disconnected" in msg for _, msg in errors_of(data))

    data = {**MINIMAL, "services": [{"id": "s0", "host_bound": 3}]}
    assert any("exceeds" in msg for _, msg in errors_of(data))


def test_invalid_values():
    assert errors_of({**MINIMAL, "edges": [["a", "b", 0]]})
    assert errors_of({**MINIMAL, "edges": [["a", "b", True]]})
    assert errors_of({**MINIMAL, "trace": {"steps_mbps": []}})
    assert errors_of({**MINIMAL, "nodes": ["a", "a", "b"]})
    assert errors_of({**MINIMAL, "services": [{"id": "s0"}]})
    assert errors_of([1, 2])


def test_emit_round_trip(default_scenario, triangle):
    for scenario in (default_scenario, triangle):
        assert parse_scenario(emit_scenario(scenario)) == scenario

    bounded = replace(
        triangle,
        services=(replace(triangle.services[0], qos_bound=250e-6),),
    )
    assert parse_scenario(emit_scenario(bounded)) == bounded


def test_dump_round_trip(tmp_path, triangle):
    path = dump_scenario(triangle, tmp_path / "triangle.json")
    assert load_scenario(path) == load_scenario(TRIANGLE)


def test_sample_demands_without_variance(default_scenario):
    scenario = replace(default_scenario, trace=DemandTrace(steps=(50,), sigma=0.0))
    demands = sample_demands(scenario, 0)
    assert set(demands.units.values()) == {50}
    assert demands[("3", "s0")] == 50


def test_sample_demands_is_deterministic(default_scenario):
    first = sample_demands(default_scenario, 0, seed=11)
    assert first == sample_demands(default_scenario, 0, seed=11)
    # call order does not matter
    sample_demands(default_scenario, 3, seed=11)
    assert first == sample_demands(default_scenario, 0, seed=11)
    assert first != sample_demands(default_scenario, 0, seed=12)


def test_sample_demands_match_transcript(default_scenario):
    with open("tests/scenarios/demands_seed0.json") as f:
        transcript = json.load(f)
    assert len(transcript["units"]) == len(default_scenario.trace)
    for step, expected in enumerate(transcript["units"]):
        demands = sample_demands(default_scenario, step, seed=transcript["seed"])
        assert [
            demands.units_of(node, transcript["service"])
            for node in transcript["nodes"]
        ] == expected


def test_sample_demands_plausible(default_scenario):
    demands = sample_demands(default_scenario, 0)
    assert len(demands.units) == 10
    for count in demands.units.values():
        assert isinstance(count, int)
        assert 35 <= count <= 65
    assert demands.entries[("0", "s0")] == demands.units[("0", "s0")]


def test_sample_demands_clamps_to_one_interval(triangle):
    scenario = replace(triangle, trace=DemandTrace(steps=(0.2,), sigma=0.0))
    demands = sample_demands(scenario, 0)
    assert set(demands.units.values()) == {1}


def test_sample_demands_step_out_of_range(triangle):
    with pytest.raises(IndexError):
        sample_demands(triangle, 1)
