import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import min_hops, network
from sftmap.constraints import validate_full_mapping
from sftmap.generator import generate_scenario, small_params
from sftmap.model import (
    BIG,
    FAST,
    SLOW,
    SMALL,
    LinkUsage,
    Mapping,
    Microservice,
    MicroserviceKind,
    ScenarioError,
    ServiceFunctionTree,
    SftEdge,
    SolverConfig,
)
from sftmap.solver import (
    device_sequence,
    extended_search_to_map,
    map_ms_to_fog,
    map_sft_to_pn,
    order_microservices,
)

F, A, EH = MicroserviceKind.FILTER, MicroserviceKind.AGGREGATOR, MicroserviceKind.EVENT_HANDLER


# -- ordering ---------------------------------------------------------------


def test_order_fig3c():
    from test_model import fig3c_tree

    assert order_microservices(fig3c_tree()) == ["F1", "F2", "F3", "A1", "A2", "EH"]


def test_order_trivial_cases():
    single = ServiceFunctionTree((Microservice("X", EH, SMALL, "wind", frozenset({"w"}), 1),))
    assert order_microservices(single) == ["X"]
    chain = ServiceFunctionTree(
        (Microservice("F", F, SMALL, "wind", frozenset({"w"}), 1), Microservice("A", A, SMALL), Microservice("EH", EH, SMALL)),
        (SftEdge("F", "A", SLOW), SftEdge("A", "EH", SLOW)),
    )
    assert order_microservices(chain) == ["F", "A", "EH"]


def test_order_rejects_cycles():
    cyc = ServiceFunctionTree(
        (Microservice("A1", A, SMALL), Microservice("A2", A, SMALL)),
        (SftEdge("A1", "A2", SLOW), SftEdge("A2", "A1", SLOW)),
    )
    with pytest.raises(ValueError):
        order_microservices(cyc)


@given(st.integers(0, 500))
@settings(max_examples=40)
def test_order_is_child_before_parent(seed):
    sft = generate_scenario(small_params(seed, microservice_count=6, device_count=6)).sft
    order = order_microservices(sft)
    pos = {m: i for i, m in enumerate(order)}
    assert all(pos[e.source] < pos[e.target] for e in sft.edges)
    assert order[-1] == sft.root


def test_device_sequence_orders():
    pn = network({"b": 1, "a": 1, "c": 1}, [])
    assert device_sequence(pn, SolverConfig()) == ["a", "b", "c"]
    cfg = SolverConfig(device_order="random", random_seed=4)
    assert device_sequence(pn, cfg) == device_sequence(pn, cfg)
    assert sorted(device_sequence(pn, cfg)) == ["a", "b", "c"]


# -- single placement -------------------------------------------------------


def _triangle():
    pn = network(
        {"d1": BIG, "d2": BIG, "d3": SMALL},
        [("d1", "d2", SLOW), ("d2", "d3", SLOW), ("d1", "d3", SLOW)],
        {"d1": {"t1", "t2"}, "d2": {"t1"}, "d3": {"t2"}},
    )
    sft = ServiceFunctionTree(
        (
            Microservice("F1", F, SMALL, "temperature", frozenset({"t1", "t2"}), 2),
            Microservice("F2", F, SMALL, "temperature", frozenset({"t1"}), 1),
            Microservice("A", A, SMALL),
        ),
        (SftEdge("F1", "A", SLOW), SftEdge("F2", "A", SLOW)),
    )
    return pn, sft


def test_leaf_with_sensors_and_room():
    pn, sft = _triangle()
    usage = LinkUsage()
    valid, h_sens, out, paths = map_ms_to_fog("F1", "d1", pn, sft, {}, usage, 3)
    assert (valid, h_sens) == (True, True) and out is usage and paths == {}


def test_aggregator_colocated_with_one_predecessor():
    pn, sft = _triangle()
    placements = {"F1": "d1", "F2": "d2"}
    valid, h_sens, out, paths = map_ms_to_fog("A", "d1", pn, sft, placements, LinkUsage(), 3)
    assert (valid, h_sens) == (True, False)
    assert out == LinkUsage({("d1", "d2"): 1})
    assert paths == {("F1", "A"): ("d1",), ("F2", "A"): ("d2", "d1")}
    mapping = Mapping({**placements, "A": "d1"}, paths)
    assert validate_full_mapping(pn, sft, mapping, SolverConfig()) == []


def test_full_device_covering_sensors_reports_them():
    pn, sft = _triangle()
    usage = LinkUsage()
    # d3 is Small and already hosts F2, but still covers t2 for F2's sibling
    sft2 = ServiceFunctionTree(
        (
            Microservice("F1", F, SMALL, "temperature", frozenset({"t2"}), 1),
            Microservice("F2", F, SMALL, "temperature", frozenset({"t2"}), 1),
            Microservice("A", A, SMALL),
        ),
        sft.edges,
    )
    valid, h_sens, out, _ = map_ms_to_fog("F1", "d3", pn, sft2, {"F2": "d3"}, usage, 3)
    assert (valid, h_sens) == (False, True) and out is usage


def test_internal_node_needs_mapped_children():
    pn, sft = _triangle()
    valid, h_sens, _, _ = map_ms_to_fog("A", "d1", pn, sft, {}, LinkUsage(), 3)
    assert (valid, h_sens) == (False, False)


# -- extended search --------------------------------------------------------


def _line(caps, speeds, sensors):
    ids = [f"d{i}" for i in range(1, len(caps) + 1)]
    links = [(ids[i], ids[i + 1], s) for i, s in enumerate(speeds)]
    return network(dict(zip(ids, caps)), links, sensors)


def _leaf_tree(need=SMALL):
    return ServiceFunctionTree(
        (Microservice("F", F, need, "temperature", frozenset({"t1"}), 1), Microservice("EH", EH, SMALL)),
        (SftEdge("F", "EH", SLOW),),
    )


def test_extended_search_adjacent_neighbour():
    pn = _line([SMALL, BIG, SMALL, SMALL], [SLOW, SLOW, SLOW], {"d1": {"t1"}})
    sft = _leaf_tree()
    # d1 is full already
    placements = {"EH": "d1"}
    res = extended_search_to_map("F", pn, sft, LinkUsage(), {"d1"}, SolverConfig(), placements)
    assert res.valid and res.host == "d2" and res.selected == "d1" and res.path == ("d2",)
    assert res.usage == LinkUsage({("d1", "d2"): 1})
    assert min_hops(pn, "d1", "d2", SLOW, LinkUsage(), 3) == 1


def test_extended_search_no_compatible_host():
    pn = _line([SMALL, SMALL, SMALL], [SLOW, SLOW], {"d1": {"t1"}})
    sft = _leaf_tree(BIG)
    usage = LinkUsage()
    res = extended_search_to_map("F", pn, sft, usage, {"d1"}, SolverConfig(), {})
    assert not res.valid and res.host is None and res.usage is usage


def test_extended_search_prefers_closer_host():
    # from d1: d2 is full, d3 (2 hops) and d4 via the other branch (1 hop)
    pn = network(
        {"d1": SMALL, "d2": SMALL, "d3": BIG, "d4": BIG},
        [("d1", "d2", SLOW), ("d2", "d3", SLOW), ("d1", "d4", SLOW)],
        {"d1": {"t1"}},
    )
    sft = ServiceFunctionTree(
        (
            Microservice("F", F, SMALL, "temperature", frozenset({"t1"}), 1),
            Microservice("G", F, SMALL, "temperature", frozenset({"t1"}), 1),
            Microservice("EH", EH, SMALL),
        ),
        (SftEdge("F", "EH", SLOW), SftEdge("G", "EH", SLOW)),
    )
    res = extended_search_to_map("F", pn, sft, LinkUsage(), {"d1"}, SolverConfig(), {"G": "d1", "EH": "d2"})
    assert res.host == "d4" and res.path == ("d4",)


def test_extended_search_respects_h_max_and_residuals():
    pn = _line([SMALL, SMALL, SMALL, BIG], [FAST, FAST, FAST], {"d1": {"t1"}})
    # d1 to d3 are Small and already occupied, so the only host is three hops out
    sft3 = ServiceFunctionTree(
        (
            Microservice("F", F, SMALL, "temperature", frozenset({"t1"}), 1),
            Microservice("X", F, SMALL, "temperature", frozenset({"t1"}), 1),
            Microservice("Y", F, SMALL, "temperature", frozenset({"t1"}), 1),
            Microservice("EH", EH, SMALL),
        ),
        (SftEdge("F", "EH", SLOW), SftEdge("X", "EH", SLOW), SftEdge("Y", "EH", SLOW)),
    )
    full = {"EH": "d1", "X": "d2", "Y": "d3"}
    far = extended_search_to_map("F", pn, sft3, LinkUsage(), {"d1"}, SolverConfig(h_max=3), full)
    assert far.host == "d4" and far.path == ("d2", "d3", "d4")
    near = extended_search_to_map("F", pn, sft3, LinkUsage(), {"d1"}, SolverConfig(h_max=2), full)
    assert not near.valid
    busy = LinkUsage({("d2", "d3"): 2})
    blocked = extended_search_to_map("F", pn, sft3, busy, {"d1"}, SolverConfig(h_max=3), full)
    assert not blocked.valid and blocked.usage is busy


# -- whole solver -----------------------------------------------------------


def test_fig4(fig4):
    res = map_sft_to_pn(fig4.sft, fig4.network, fig4.config)
    assert res.success
    host = fig4.network.device(res.mapping.placements["m1"])
    assert host.capacity == BIG
    assert len(host.sensors_in_range & fig4.sft.node("m1").eligible_sensors) >= 2
    assert res.mapping.placements == {"m1": "d3"}


def test_fig5(fig5):
    res = map_sft_to_pn(fig5.sft, fig5.network, fig5.config)
    assert res.success and res.mapping.is_complete(fig5.sft)
    assert validate_full_mapping(fig5.network, fig5.sft, res.mapping, fig5.config) == []


def test_fig6_has_no_valid_mapping(fig6):
    res = map_sft_to_pn(fig6.sft, fig6.network, fig6.config)
    assert not res.success
    assert res.mapping.placements == {} and res.final_link_usage == LinkUsage()


def test_all_small_network_fails(infeasible):
    res = map_sft_to_pn(infeasible.sft, infeasible.network, infeasible.config)
    assert not res.success and res.mapping.placements == {}


def test_malformed_scenario_is_rejected(fig4):
    bad = ServiceFunctionTree((Microservice("m1", EH, BIG, "temperature", frozenset({"nope"}), 1),))
    with pytest.raises(ScenarioError):
        map_sft_to_pn(bad, fig4.network, fig4.config)


def test_forwarding_scenario_uses_extended_search():
    pn = _line([SMALL, BIG], [FAST], {"d1": {"t1"}})
    sft = ServiceFunctionTree(
        (Microservice("F", F, BIG, "temperature", frozenset({"t1"}), 1), Microservice("EH", EH, SMALL)),
        (SftEdge("F", "EH", SLOW),),
    )
    res = map_sft_to_pn(sft, pn, SolverConfig())
    assert res.success and res.stats.extended_searches >= 1
    rec = res.mapping.forwarding["F"]
    assert rec.selected_sensor_device == "d1" and rec.host == "d2" and rec.path == ("d2",)
    assert validate_full_mapping(pn, sft, res.mapping, SolverConfig()) == []


def _events(sc, pruning="backjump"):
    seen = []
    cfg = sc.config.replace(pruning=pruning)
    res = map_sft_to_pn(sc.sft, sc.network, cfg, observer=seen.append)
    return res, seen


def test_extended_search_only_for_sensor_leaves():
    for seed in range(40):
        sc = generate_scenario(small_params(seed))
        _, events = _events(sc)
        for ev in events:
            if ev.kind == "extended":
                assert sc.sft.node(ev.microservice).required_sensor_count > 0


@pytest.mark.parametrize("seed", range(0, 60, 3))
def test_determinism_and_stats(seed):
    sc = generate_scenario(small_params(seed))
    a = map_sft_to_pn(sc.sft, sc.network, sc.config)
    b = map_sft_to_pn(sc.sft, sc.network, sc.config)
    assert a == b
    assert a.stats.attempts == b.stats.attempts
    assert a.stats.backtracks <= a.stats.attempts


@pytest.mark.parametrize("seed", range(0, 80, 2))
def test_pruning_modes_agree(seed):
    sc = generate_scenario(small_params(seed, device_count=6, microservice_count=4))
    fast = map_sft_to_pn(sc.sft, sc.network, sc.config)
    plain = map_sft_to_pn(sc.sft, sc.network, sc.config.replace(pruning="none"))
    assert fast.success == plain.success
    assert fast.mapping == plain.mapping
    assert fast.stats.attempts <= plain.stats.attempts


@given(st.integers(0, 10_000))
@settings(max_examples=60)
def test_soundness(seed):
    sc = generate_scenario(small_params(seed))
    res = map_sft_to_pn(sc.sft, sc.network, sc.config)
    if res.success:
        assert validate_full_mapping(sc.network, sc.sft, res.mapping, sc.config) == []
    else:
        assert res.mapping.placements == {} and res.final_link_usage == LinkUsage()
