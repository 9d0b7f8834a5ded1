import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import brute_force_path, network
from sftmap.constraints import (
    ConstraintKind,
    det_link_requirement,
    find_feasible_path,
    has_required_sensors,
    is_resource_compatible,
    validate_connectivity_and_link_speed,
    validate_extended_path,
    validate_full_mapping,
    validate_path,
)
from sftmap.model import (
    BIG,
    FAST,
    SLOW,
    SMALL,
    ConfigError,
    FogDevice,
    Link,
    LinkUsage,
    Mapping,
    Microservice,
    MicroserviceKind,
    PhysicalNetwork,
    ServiceFunctionTree,
    SftEdge,
    SolverConfig,
    path_edges,
)

F, A, EH = MicroserviceKind.FILTER, MicroserviceKind.AGGREGATOR, MicroserviceKind.EVENT_HANDLER


def two_pred_tree(speed=SLOW):
    return ServiceFunctionTree(
        (
            Microservice("F1", F, SMALL, "temperature", frozenset({"t1"}), 1),
            Microservice("F2", F, SMALL, "temperature", frozenset({"t1"}), 1),
            Microservice("EH", EH, SMALL),
        ),
        (SftEdge("F1", "EH", speed), SftEdge("F2", "EH", speed)),
    )


# -- sensors and capacity ---------------------------------------------------


def test_has_required_sensors(fig4):
    d3 = fig4.network.device("d3")
    assert d3.sensors_in_range == {"t_s2", "t_s4"}
    assert has_required_sensors(d3, {"t_s2", "t_s4", "t_s5"}, 2)
    assert has_required_sensors(d3, set(), 0)
    assert not has_required_sensors(d3, {"t_s2", "t_s5"}, 2)
    with pytest.raises(ValueError):
        has_required_sensors(d3, set(), -1)


def test_is_resource_compatible():
    sft = ServiceFunctionTree(
        (
            Microservice("B", F, BIG, "wind", frozenset({"w"}), 1),
            Microservice("S", F, SMALL, "wind", frozenset({"w"}), 1),
            Microservice("EH", EH, SMALL),
        ),
        (SftEdge("B", "EH", SLOW), SftEdge("S", "EH", SLOW)),
    )
    big, small = FogDevice("big", BIG), FogDevice("small", SMALL)
    assert not is_resource_compatible(big, SMALL, {"B": "big"}, sft)
    assert is_resource_compatible(big, BIG, {}, sft)
    assert not is_resource_compatible(small, SMALL, {"S": "small"}, sft)
    assert is_resource_compatible(big, SMALL, Mapping(placements={"S": "big"}), sft)


# -- paths ------------------------------------------------------------------


def test_fast_edge_cannot_use_slow_link(fig6):
    assert find_feasible_path(fig6.network, "d2", "d3", FAST, LinkUsage(), 3) is None


def test_adjacent_single_hop():
    pn = network({"a": 1, "b": 1}, [("a", "b", FAST)])
    assert find_feasible_path(pn, "a", "b", SLOW, LinkUsage(), 1) == ("a", "b")


def test_ring_detour_matches_enumeration():
    ring = [("r1", "r2"), ("r2", "r3"), ("r3", "r4"), ("r4", "r5"), ("r5", "r1")]
    pn = network({f"r{i}": 1 for i in range(1, 6)}, [(a, b, SLOW) for a, b in ring])
    usage = LinkUsage({("r1", "r2"): 1})
    for h in (1, 2, 3, 4):
        assert find_feasible_path(pn, "r1", "r2", SLOW, usage, h) == brute_force_path(pn, "r1", "r2", SLOW, usage, h)
    assert find_feasible_path(pn, "r1", "r2", SLOW, usage, 3) is None
    assert find_feasible_path(pn, "r1", "r2", SLOW, usage, 4) == ("r1", "r5", "r4", "r3", "r2")


def test_ring_two_hop_detour():
    # one saturated link, the other way round is two hops
    pn = network({"a": 1, "b": 1, "c": 1, "d": 1, "e": 1},
                 [("a", "b", SLOW), ("b", "c", SLOW), ("a", "c", SLOW), ("c", "d", SLOW), ("d", "e", SLOW), ("e", "a", SLOW)])
    usage = LinkUsage({("a", "b"): 1})
    assert find_feasible_path(pn, "a", "b", SLOW, usage, 1) is None
    assert find_feasible_path(pn, "a", "b", SLOW, usage, 2) == ("a", "c", "b")
    assert brute_force_path(pn, "a", "b", SLOW, usage, 2) == ("a", "c", "b")


def test_lexicographic_tie_break():
    pn = network({"s": 1, "x": 1, "m": 1, "t": 1}, [("s", "x", 1), ("x", "t", 1), ("s", "m", 1), ("m", "t", 1)])
    assert find_feasible_path(pn, "s", "t", 1, LinkUsage(), 2) == ("s", "m", "t")


def test_path_preconditions():
    pn = network({"a": 1, "b": 1}, [("a", "b", 1)])
    with pytest.raises(ValueError):
        find_feasible_path(pn, "a", "a", 1, LinkUsage(), 1)
    with pytest.raises(KeyError):
        find_feasible_path(pn, "a", "zz", 1, LinkUsage(), 1)


@st.composite
def loaded_networks(draw, max_devices=8):
    n = draw(st.integers(2, max_devices))
    ids = [f"d{i}" for i in range(n)]
    pairs = [(a, b) for i, a in enumerate(ids) for b in ids[i + 1 :]]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    links = [(a, b, draw(st.integers(1, 3))) for a, b in chosen]
    pn = network({d: 1 for d in ids}, links)
    usage = LinkUsage({(a, b): draw(st.integers(0, cap)) for a, b, cap in links})
    src = draw(st.sampled_from(ids))
    dst = draw(st.sampled_from([d for d in ids if d != src]))
    return pn, usage, src, dst, draw(st.integers(1, 3)), draw(st.integers(1, 5))


@given(loaded_networks())
def test_find_feasible_path_matches_exhaustive_enumeration(case):
    pn, usage, src, dst, required, h = case
    assert find_feasible_path(pn, src, dst, required, usage, h) == brute_force_path(pn, src, dst, required, usage, h)


# -- edge validators --------------------------------------------------------


def test_validate_path_colocated_keeps_ledger():
    pn = network({"a": 2}, [])
    sft = two_pred_tree()
    usage = LinkUsage({("x", "y"): 1})
    ok, out, path = validate_path(pn, sft, "F1", "EH", "a", "a", usage, 3)
    assert ok and out is usage and path == ("a",)


def test_validate_path_reference_edge(fig5):
    ok, out, path = validate_path(fig5.network, fig5.sft, "m5", "m6", "d3", "d5", LinkUsage(), 3)
    assert ok and path == ("d3", "d5")
    assert out == LinkUsage({("d3", "d5"): 2})


def test_validate_path_saturated_link():
    pn = network({"a": 1, "b": 1}, [("a", "b", SLOW)])
    sft = two_pred_tree()
    usage = LinkUsage({("a", "b"): 1})
    ok, out, path = validate_path(pn, sft, "F1", "EH", "a", "b", usage, 3)
    assert not ok and out is usage and path is None


def test_connectivity_without_mapped_predecessors(fig5):
    usage = LinkUsage()
    ok, out, paths = validate_connectivity_and_link_speed(fig5.network, fig5.sft, "m3", "d2", {}, usage, 3)
    assert ok and out is usage and paths == {}


def test_connectivity_reference_aggregator(fig5):
    placements = {"m1": "d2", "m2": "d1", "m3": "d2", "m4": "d3"}
    ok, out, paths = validate_connectivity_and_link_speed(fig5.network, fig5.sft, "m5", "d3", placements, LinkUsage(), 3)
    assert ok
    assert paths == {("m3", "m5"): ("d2", "d3"), ("m4", "m5"): ("d3",)}
    assert out == LinkUsage({("d2", "d3"): 2})


def test_connectivity_is_all_or_nothing():
    line = network({"a": 1, "b": 1, "c": 1, "d": 1}, [("a", "b", 2), ("b", "c", 2), ("c", "d", 2)])
    sft = two_pred_tree()
    usage = LinkUsage({("c", "d"): 1})
    ok, out, paths = validate_connectivity_and_link_speed(line, sft, "EH", "b", {"F1": "a", "F2": "d"}, usage, 1)
    assert not ok and out is usage and paths == {}


def test_det_link_requirement():
    cfg = SolverConfig()
    vis = Microservice("V", F, SMALL, "visual", frozenset({"v"}), 1)
    tmp = Microservice("T", F, SMALL, "temperature", frozenset({"t"}), 1)
    assert det_link_requirement(vis, cfg) == FAST
    assert det_link_requirement(tmp, cfg) == SLOW
    odd = Microservice("X", F, SMALL, "sonar", frozenset({"x"}), 1)
    with pytest.raises(ConfigError):
        det_link_requirement(odd, cfg)


def test_validate_extended_path():
    pn = network({"a": 1, "b": 1, "c": 1}, [("a", "b", FAST), ("b", "c", FAST)])
    usage = LinkUsage()
    assert validate_extended_path(pn, ("a",), SLOW, usage) == (True, usage)
    ok, out = validate_extended_path(pn, ("a", "b", "c"), FAST, usage)
    assert ok and out.residual(pn, "a", "b") == 0 and out.residual(pn, "b", "c") == 0
    full = LinkUsage({("b", "c"): 2})
    assert validate_extended_path(pn, ("a", "b", "c"), SLOW, full) == (False, full)


# -- ledger discipline and monotonicity -------------------------------------


def _edge_case(pn, usage, src, dst, speed):
    sft = two_pred_tree(speed)
    return sft, validate_path(pn, sft, "F1", "EH", src, dst, usage, 3)


@given(loaded_networks(6))
def test_ledger_discipline(case):
    pn, usage, src, dst, required, _ = case
    speed = min(required, 2)
    _, (ok, out, path) = _edge_case(pn, usage, src, dst, speed)
    if not ok:
        assert out is usage
    else:
        hops = set(path_edges(path))
        for l in pn.links:
            before = usage.consumed_on(l.key)
            expected = before + speed if l.key in hops else before
            assert out.consumed_on(l.key) == expected <= l.capacity


@given(loaded_networks(6), st.data())
def test_adding_capacity_never_breaks_a_path(case, data):
    pn, usage, src, dst, required, _ = case
    speed = min(required, 2)
    _, (ok, _, _) = _edge_case(pn, usage, src, dst, speed)
    if not pn.links:
        return
    target = data.draw(st.sampled_from(pn.links))
    extra = data.draw(st.integers(1, 3))
    wider = PhysicalNetwork(
        pn.devices,
        tuple(Link(l.a, l.b, l.capacity + extra) if l.key == target.key else l for l in pn.links),
        pn.sensors,
    )
    _, (ok_wider, _, _) = _edge_case(wider, usage, src, dst, speed)
    assert ok_wider or not ok


# -- full validator ---------------------------------------------------------


def test_fig4_reference_is_valid(fig4):
    assert validate_full_mapping(fig4.network, fig4.sft, fig4.reference_mapping, fig4.config) == []


def test_fig5_reference_is_valid(fig5):
    assert validate_full_mapping(fig5.network, fig5.sft, fig5.reference_mapping, fig5.config) == []


def test_fig6_reference_violations(fig6):
    violations = validate_full_mapping(fig6.network, fig6.sft, fig6.reference_mapping, fig6.config)
    kinds = {v.constraint for v in violations}
    assert kinds == {ConstraintKind.RESOURCE_ALLOCATION, ConstraintKind.LINK_CAPACITY}
    subjects = {(v.constraint, v.subject) for v in violations}
    assert (ConstraintKind.RESOURCE_ALLOCATION, ("d2",)) in subjects
    assert (ConstraintKind.LINK_CAPACITY, ("d2", "d3")) in subjects


def test_validator_reports_each_constraint_kind(fig5):
    pn, sft, cfg = fig5.network, fig5.sft, fig5.config
    ref = fig5.reference_mapping
    # leaf without its sensors
    moved = Mapping({**ref.placements, "m4": "d7"}, ref.reserved_paths, {})
    assert ConstraintKind.SENSOR_SELECTION in {v.constraint for v in validate_full_mapping(pn, sft, moved, cfg)}
    # reserved path that does not connect the hosts
    broken = Mapping(ref.placements, {**ref.reserved_paths, ("m5", "m6"): ("d3", "d7")}, {})
    assert ConstraintKind.PATH_CONNECTIVITY in {v.constraint for v in validate_full_mapping(pn, sft, broken, cfg)}
    # path longer than h_max
    long_cfg = cfg.replace(h_max=1)
    detour = Mapping(ref.placements, {**ref.reserved_paths, ("m5", "m6"): ("d3", "d6", "d5")}, {})
    assert ConstraintKind.LATENCY in {v.constraint for v in validate_full_mapping(pn, sft, detour, long_cfg)}


def test_validator_ignores_dict_order(fig6):
    ref = fig6.reference_mapping
    flipped = Mapping(
        dict(reversed(list(ref.placements.items()))),
        dict(reversed(list(ref.reserved_paths.items()))),
        {},
    )
    a = validate_full_mapping(fig6.network, fig6.sft, ref, fig6.config)
    b = validate_full_mapping(fig6.network, fig6.sft, flipped, fig6.config)
    assert a == b


def test_brute_force_helper_agrees_with_networkx_on_unloaded_graphs():
    pn = network({"a": 1, "b": 1, "c": 1}, [("a", "b", 1), ("b", "c", 1)])
    g = nx.Graph([("a", "b"), ("b", "c")])
    assert len(brute_force_path(pn, "a", "c", 1, LinkUsage(), 3)) - 1 == nx.shortest_path_length(g, "a", "c")
