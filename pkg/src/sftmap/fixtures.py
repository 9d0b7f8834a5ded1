"""Hand-encoded scenarios for the three worked mapping examples.

Device capacities, microservice requirements and SFT link speeds follow the
published examples exactly.  Topology and per-device sensor lists are not
fully recoverable from the text and are completed minimally; each fixture
records those choices in its ``notes``.
"""

from __future__ import annotations

from .model import (
    BIG,
    FAST,
    SLOW,
    SMALL,
    FogDevice,
    Link,
    Mapping,
    Microservice,
    MicroserviceKind,
    PhysicalNetwork,
    Scenario,
    Sensor,
    ServiceFunctionTree,
    SftEdge,
    SolverConfig,
)

F, A, EH = MicroserviceKind.FILTER, MicroserviceKind.AGGREGATOR, MicroserviceKind.EVENT_HANDLER


def _devices(capacities, sensors):
    return tuple(FogDevice(f"d{i}", cap, frozenset(sensors[i - 1])) for i, cap in enumerate(capacities, 1))


def _links(pairs, speed):
    return tuple(Link(a, b, speed) for a, b in pairs)


def fig4_simple_valid() -> Scenario:
    sensors = (
        Sensor("t_s1", "temperature", "roi-b"),
        Sensor("t_s2", "temperature", "roi-a"),
        Sensor("t_s3", "temperature", "roi-b"),
        Sensor("t_s4", "temperature", "roi-a"),
        Sensor("t_s5", "temperature", "roi-a"),
        Sensor("t_s6", "temperature", "roi-b"),
    )
    devices = _devices(
        [BIG, SMALL, BIG, SMALL, BIG],
        [{"t_s1", "t_s2"}, {"t_s2", "t_s3"}, {"t_s2", "t_s4"}, {"t_s4", "t_s5"}, {"t_s5", "t_s6"}],
    )
    links = (
        Link("d1", "d2", FAST),
        Link("d2", "d3", SLOW),
        Link("d2", "d4", SLOW),
        Link("d3", "d4", FAST),
        Link("d4", "d5", SLOW),
    )
    sft = ServiceFunctionTree(
        (Microservice("m1", EH, BIG, "temperature", frozenset({"t_s2", "t_s4", "t_s5"}), 2),),
    )
    reference = Mapping(placements={"m1": "d3"})
    return Scenario(
        PhysicalNetwork(devices, links, sensors),
        sft,
        SolverConfig(),
        name="fig4",
        notes=(
            "m1 is a Big event handler needing any two of t_s2, t_s4, t_s5; capacities Big, Small, Big, Small, Big.",
            "Interpretation: links, link speeds and per-device sensor lists are not given; d3 reaches t_s2 and t_s4, "
            "d4 (Small) reaches t_s4 and t_s5, every other device reaches at most one eligible sensor.",
            "Reference mapping: m1 -> d3.",
        ),
        reference_mapping=reference,
    )


def fig5_complex_valid() -> Scenario:
    sensors = (
        Sensor("t_s1", "temperature", "roi-1"),
        Sensor("t_s2", "temperature", "roi-1"),
        Sensor("t_s3", "temperature", "roi-1"),
        Sensor("t_s4", "temperature", "roi-2"),
        Sensor("v_s1", "visual", "roi-1"),
        Sensor("v_s2", "visual", "roi-1"),
        Sensor("w_s1", "wind", "roi-1"),
        Sensor("w_s2", "wind", "roi-1"),
    )
    devices = _devices(
        [BIG, BIG, BIG, SMALL, BIG, BIG, SMALL],
        [
            {"v_s1", "v_s2"},
            {"t_s1", "t_s2"},
            {"w_s1", "t_s3"},
            {"t_s2", "t_s3", "w_s2"},
            {"w_s2"},
            {"v_s2", "t_s4"},
            {"t_s4"},
        ],
    )
    links = _links(
        [("d1", "d2"), ("d1", "d4"), ("d2", "d3"), ("d2", "d4"), ("d3", "d5"), ("d3", "d6"), ("d5", "d6"),
         ("d5", "d7"), ("d6", "d7")],
        FAST,
    )
    sft = ServiceFunctionTree(
        (
            Microservice("m1", F, SMALL, "temperature", frozenset({"t_s1", "t_s2", "t_s3"}), 2),
            Microservice("m2", F, BIG, "visual", frozenset({"v_s1", "v_s2"}), 1),
            Microservice("m3", A, SMALL),
            Microservice("m4", F, SMALL, "wind", frozenset({"w_s1", "w_s2"}), 1),
            Microservice("m5", A, SMALL),
            Microservice("m6", EH, BIG),
        ),
        (
            SftEdge("m1", "m3", SLOW),
            SftEdge("m2", "m3", FAST),
            SftEdge("m3", "m5", FAST),
            SftEdge("m4", "m5", SLOW),
            SftEdge("m5", "m6", FAST),
        ),
    )
    reference = Mapping(
        placements={"m1": "d2", "m2": "d1", "m3": "d2", "m4": "d3", "m5": "d3", "m6": "d5"},
        reserved_paths={
            ("m1", "m3"): ("d2",),
            ("m2", "m3"): ("d1", "d2"),
            ("m3", "m5"): ("d2", "d3"),
            ("m4", "m5"): ("d3",),
            ("m5", "m6"): ("d3", "d5"),
        },
    )
    return Scenario(
        PhysicalNetwork(devices, links, sensors),
        sft,
        SolverConfig(),
        name="fig5",
        notes=(
            "m1, m2, m4 are filters F1, F2, F3; m3, m5 aggregators A1, A2; m6 the event handler.",
            "Requirements Small, Big, Small, Small, Small, Big; SFT links Slow, Fast, Fast, Slow, Fast for "
            "m1->m3, m2->m3, m3->m5, m4->m5, m5->m6; device capacities Big, Big, Big, Small, Big, Big, Small; "
            "all physical links Fast.",
            "Interpretation: F3's sensor need (one wind sensor) and all sensor sets and links are completed minimally; "
            "links d1-d2, d2-d3, d3-d5 carry the reference mapping's inter-device edges.",
            "Reference mapping: m1->d2, m2->d1, m3->d2, m4->d3, m5->d3, m6->d5.",
        ),
        reference_mapping=reference,
    )


def fig6_invalid() -> Scenario:
    sensors = (
        Sensor("t_s1", "temperature", "roi-1"),
        Sensor("t_s2", "temperature", "roi-1"),
        Sensor("t_s3", "temperature", "roi-1"),
        Sensor("t_s4", "temperature", "roi-2"),
        Sensor("w_s1", "wind", "roi-1"),
        Sensor("w_s2", "wind", "roi-1"),
    )
    devices = _devices(
        [BIG, BIG, SMALL, SMALL, BIG, SMALL, BIG],
        [{"w_s1", "t_s3"}, {"t_s1", "t_s2"}, {"t_s3"}, {"w_s2"}, {"t_s4"}, {"t_s4", "w_s2"}, {"t_s4"}],
    )
    links = _links(
        [("d1", "d2"), ("d1", "d4"), ("d2", "d3"), ("d2", "d4"), ("d3", "d5"), ("d4", "d6"), ("d5", "d7"),
         ("d6", "d7")],
        SLOW,
    )
    sft = ServiceFunctionTree(
        (
            Microservice("m1", F, BIG, "temperature", frozenset({"t_s1", "t_s2", "t_s3"}), 2),
            Microservice("m2", F, BIG, "wind", frozenset({"w_s1", "w_s2"}), 1),
            Microservice("m3", A, SMALL),
            Microservice("m4", EH, BIG),
        ),
        (
            SftEdge("m1", "m3", SLOW),
            SftEdge("m2", "m3", SLOW),
            SftEdge("m3", "m4", FAST),
        ),
    )
    reference = Mapping(
        placements={"m1": "d2", "m2": "d1", "m3": "d2", "m4": "d3"},
        reserved_paths={
            ("m1", "m3"): ("d2",),
            ("m2", "m3"): ("d1", "d2"),
            ("m3", "m4"): ("d2", "d3"),
        },
    )
    return Scenario(
        PhysicalNetwork(devices, links, sensors),
        sft,
        SolverConfig(),
        name="fig6",
        notes=(
            "m1, m2 are filters F1, F2; m3 aggregator A1; m4 the event handler.",
            "Requirements Big, Big, Small, Big; SFT links Slow, Slow, Fast for m1->m3, m2->m3, m3->m4; "
            "device capacities Big, Big, Small, Small, Big, Small, Big; all physical links Slow.",
            "Interpretation: F1 needs two temperature sensors, F2 one wind sensor; sensor sets and links are "
            "completed minimally.",
            "Reference mapping (invalid): m1 and m3 share d2, m2 on d1, m4 on d3 behind the Slow link d2-d3. "
            "With the stated capacities d3 is Small, so the Big event handler also overcommits d3.",
            "No valid mapping exists: the Fast edge m3->m4 cannot cross any Slow link, and m3 plus m4 need "
            "3 units, more than any single device offers.",
        ),
        reference_mapping=reference,
    )


def all_small_infeasible() -> Scenario:
    """Three Big microservices on a network of Small devices."""
    sensors = (Sensor("t_s1", "temperature", "roi-1"), Sensor("w_s1", "wind", "roi-1"))
    devices = _devices([SMALL, SMALL, SMALL], [{"t_s1"}, {"t_s1", "w_s1"}, {"w_s1"}])
    links = _links([("d1", "d2"), ("d2", "d3")], FAST)
    sft = ServiceFunctionTree(
        (
            Microservice("m1", F, BIG, "temperature", frozenset({"t_s1"}), 1),
            Microservice("m2", A, BIG),
            Microservice("m3", EH, BIG),
        ),
        (SftEdge("m1", "m2", SLOW), SftEdge("m2", "m3", SLOW)),
    )
    return Scenario(
        PhysicalNetwork(devices, links, sensors),
        sft,
        SolverConfig(),
        name="infeasible",
        notes=("Every microservice needs Big capacity but every device is Small.",),
    )


def paper_fixtures() -> list[Scenario]:
    return [fig4_simple_valid(), fig5_complex_valid(), fig6_invalid()]


def all_fixtures() -> list[Scenario]:
    return paper_fixtures() + [all_small_infeasible()]
