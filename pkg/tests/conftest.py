import itertools

import networkx as nx
import pytest
from hypothesis import HealthCheck, settings

from sftmap import fixtures
from sftmap.model import (
    FogDevice,
    Link,
    LinkUsage,
    Mapping,
    PhysicalNetwork,
    Sensor,
    ServiceFunctionTree,
    path_edges,
)

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def network(capacities: dict, links: list, sensors: dict | None = None, modality: str = "temperature"):
    """Build a network from ``{device: capacity}``, ``[(a, b, speed)]`` and ``{device: sensor ids}``."""
    sensors = sensors or {}
    all_sensors = sorted({s for ss in sensors.values() for s in ss})
    return PhysicalNetwork(
        tuple(FogDevice(d, c, frozenset(sensors.get(d, ()))) for d, c in capacities.items()),
        tuple(Link(a, b, s) for a, b, s in links),
        tuple(Sensor(s, modality, "roi") for s in all_sensors),
    )


def brute_force_path(pn: PhysicalNetwork, a: str, b: str, required: int, usage: LinkUsage, h_max: int):
    """Shortest, then lexicographically smallest, simple path with residual >= required on every link."""
    g = nx.Graph()
    g.add_nodes_from(pn.device_ids)
    g.add_edges_from(l.key for l in pn.links)
    best = None
    for path in nx.all_simple_paths(g, a, b, cutoff=h_max):
        if all(pn.link_capacity(u, v) - usage.consumed(u, v) >= required for u, v in zip(path, path[1:])):
            cand = (len(path), tuple(path))
            if best is None or cand < best:
                best = cand
    return None if best is None else best[1]


def ledger_from(sft: ServiceFunctionTree, mapping: Mapping, config) -> LinkUsage:
    """Link usage implied by a mapping's reservations, computed without the solver."""
    charges = []
    for (child, parent), path in mapping.reserved_paths.items():
        speed = sft.edge(child, parent).required_speed
        charges += [(k, speed) for k in path_edges(path)]
    for m, rec in mapping.forwarding.items():
        units = config.modality_link_requirement[sft.node(m).required_modality]
        charges += [(k, units) for k in path_edges(rec.full_path)]
    return LinkUsage(charges)


def min_hops(pn: PhysicalNetwork, a: str, b: str, required: int, usage: LinkUsage, h_max: int):
    path = brute_force_path(pn, a, b, required, usage, h_max)
    return None if path is None else len(path) - 1


@pytest.fixture
def fig4():
    return fixtures.fig4_simple_valid()


@pytest.fixture
def fig5():
    return fixtures.fig5_complex_valid()


@pytest.fixture
def fig6():
    return fixtures.fig6_invalid()


@pytest.fixture
def infeasible():
    return fixtures.all_small_infeasible()


def pairs(iterable):
    return list(itertools.combinations(iterable, 2))


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[0][1:])):
            terminalreporter.write_line(line)
