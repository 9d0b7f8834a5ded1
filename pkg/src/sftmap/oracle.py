"""Brute-force feasibility oracle for small scenarios.

Enumerates every assignment of microservices to devices and routes each one
with an exhaustive simple-path search, independently of the solver's
breadth-first machinery.  Routes are reserved in a fixed canonical order
(relayed sensor streams for leaves first, then SFT edges grouped by parent
height) with the fewest-hops, lexicographically-smallest rule, so a
placement's verdict does not depend on the enumeration order.
"""

from __future__ import annotations

import itertools
from collections.abc import Iterator, Sequence

import networkx as nx

from .constraints import validate_full_mapping
from .model import (
    ForwardingRecord,
    LinkUsage,
    Mapping,
    PhysicalNetwork,
    ServiceFunctionTree,
    SolverConfig,
    path_edges,
)
from .solver import device_sequence

DEFAULT_EXPLOSION_CAP = 10**7


class OracleLimitError(RuntimeError):
    def __init__(self, bound: int, cap: int):
        self.bound = bound
        self.cap = cap
        super().__init__(f"{bound} candidate placements exceeds the explosion cap of {cap}")


def _heights(sft: ServiceFunctionTree) -> dict[str, int]:
    children: dict[str, list[str]] = {m: [] for m in sft.node_ids}
    for e in sft.edges:
        children[e.target].append(e.source)
    memo: dict[str, int] = {}

    def h(node):
        if node not in memo:
            memo[node] = 0 if not children[node] else 1 + max(h(c) for c in children[node])
        return memo[node]

    return {m: h(m) for m in sft.node_ids}


class _Router:
    def __init__(self, pn: PhysicalNetwork, sft: ServiceFunctionTree, config: SolverConfig):
        self.pn = pn
        self.sft = sft
        self.config = config
        self.graph = nx.Graph()
        self.graph.add_nodes_from(pn.device_ids)
        self.graph.add_edges_from((l.a, l.b) for l in pn.links)
        self._paths: dict[tuple[str, str], list[tuple[str, ...]]] = {}
        heights = _heights(sft)
        self.leaves = sorted(m.id for m in sft.nodes if m.needs_sensors)
        self.edges = sorted(sft.edges, key=lambda e: (heights[e.target], e.target, e.source))
        rank = {d: i for i, d in enumerate(device_sequence(pn, config))}
        self.covering = {}
        for m in sft.nodes:
            if m.needs_sensors:
                devs = [
                    d.id
                    for d in pn.devices
                    if len(d.sensors_in_range & m.eligible_sensors) >= m.required_sensor_count
                ]
                self.covering[m.id] = sorted(devs, key=rank.__getitem__)

    def simple_paths(self, src: str, dst: str) -> list[tuple[str, ...]]:
        key = (src, dst)
        if key not in self._paths:
            found = nx.all_simple_paths(self.graph, src, dst, cutoff=self.config.h_max)
            self._paths[key] = sorted((tuple(p) for p in found), key=lambda p: (len(p), p))
        return self._paths[key]

    def first_fit(self, src, dst, units, usage) -> tuple[str, ...] | None:
        for p in self.simple_paths(src, dst):
            if all(self.pn.link_capacity(a, b) - usage.consumed(a, b) >= units for a, b in path_edges(p)):
                return p
        return None

    def route(self, placement: dict[str, str]) -> Mapping | None:
        """Reserve every route a placement needs, or ``None`` if one cannot be found."""
        usage = LinkUsage()
        forwarding = {}
        for m in self.leaves:
            host = placement[m]
            origins = self.covering[m]
            if host in origins:
                continue
            units = self.config.modality_link_requirement[self.sft.node(m).required_modality]
            best = None
            for rank, origin in enumerate(origins):
                p = self.first_fit(origin, host, units, usage)
                if p is not None and (best is None or len(p) < len(best[1])):
                    best = (rank, p)
            if best is None:
                return None
            path = best[1]
            usage = usage.charge(path, units)
            forwarding[m] = ForwardingRecord(path[0], host, path[1:])
        reserved = {}
        for e in self.edges:
            src, dst = placement[e.source], placement[e.target]
            if src == dst:
                reserved[e.key] = (src,)
                continue
            p = self.first_fit(src, dst, e.required_speed, usage)
            if p is None:
                return None
            usage = usage.charge(p, e.required_speed)
            reserved[e.key] = p
        return Mapping(
            placements=dict(sorted(placement.items())),
            reserved_paths=dict(sorted(reserved.items())),
            forwarding=dict(sorted(forwarding.items())),
        )


def placement_bound(pn: PhysicalNetwork, sft: ServiceFunctionTree) -> int:
    return len(pn.devices) ** len(sft.nodes)


def iter_valid_mappings(
    pn: PhysicalNetwork,
    sft: ServiceFunctionTree,
    config: SolverConfig | None = None,
    order: Sequence[str] | None = None,
) -> Iterator[Mapping]:
    """Yield every feasible mapping; ``order`` fixes which microservice varies slowest."""
    config = config or SolverConfig()
    router = _Router(pn, sft, config)
    order = list(order or sft.node_ids)
    if sorted(order) != sorted(sft.node_ids):
        raise ValueError("order must be a permutation of the SFT's microservices")
    devices = pn.device_ids
    caps = {d.id: d.capacity for d in pn.devices}
    req = {m.id: m.required_capacity for m in sft.nodes}
    for combo in itertools.product(devices, repeat=len(order)):
        load = dict.fromkeys(devices, 0)
        for m, d in zip(order, combo):
            load[d] += req[m]
        if any(load[d] > caps[d] for d in devices):
            continue
        placement = dict(zip(order, combo))
        mapping = router.route(placement)
        if mapping is None:
            continue
        if validate_full_mapping(pn, sft, mapping, config):
            raise AssertionError(f"oracle produced an invalid mapping: {mapping}")
        yield mapping


def enumerate_valid_mappings(
    pn: PhysicalNetwork,
    sft: ServiceFunctionTree,
    config: SolverConfig | None = None,
    limit: int | None = None,
    cap: int = DEFAULT_EXPLOSION_CAP,
    order: Sequence[str] | None = None,
) -> list[Mapping]:
    bound = placement_bound(pn, sft)
    if limit is None and bound > cap:
        raise OracleLimitError(bound, cap)
    it = iter_valid_mappings(pn, sft, config, order)
    return list(itertools.islice(it, limit)) if limit is not None else list(it)


def oracle_feasible(
    pn: PhysicalNetwork, sft: ServiceFunctionTree, config: SolverConfig | None = None, cap: int = DEFAULT_EXPLOSION_CAP
) -> bool:
    """True as soon as one feasible mapping turns up."""
    bound = placement_bound(pn, sft)
    if bound > cap:
        raise OracleLimitError(bound, cap)
    return next(iter_valid_mappings(pn, sft, config), None) is not None


__all__ = [
    "DEFAULT_EXPLOSION_CAP",
    "OracleLimitError",
    "enumerate_valid_mappings",
    "iter_valid_mappings",
    "oracle_feasible",
    "placement_bound",
]
