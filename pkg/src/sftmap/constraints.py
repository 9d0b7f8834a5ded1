"""Constraint predicates, path search and the independent mapping validator.

Every function here is pure: ledgers come in and new ledgers go out, and a
failed check always hands back the ledger it was given.
"""

from __future__ import annotations

from collections import defaultdict, deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from .model import (
    ConfigError,
    FogDevice,
    LinkUsage,
    Mapping,
    Microservice,
    PhysicalNetwork,
    ServiceFunctionTree,
    SolverConfig,
    link_key,
    path_edges,
)


class ConstraintKind(str, Enum):
    SENSOR_SELECTION = "SensorSelection"
    RESOURCE_ALLOCATION = "ResourceAllocation"
    PATH_CONNECTIVITY = "PathConnectivity"
    LINK_CAPACITY = "LinkCapacity"
    LATENCY = "Latency"


_KIND_ORDER = {k: i for i, k in enumerate(ConstraintKind)}


@dataclass(frozen=True)
class Violation:
    constraint: ConstraintKind
    subject: tuple[str, ...]
    detail: str

    def sort_key(self):
        return (_KIND_ORDER[self.constraint], self.subject)


class PathCheck(NamedTuple):
    ok: bool
    usage: LinkUsage
    path: tuple[str, ...] | None


def has_required_sensors(device: FogDevice, eligible: Iterable[str], count: int) -> bool:
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return True
    return len(device.sensors_in_range.intersection(eligible)) >= count


def device_load(device_id: str, placements, sft: ServiceFunctionTree) -> int:
    if isinstance(placements, Mapping):
        placements = placements.placements
    return sum(sft.node(m).required_capacity for m, d in placements.items() if d == device_id)


def is_resource_compatible(device: FogDevice, required: int, placements, sft: ServiceFunctionTree) -> bool:
    return device.capacity - device_load(device.id, placements, sft) >= required


def find_feasible_path(
    pn: PhysicalNetwork,
    source: str,
    target: str,
    required: int,
    usage: LinkUsage,
    h_max: int,
) -> tuple[str, ...] | None:
    """Fewest-hop path whose every link has ``required`` units spare.

    Breadth-first over the residual graph with neighbours expanded in id
    order, so among equal-length paths the lexicographically smallest device
    sequence is returned.  Paths longer than ``h_max`` hops are never returned.
    """
    if source == target:
        raise ValueError("source and target must differ")
    pn.device(source), pn.device(target)
    parent = {source: None}
    frontier = deque([(source, 0)])
    while frontier:
        cur, dist = frontier.popleft()
        if dist == h_max:
            continue
        for nb, key, cap in pn.incident(cur):
            if nb in parent or cap - usage.consumed_on(key) < required:
                continue
            parent[nb] = cur
            if nb == target:
                path = [nb]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                return tuple(reversed(path))
            frontier.append((nb, dist + 1))
    return None


def validate_path(
    pn: PhysicalNetwork,
    sft: ServiceFunctionTree,
    pred: str,
    m: str,
    d_pred: str,
    d: str,
    usage: LinkUsage,
    h_max: int,
) -> PathCheck:
    """Reserve a path for SFT edge ``pred -> m`` between their hosts.

    Co-located microservices need no link, so the ledger passes through.
    """
    edge = sft.edge(pred, m)
    if d_pred == d:
        return PathCheck(True, usage, (d,))
    path = find_feasible_path(pn, d_pred, d, edge.required_speed, usage, h_max)
    if path is None:
        return PathCheck(False, usage, None)
    return PathCheck(True, usage.charge(path, edge.required_speed), path)


def validate_connectivity_and_link_speed(
    pn: PhysicalNetwork,
    sft: ServiceFunctionTree,
    m: str,
    d: str,
    placements: dict[str, str],
    usage: LinkUsage,
    h_max: int,
) -> tuple[bool, LinkUsage, dict[tuple[str, str], tuple[str, ...]]]:
    """Validate every already-placed predecessor of ``m`` against device ``d``, all or nothing."""
    current = usage
    paths = {}
    for p in sft.predecessors(m):
        if p not in placements:
            continue
        ok, current, path = validate_path(pn, sft, p, m, placements[p], d, current, h_max)
        if not ok:
            return False, usage, {}
        paths[(p, m)] = path
    return True, current, paths


def det_link_requirement(m: Microservice, config: SolverConfig) -> int:
    if not m.needs_sensors:
        raise ValueError(f"{m.id} does not consume sensor data")
    try:
        return config.modality_link_requirement[m.required_modality]
    except KeyError:
        raise ConfigError(f"no link requirement configured for modality {m.required_modality!r}") from None


def validate_extended_path(
    pn: PhysicalNetwork, path: Sequence[str], required: int, usage: LinkUsage
) -> tuple[bool, LinkUsage]:
    """Charge ``required`` units on every link of a sensor-forwarding path, if they all have room."""
    for a, b in zip(path, path[1:]):
        if not pn.adjacent(a, b):
            raise ValueError(f"path step {a}-{b} is not a physical link")
        if pn.link_capacity(a, b) - usage.consumed(a, b) < required:
            return False, usage
    if len(path) < 2:
        return True, usage
    return True, usage.charge(path, required)


# -- full-mapping validator -------------------------------------------------


def _path_defect(pn: PhysicalNetwork, path: Sequence[str], start: str, end: str) -> str | None:
    if not path:
        return "empty path"
    if path[0] != start or path[-1] != end:
        return f"path runs {path[0]}..{path[-1]}, expected {start}..{end}"
    if len(set(path)) != len(path):
        return "path revisits a device"
    for a, b in zip(path, path[1:]):
        if not pn.has_device(a) or not pn.has_device(b):
            return f"path names unknown device in step {a}-{b}"
        if not pn.adjacent(a, b):
            return f"no physical link {a}-{b}"
    return None


def validate_full_mapping(
    pn: PhysicalNetwork, sft: ServiceFunctionTree, mapping: Mapping, config: SolverConfig
) -> list[Violation]:
    """Re-check every placement constraint from scratch.

    Only the mapping's own records are consulted: placements, reserved paths
    and forwarding records.  Link consumption is re-aggregated from the
    recorded paths rather than taken from any solver ledger.
    """
    placements = mapping.placements
    missing = [m for m in sft.node_ids if m not in placements]
    if missing:
        raise ValueError(f"mapping does not place {missing}")
    for m, d in placements.items():
        sft.node(m)
        if not pn.has_device(d):
            raise ValueError(f"{m} placed on unknown device {d!r}")

    out: list[Violation] = []
    SS, RA, PC, LC, LAT = ConstraintKind
    # (link key) -> list of (label, units)
    carried: dict[tuple[str, str], list[tuple[str, int]]] = defaultdict(list)

    # sensor selection, including relayed sensor data
    for m in sft.nodes:
        rec = mapping.forwarding.get(m.id)
        host = placements[m.id]
        if not m.needs_sensors:
            if rec is not None:
                out.append(Violation(SS, (m.id,), f"{m.id} consumes no sensor data but has a forwarding record"))
            continue
        if rec is None:
            if not has_required_sensors(pn.device(host), m.eligible_sensors, m.required_sensor_count):
                out.append(
                    Violation(
                        SS,
                        (m.id, host),
                        f"{host} reaches {len(pn.device(host).sensors_in_range & m.eligible_sensors)} of the "
                        f"{m.required_sensor_count} eligible {m.required_modality} sensors {m.id} needs",
                    )
                )
            continue
        origin = rec.selected_sensor_device
        if rec.host != host:
            out.append(Violation(SS, (m.id, rec.host), f"forwarding record targets {rec.host} but {m.id} is on {host}"))
            continue
        if not pn.has_device(origin) or not has_required_sensors(
            pn.device(origin), m.eligible_sensors, m.required_sensor_count
        ):
            out.append(Violation(SS, (m.id, origin), f"forwarding origin {origin} does not cover the sensors {m.id} needs"))
            continue
        full = rec.full_path
        defect = _path_defect(pn, full, origin, host) if len(full) > 1 else "forwarding path is empty"
        if defect:
            out.append(Violation(PC, (m.id, origin, host), f"forwarding path for {m.id}: {defect}"))
            continue
        hops = len(full) - 1
        if hops > config.h_max:
            out.append(Violation(LAT, (m.id, origin, host), f"forwarding for {m.id} takes {hops} hops > h_max {config.h_max}"))
        units = det_link_requirement(m, config)
        for key in path_edges(full):
            carried[key].append((f"sensor data {origin}->{m.id}", units))

    # resource allocation
    for dev in pn.devices:
        hosted = sorted(m for m, d in placements.items() if d == dev.id)
        used = sum(sft.node(m).required_capacity for m in hosted)
        if used > dev.capacity:
            out.append(
                Violation(
                    RA,
                    (dev.id,),
                    f"device {dev.id} has capacity {dev.capacity} but hosts {', '.join(hosted)} requiring {used}",
                )
            )

    # path connectivity and latency per SFT edge
    edge_keys = {e.key for e in sft.edges}
    for key in sorted(mapping.reserved_paths):
        if key not in edge_keys:
            out.append(Violation(PC, key, f"reserved path for {key[0]}->{key[1]}, which is not an SFT edge"))
    for e in sft.edges:
        src, dst = placements[e.source], placements[e.target]
        path = mapping.reserved_paths.get(e.key)
        label = f"{e.source}->{e.target}"
        if src == dst:
            if path is not None and tuple(path) != (src,):
                out.append(Violation(PC, e.key, f"{label} is co-located on {src} but reserves links {list(path)}"))
            continue
        if path is None:
            out.append(Violation(PC, e.key, f"{label} spans {src} and {dst} but has no reserved path"))
            continue
        defect = _path_defect(pn, path, src, dst)
        if defect:
            out.append(Violation(PC, e.key, f"{label}: {defect}"))
            continue
        hops = len(path) - 1
        if hops > config.h_max:
            out.append(Violation(LAT, e.key, f"{label} takes {hops} hops > h_max {config.h_max}"))
        for k in path_edges(path):
            carried[k].append((label, e.required_speed))

    # link capacity
    for k in sorted(carried):
        total = sum(u for _, u in carried[k])
        cap = pn.link_capacity(*k)
        if total > cap:
            flows = ", ".join(f"{lbl} ({u})" for lbl, u in carried[k])
            out.append(Violation(LC, k, f"link {k[0]}-{k[1]} has capacity {cap} but carries {total}: {flows}"))

    return sorted(out, key=Violation.sort_key)


def mapping_link_usage(pn: PhysicalNetwork, sft: ServiceFunctionTree, mapping: Mapping, config: SolverConfig) -> LinkUsage:
    """Link consumption implied by a mapping's reserved and forwarding paths."""
    usage = LinkUsage()
    for key, path in mapping.reserved_paths.items():
        usage = usage.charge(path, sft.edge(*key).required_speed)
    for m, rec in mapping.forwarding.items():
        usage = usage.charge(rec.full_path, det_link_requirement(sft.node(m), config))
    return usage


__all__ = [
    "ConstraintKind",
    "PathCheck",
    "Violation",
    "det_link_requirement",
    "device_load",
    "find_feasible_path",
    "has_required_sensors",
    "is_resource_compatible",
    "link_key",
    "mapping_link_usage",
    "validate_connectivity_and_link_speed",
    "validate_extended_path",
    "validate_full_mapping",
    "validate_path",
]
