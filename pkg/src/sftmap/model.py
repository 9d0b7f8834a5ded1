"""Domain types shared by the solver, validator, oracle, generator and I/O.

Capacities and link speeds are plain integer units.  The two-level labels
map onto them as ``Small = Slow = 1`` and ``Big = Fast = 2``, so a Big
device holds two Small microservices and a Fast link carries two Slow
connections.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Iterator, Mapping as MappingABC
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

SMALL = 1
BIG = 2
SLOW = 1
FAST = 2

CAPACITY_LABELS = {"Small": SMALL, "Big": BIG}
SPEED_LABELS = {"Slow": SLOW, "Fast": FAST}

_MODALITY_RE = re.compile(r"^[a-z0-9_\-]+$")


class ModelError(ValueError):
    """A domain object violates one of its construction invariants."""


class ScenarioError(ValueError):
    """A scenario is structurally invalid.  ``defects`` lists every problem found."""

    def __init__(self, message: str, defects: Iterable[str] = ()):
        self.defects = list(defects)
        if self.defects:
            message = message + ": " + "; ".join(self.defects)
        super().__init__(message)


class ConfigError(ValueError):
    """Solver configuration cannot answer a question it was asked."""


def check_modality(tag: str) -> str:
    if not isinstance(tag, str) or not tag or not _MODALITY_RE.match(tag):
        raise ModelError(f"invalid sensor modality {tag!r}: must be non-empty lowercase without whitespace")
    return tag


def parse_units(value, labels: MappingABC[str, int] | None = None, *, positive: bool = False) -> int:
    """Accept an integer or one of the textual labels (``"Big"``, ``"Fast"`` ...)."""
    if isinstance(value, str) and labels is not None:
        try:
            return labels[value]
        except KeyError:
            raise ModelError(f"unknown unit label {value!r}; expected one of {sorted(labels)}") from None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ModelError(f"units must be an integer, got {value!r}")
    if value < 0 or (positive and value == 0):
        raise ModelError(f"units must be {'positive' if positive else 'non-negative'}, got {value}")
    return value


def link_key(a: str, b: str) -> tuple[str, str]:
    """Canonical key of an undirected device pair."""
    return (a, b) if a <= b else (b, a)


def path_edges(path: Iterable[str]) -> Iterator[tuple[str, str]]:
    """Canonical link keys along a device-id path."""
    it = iter(path)
    prev = next(it, None)
    for cur in it:
        yield link_key(prev, cur)
        prev = cur


# -- physical network -------------------------------------------------------


@dataclass(frozen=True)
class Sensor:
    id: str
    modality: str
    roi: str

    def __post_init__(self):
        check_modality(self.modality)
        if not self.id:
            raise ModelError("sensor id must be non-empty")
        if not self.roi:
            raise ModelError(f"sensor {self.id}: roi must be non-empty")


@dataclass(frozen=True)
class FogDevice:
    id: str
    capacity: int
    sensors_in_range: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.id:
            raise ModelError("device id must be non-empty")
        object.__setattr__(self, "capacity", parse_units(self.capacity, CAPACITY_LABELS))
        object.__setattr__(self, "sensors_in_range", frozenset(self.sensors_in_range))


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    capacity: int

    def __post_init__(self):
        if self.a == self.b:
            raise ModelError(f"self-loop on device {self.a}")
        a, b = link_key(self.a, self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "capacity", parse_units(self.capacity, SPEED_LABELS, positive=True))

    @property
    def key(self) -> tuple[str, str]:
        return (self.a, self.b)


@dataclass(frozen=True)
class PhysicalNetwork:
    """Undirected substrate graph of fog devices, their links and the sensors they reach.

    Devices and links are kept sorted by id so that two networks built from
    the same data in a different order compare equal.
    """

    devices: tuple[FogDevice, ...]
    links: tuple[Link, ...] = ()
    sensors: tuple[Sensor, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(sorted(self.devices, key=lambda d: d.id)))
        object.__setattr__(self, "links", tuple(sorted(self.links, key=lambda l: l.key)))
        object.__setattr__(self, "sensors", tuple(sorted(self.sensors, key=lambda s: s.id)))
        defects = self.defects()
        if defects:
            raise ScenarioError("invalid physical network", defects)

    def defects(self) -> list[str]:
        out = []
        ids = [d.id for d in self.devices]
        if len(set(ids)) != len(ids):
            out.append("duplicate device ids")
        known = set(ids)
        seen = set()
        for link in self.links:
            for end in link.key:
                if end not in known:
                    out.append(f"link {link.a}-{link.b} names unknown device {end}")
            if link.key in seen:
                out.append(f"duplicate link {link.a}-{link.b}")
            seen.add(link.key)
        sensor_ids = [s.id for s in self.sensors]
        if len(set(sensor_ids)) != len(sensor_ids):
            out.append("duplicate sensor ids")
        sensor_set = set(sensor_ids)
        for d in self.devices:
            missing = sorted(d.sensors_in_range - sensor_set)
            if missing:
                out.append(f"device {d.id} lists unknown sensors {missing}")
        return out

    @cached_property
    def _device_index(self) -> dict[str, FogDevice]:
        return {d.id: d for d in self.devices}

    @cached_property
    def _capacity_index(self) -> dict[tuple[str, str], int]:
        return {l.key: l.capacity for l in self.links}

    @cached_property
    def _adjacency(self) -> dict[str, tuple[str, ...]]:
        adj: dict[str, list[str]] = {d.id: [] for d in self.devices}
        for l in self.links:
            adj[l.a].append(l.b)
            adj[l.b].append(l.a)
        return {k: tuple(sorted(v)) for k, v in adj.items()}

    @cached_property
    def _incidence(self) -> dict[str, tuple[tuple[str, tuple[str, str], int], ...]]:
        return {
            d: tuple((nb, link_key(d, nb), self._capacity_index[link_key(d, nb)]) for nb in nbs)
            for d, nbs in self._adjacency.items()
        }

    @cached_property
    def _sensor_index(self) -> dict[str, Sensor]:
        return {s.id: s for s in self.sensors}

    @property
    def device_ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.devices)

    def device(self, device_id: str) -> FogDevice:
        try:
            return self._device_index[device_id]
        except KeyError:
            raise KeyError(f"unknown device {device_id!r}") from None

    def has_device(self, device_id: str) -> bool:
        return device_id in self._device_index

    def sensor(self, sensor_id: str) -> Sensor:
        return self._sensor_index[sensor_id]

    def neighbors(self, device_id: str) -> tuple[str, ...]:
        """Adjacent device ids in ascending order."""
        return self._adjacency[device_id]

    def incident(self, device_id: str) -> tuple[tuple[str, tuple[str, str], int], ...]:
        """``(neighbour, link key, link capacity)`` triples in neighbour order."""
        return self._incidence[device_id]

    def adjacent(self, a: str, b: str) -> bool:
        return link_key(a, b) in self._capacity_index

    def link_capacity(self, a: str, b: str) -> int:
        try:
            return self._capacity_index[link_key(a, b)]
        except KeyError:
            raise KeyError(f"no link between {a!r} and {b!r}") from None

    @property
    def modalities(self) -> frozenset[str]:
        return frozenset(s.modality for s in self.sensors)


# -- service function tree --------------------------------------------------


class MicroserviceKind(str, Enum):
    FILTER = "Filter"
    AGGREGATOR = "Aggregator"
    EVENT_HANDLER = "EventHandler"


@dataclass(frozen=True)
class Microservice:
    id: str
    kind: MicroserviceKind
    required_capacity: int
    required_modality: str | None = None
    eligible_sensors: frozenset[str] = frozenset()
    required_sensor_count: int = 0

    def __post_init__(self):
        if not self.id:
            raise ModelError("microservice id must be non-empty")
        object.__setattr__(self, "kind", MicroserviceKind(self.kind))
        object.__setattr__(self, "required_capacity", parse_units(self.required_capacity, CAPACITY_LABELS))
        object.__setattr__(self, "eligible_sensors", frozenset(self.eligible_sensors))
        count = self.required_sensor_count
        if isinstance(count, bool) or not isinstance(count, int) or count < 0:
            raise ModelError(f"{self.id}: required_sensor_count must be a non-negative integer")
        if self.required_modality is not None:
            check_modality(self.required_modality)
        if count > 0:
            if not self.eligible_sensors:
                raise ModelError(f"{self.id}: requires {count} sensors but has no eligible sensors")
            if self.required_modality is None:
                raise ModelError(f"{self.id}: requires sensors but names no modality")
            if count > len(self.eligible_sensors):
                raise ModelError(
                    f"{self.id}: requires {count} sensors but only {len(self.eligible_sensors)} are eligible"
                )
        elif self.eligible_sensors:
            raise ModelError(f"{self.id}: eligible sensors given but required_sensor_count is 0")

    @property
    def needs_sensors(self) -> bool:
        return self.required_sensor_count > 0


@dataclass(frozen=True)
class SftEdge:
    """Data flows from ``source`` (child) to ``target`` (parent)."""

    source: str
    target: str
    required_speed: int

    def __post_init__(self):
        object.__setattr__(self, "required_speed", parse_units(self.required_speed, SPEED_LABELS, positive=True))

    @property
    def key(self) -> tuple[str, str]:
        return (self.source, self.target)


@dataclass(frozen=True)
class ServiceFunctionTree:
    nodes: tuple[Microservice, ...]
    edges: tuple[SftEdge, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda m: m.id)))
        object.__setattr__(self, "edges", tuple(sorted(self.edges, key=lambda e: e.key)))

    @cached_property
    def _node_index(self) -> dict[str, Microservice]:
        return {m.id: m for m in self.nodes}

    @cached_property
    def _preds(self) -> dict[str, tuple[str, ...]]:
        preds: dict[str, list[str]] = {m.id: [] for m in self.nodes}
        for e in self.edges:
            preds.setdefault(e.target, []).append(e.source)
        return {k: tuple(sorted(v)) for k, v in preds.items()}

    @cached_property
    def _edge_index(self) -> dict[tuple[str, str], SftEdge]:
        return {e.key: e for e in self.edges}

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.nodes)

    def node(self, ms_id: str) -> Microservice:
        try:
            return self._node_index[ms_id]
        except KeyError:
            raise KeyError(f"unknown microservice {ms_id!r}") from None

    def predecessors(self, ms_id: str) -> tuple[str, ...]:
        """Children feeding ``ms_id``, in ascending id order."""
        return self._preds.get(ms_id, ())

    def edge(self, source: str, target: str) -> SftEdge:
        return self._edge_index[(source, target)]

    def successor(self, ms_id: str) -> str | None:
        for e in self.edges:
            if e.source == ms_id:
                return e.target
        return None

    @property
    def leaves(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.nodes if not self._preds.get(m.id))

    @property
    def root(self) -> str | None:
        sources = {e.source for e in self.edges}
        sinks = [m.id for m in self.nodes if m.id not in sources]
        return sinks[0] if len(sinks) == 1 else None

    @property
    def modalities(self) -> frozenset[str]:
        return frozenset(m.required_modality for m in self.nodes if m.required_modality)


def sft_well_formed(sft: ServiceFunctionTree) -> list[str]:
    """Structural defects of an SFT; an empty list means the tree is usable."""
    defects: list[str] = []
    ids = [m.id for m in sft.nodes]
    if not ids:
        return ["tree has no microservices"]
    if len(set(ids)) != len(ids):
        defects.append("duplicate microservice ids")
    known = set(ids)

    out_edges: dict[str, list[SftEdge]] = {i: [] for i in ids}
    in_edges: dict[str, list[SftEdge]] = {i: [] for i in ids}
    seen = set()
    for e in sft.edges:
        bad = False
        for end in e.key:
            if end not in known:
                defects.append(f"edge {e.source}->{e.target} names unknown microservice {end}")
                bad = True
        if e.source == e.target:
            defects.append(f"self-loop on {e.source}")
            bad = True
        if e.key in seen:
            defects.append(f"duplicate edge {e.source}->{e.target}")
            bad = True
        seen.add(e.key)
        if not bad:
            out_edges[e.source].append(e)
            in_edges[e.target].append(e)

    # Kahn's algorithm for cycle detection
    indeg = {i: len(in_edges[i]) for i in ids}
    ready = [i for i in ids if indeg[i] == 0]
    visited = 0
    while ready:
        cur = ready.pop()
        visited += 1
        for e in out_edges[cur]:
            indeg[e.target] -= 1
            if indeg[e.target] == 0:
                ready.append(e.target)
    if visited != len(set(ids)):
        defects.append("tree contains a cycle")

    sinks = [i for i in ids if not out_edges[i]]
    if len(sinks) > 1:
        defects.append(f"multiple sink nodes: {sorted(sinks)}")
    elif not sinks:
        defects.append("no sink node")
    single = len(ids) == 1

    for m in sft.nodes:
        n_out, n_in = len(out_edges.get(m.id, ())), len(in_edges.get(m.id, ()))
        if n_out > 1:
            defects.append(f"{m.id} has {n_out} outgoing edges; at most one allowed")
        if m.kind is MicroserviceKind.EVENT_HANDLER:
            if n_out:
                defects.append(f"event handler {m.id} must not have outgoing edges")
            if n_in == 0 and not single:
                defects.append(f"event handler {m.id} has no incoming edges")
        else:
            if n_out == 0:
                defects.append(f"root {m.id} must be an EventHandler, not {m.kind.value}")
            if m.kind is MicroserviceKind.FILTER and n_in > 1:
                defects.append(f"filter {m.id} has {n_in} incoming edges; at most one allowed")
            if m.kind is MicroserviceKind.AGGREGATOR and n_in == 0:
                defects.append(f"aggregator {m.id} has no incoming edges")
        if n_in == 0 and not m.needs_sensors:
            defects.append(f"leaf {m.id} must require sensors")
        if n_in > 0 and m.needs_sensors:
            defects.append(f"internal node {m.id} must not require sensors")
    return defects


# -- mappings and solver I/O ------------------------------------------------


class LinkUsage(MappingABC):
    """Consumed speed units per physical link.

    Instances are immutable; :meth:`charge` returns a new ledger, which is how
    the solver takes its per-attempt copies.  Links with zero consumption are
    not stored, so ledgers compare equal regardless of how they were built.
    """

    __slots__ = ("_data",)

    def __init__(self, consumed: MappingABC[tuple[str, str], int] | Iterable = ()):
        data = {}
        items = consumed.items() if isinstance(consumed, MappingABC) else consumed
        for (a, b), units in items:
            if units < 0:
                raise ModelError(f"negative consumption on {a}-{b}")
            if units:
                data[link_key(a, b)] = data.get(link_key(a, b), 0) + units
        self._data = data

    def __getitem__(self, key):
        return self._data.get(link_key(*key), 0)

    def __iter__(self):
        return iter(sorted(self._data))

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return link_key(*key) in self._data

    def __eq__(self, other):
        if isinstance(other, LinkUsage):
            return self._data == other._data
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._data.items()))

    def __repr__(self):
        inner = ", ".join(f"{a}-{b}: {u}" for (a, b), u in sorted(self._data.items()))
        return f"LinkUsage({{{inner}}})"

    def consumed(self, a: str, b: str) -> int:
        return self._data.get(link_key(a, b), 0)

    def consumed_on(self, key: tuple[str, str]) -> int:
        """Like :meth:`consumed` for an already canonical link key."""
        return self._data.get(key, 0)

    def residual(self, pn: PhysicalNetwork, a: str, b: str) -> int:
        return pn.link_capacity(a, b) - self.consumed(a, b)

    def charge(self, path: Iterable[str], units: int) -> LinkUsage:
        new = LinkUsage.__new__(LinkUsage)
        data = dict(self._data)
        for key in path_edges(path):
            data[key] = data.get(key, 0) + units
        new._data = data
        return new


@dataclass(frozen=True)
class ForwardingRecord:
    """Sensor data relayed from ``selected_sensor_device`` to ``host``.

    ``path`` lists the devices after the sensor device, ending with the host.
    """

    selected_sensor_device: str
    host: str
    path: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "path", tuple(self.path))

    @property
    def full_path(self) -> tuple[str, ...]:
        return (self.selected_sensor_device,) + self.path

    @property
    def forwarding_nodes(self) -> tuple[str, ...]:
        return self.full_path[:-1]


@dataclass(frozen=True)
class Mapping:
    placements: dict[str, str] = field(default_factory=dict)
    reserved_paths: dict[tuple[str, str], tuple[str, ...]] = field(default_factory=dict)
    forwarding: dict[str, ForwardingRecord] = field(default_factory=dict)

    def hosted_on(self, device_id: str) -> list[str]:
        return sorted(m for m, d in self.placements.items() if d == device_id)

    @property
    def forwarding_nodes(self) -> list[str]:
        nodes = set()
        for rec in self.forwarding.values():
            nodes.update(rec.forwarding_nodes)
        return sorted(nodes)

    def is_complete(self, sft: ServiceFunctionTree) -> bool:
        return set(self.placements) == set(sft.node_ids)


DEFAULT_LINK_REQUIREMENTS = {
    "acoustic": SLOW,
    "humidity": SLOW,
    "moisture": SLOW,
    "movement": SLOW,
    "strain": SLOW,
    "temperature": SLOW,
    "visual": FAST,
    "wind": SLOW,
}

DEVICE_ORDERS = ("id", "random")
PRUNING_MODES = ("backjump", "none")


@dataclass(frozen=True)
class SolverConfig:
    h_max: int = 3
    modality_link_requirement: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_LINK_REQUIREMENTS))
    device_order: str = "id"
    random_seed: int | None = None
    pruning: str = "backjump"

    def __post_init__(self):
        if self.pruning not in PRUNING_MODES:
            raise ModelError(f"unknown pruning mode {self.pruning!r}; expected one of {PRUNING_MODES}")
        if isinstance(self.h_max, bool) or not isinstance(self.h_max, int) or self.h_max < 1:
            raise ModelError(f"h_max must be a positive integer, got {self.h_max!r}")
        if self.device_order not in DEVICE_ORDERS:
            raise ModelError(f"unknown device order {self.device_order!r}; expected one of {DEVICE_ORDERS}")
        table = {}
        for mod, units in self.modality_link_requirement.items():
            table[check_modality(mod)] = parse_units(units, SPEED_LABELS, positive=True)
        object.__setattr__(self, "modality_link_requirement", dict(sorted(table.items())))

    def with_modalities(self, modalities: Iterable[str]) -> SolverConfig:
        """Copy with a Slow entry added for every modality the table lacks."""
        table = dict(self.modality_link_requirement)
        for mod in modalities:
            table.setdefault(mod, SLOW)
        return self.replace(modality_link_requirement=table)

    def replace(self, **changes) -> SolverConfig:
        params = dict(
            h_max=self.h_max,
            modality_link_requirement=self.modality_link_requirement,
            device_order=self.device_order,
            random_seed=self.random_seed,
            pruning=self.pruning,
        )
        params.update(changes)
        return SolverConfig(**params)


@dataclass
class SolverStats:
    attempts: int = 0
    backtracks: int = 0
    extended_searches: int = 0
    elapsed: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class MappingResult:
    success: bool
    mapping: Mapping
    final_link_usage: LinkUsage
    stats: SolverStats


@dataclass(frozen=True)
class Scenario:
    """Network + SFT + solver configuration: the unit of I/O and testing."""

    network: PhysicalNetwork
    sft: ServiceFunctionTree
    config: SolverConfig = field(default_factory=SolverConfig)
    name: str = "scenario"
    notes: tuple[str, ...] = ()
    reference_mapping: Mapping | None = None

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(self.notes))
        defects = scenario_defects(self.network, self.sft, self.config)
        if defects:
            raise ScenarioError(f"invalid scenario {self.name!r}", defects)


def scenario_defects(pn: PhysicalNetwork, sft: ServiceFunctionTree, config: SolverConfig) -> list[str]:
    defects = list(sft_well_formed(sft))
    sensors = {s.id: s for s in pn.sensors}
    for m in sft.nodes:
        for sid in sorted(m.eligible_sensors):
            s = sensors.get(sid)
            if s is None:
                defects.append(f"{m.id}: eligible sensor {sid} does not exist")
            elif s.modality != m.required_modality:
                defects.append(
                    f"{m.id}: eligible sensor {sid} has modality {s.modality}, expected {m.required_modality}"
                )
    table = config.modality_link_requirement
    for mod in sorted(pn.modalities | sft.modalities):
        if mod not in table:
            defects.append(f"modality {mod} has no link requirement entry")
    return defects


def remaining_capacity(device: FogDevice, placements, sft: ServiceFunctionTree) -> int:
    """Capacity of ``device`` left after the microservices ``placements`` put on it.

    ``placements`` is either a :class:`Mapping` or a plain microservice -> device dict.
    """
    if isinstance(placements, Mapping):
        placements = placements.placements
    used = sum(sft.node(m).required_capacity for m, d in placements.items() if d == device.id)
    left = device.capacity - used
    if left < 0:
        raise ModelError(f"device {device.id} overcommitted: capacity {device.capacity}, hosted {used}")
    return left
