"""Seeded random physical networks and service function trees.

Networks satisfy four coverage rules:

1. every device links to at least one neighbour,
2. every device has at least one sensor in range,
3. some device reaches sensors of more than one modality,
4. some sensor is in range of two or more devices.

Connectivity comes from a random spanning tree plus extra links drawn with
``extra_link_density``.  Geometry is abstracted away: a sensor has a home
device and may also be in range of a few of its neighbours.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import asdict, dataclass, field

from .model import (
    BIG,
    DEFAULT_LINK_REQUIREMENTS,
    FAST,
    SLOW,
    SMALL,
    FogDevice,
    Link,
    Microservice,
    MicroserviceKind,
    PhysicalNetwork,
    Scenario,
    Sensor,
    ServiceFunctionTree,
    SftEdge,
    SolverConfig,
)

PAPER_RANGES = {
    "device_count": (5, 25),
    "temperature_sensors": (8, 35),
    "visual_sensors": (2, 11),
    "wind_sensors": (1, 5),
    "microservice_count": (3, 11),
}

MIN_MICROSERVICES = 3


class GenerationError(ValueError):
    """Parameters that no network or tree can satisfy."""


@dataclass(frozen=True)
class GenParams:
    device_count: int = 5
    temperature_sensors: int = 8
    visual_sensors: int = 2
    wind_sensors: int = 1
    microservice_count: int = 3
    seed: int = 0
    device_big_ratio: float = 0.5
    microservice_big_ratio: float = 0.3
    fast_link_ratio: float = 0.5
    extra_link_density: float = 0.15
    max_sensor_coverage: int = 3
    region_size: int = 5
    roi_radius: int = 1
    other_sensors: dict[str, int] = field(default_factory=dict)
    h_max: int = 3
    profile: str = "custom"

    @property
    def sensor_counts(self) -> dict[str, int]:
        counts = {"temperature": self.temperature_sensors, "visual": self.visual_sensors, "wind": self.wind_sensors}
        counts.update(self.other_sensors)
        return {k: v for k, v in counts.items() if v > 0}

    def check(self) -> None:
        if self.profile == "paper":
            for name, (lo, hi) in PAPER_RANGES.items():
                value = getattr(self, name)
                if not lo <= value <= hi:
                    raise GenerationError(f"{name}={value} outside the paper-profile range [{lo}, {hi}]")
        elif self.profile != "custom":
            raise GenerationError(f"unknown profile {self.profile!r}")
        if self.device_count < 2:
            raise GenerationError("at least two devices are needed for every device to have a neighbour")
        counts = self.sensor_counts
        total = sum(counts.values())
        if total == 0:
            raise GenerationError("at least one sensor is required")
        if self.max_sensor_coverage < 2:
            raise GenerationError("max_sensor_coverage must be at least 2 so a sensor can be shared")
        if total * self.max_sensor_coverage < self.device_count:
            raise GenerationError(
                f"{total} sensors covering at most {self.max_sensor_coverage} devices each cannot reach "
                f"{self.device_count} devices"
            )
        if len(counts) < 2:
            raise GenerationError("two or more sensor modalities are needed for a multi-modality device")
        for ratio in ("device_big_ratio", "microservice_big_ratio", "fast_link_ratio", "extra_link_density"):
            if not 0.0 <= getattr(self, ratio) <= 1.0:
                raise GenerationError(f"{ratio} must lie in [0, 1]")
        if self.region_size < 1:
            raise GenerationError("region_size must be positive")
        if self.roi_radius < 0:
            raise GenerationError("roi_radius must be non-negative")


def paper_params(seed: int, **overrides) -> GenParams:
    """Parameters drawn uniformly from the experimental ranges for ``seed``."""
    rng = random.Random(f"paper-profile:{seed}")
    drawn = {name: rng.randint(lo, hi) for name, (lo, hi) in PAPER_RANGES.items()}
    drawn.update(overrides)
    return GenParams(seed=seed, profile="paper", **drawn)


def _ids(prefix: str, n: int) -> list[str]:
    width = len(str(n))
    return [f"{prefix}{i:0{width}d}" for i in range(1, n + 1)]


def _regions(ids: list[str], adj: dict[str, set[str]], size: int, rng: random.Random) -> dict[str, str]:
    """Cut the device graph into contiguous regions of roughly ``size`` devices."""
    n_regions = max(1, math.ceil(len(ids) / size))
    region = {}
    order = []
    start = rng.choice(ids)
    seen = {start}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        order.append(cur)
        for nb in sorted(adj[cur]):
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    per = math.ceil(len(order) / n_regions)
    for i, dev in enumerate(order):
        region[dev] = f"roi{i // per + 1}"
    return region


def _build_network(params: GenParams) -> tuple[PhysicalNetwork, dict[str, str]]:
    params.check()
    rng = random.Random(f"network:{params.seed}")
    ids = _ids("d", params.device_count)
    shuffled = ids[:]
    rng.shuffle(shuffled)

    adj: dict[str, set[str]] = {d: set() for d in ids}
    for i in range(1, len(shuffled)):
        a, b = shuffled[i], shuffled[rng.randrange(i)]
        adj[a].add(b)
        adj[b].add(a)
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            if b not in adj[a] and rng.random() < params.extra_link_density:
                adj[a].add(b)
                adj[b].add(a)
    links = []
    for a in ids:
        for b in sorted(adj[a]):
            if a < b:
                links.append(Link(a, b, FAST if rng.random() < params.fast_link_ratio else SLOW))

    region = _regions(ids, adj, params.region_size, rng)

    prefixes = {"temperature": "t", "visual": "v", "wind": "w"}
    sensor_mod: dict[str, str] = {}
    for mod, n in sorted(params.sensor_counts.items()):
        for sid in _ids(prefixes.get(mod, mod[:3] + "_"), n):
            sensor_mod[sid] = mod
    sensor_ids = sorted(sensor_mod)
    pool = sensor_ids[:]
    rng.shuffle(pool)

    homes = ids[:]
    rng.shuffle(homes)
    home: dict[str, str] = {}
    for i, sid in enumerate(pool):
        home[sid] = homes[i] if i < len(homes) else rng.choice(ids)
    cover: dict[str, set[str]] = {sid: {home[sid]} for sid in sensor_ids}

    def in_range(dev):
        return {s for s, devs in cover.items() if dev in devs}

    def share(sid, dev):
        if len(cover[sid]) < params.max_sensor_coverage:
            cover[sid].add(dev)
            return True
        return False

    # rule 2
    for dev in ids:
        if in_range(dev):
            continue
        near = [s for s in sensor_ids if home[s] in adj[dev] and len(cover[s]) < params.max_sensor_coverage]
        anywhere = [s for s in sensor_ids if len(cover[s]) < params.max_sensor_coverage]
        choice = near or anywhere
        if not choice:
            raise GenerationError(f"no sensor left to cover device {dev}")
        share(rng.choice(choice), dev)

    # sensors near a device boundary reach the neighbouring device as well
    for sid in pool:
        if rng.random() < 0.4:
            share(sid, rng.choice(sorted(adj[home[sid]])))

    # rule 3
    if not any(len({sensor_mod[s] for s in in_range(d)}) > 1 for d in ids):
        done = False
        for dev in rng.sample(ids, len(ids)):
            mods = {sensor_mod[s] for s in in_range(dev)}
            cands = [
                s
                for s in sensor_ids
                if sensor_mod[s] not in mods and len(cover[s]) < params.max_sensor_coverage
            ]
            near = [s for s in cands if home[s] in adj[dev]]
            if near or cands:
                share(rng.choice(near or cands), dev)
                done = True
                break
        if not done:
            raise GenerationError("cannot give any device a second sensor modality")

    # rule 4
    if not any(len(devs) > 1 for devs in cover.values()):
        sid = rng.choice(sensor_ids)
        share(sid, rng.choice(sorted(adj[home[sid]])))

    sensors = [Sensor(sid, sensor_mod[sid], region[home[sid]]) for sid in sensor_ids]
    devices = [
        FogDevice(d, BIG if rng.random() < params.device_big_ratio else SMALL, frozenset(in_range(d))) for d in ids
    ]
    return PhysicalNetwork(tuple(devices), tuple(links), tuple(sensors)), region


def generate_physical_network(params: GenParams) -> PhysicalNetwork:
    return _build_network(params)[0]


def network_rule_violations(pn: PhysicalNetwork) -> list[str]:
    """Which of the four coverage rules ``pn`` breaks (plus connectivity)."""
    out = []
    for d in pn.devices:
        if not pn.neighbors(d.id):
            out.append(f"rule 1: {d.id} has no neighbour")
        if not d.sensors_in_range:
            out.append(f"rule 2: {d.id} has no sensor in range")
    mod = {s.id: s.modality for s in pn.sensors}
    if not any(len({mod[s] for s in d.sensors_in_range}) > 1 for d in pn.devices):
        out.append("rule 3: no device reaches more than one modality")
    counts: dict[str, int] = {}
    for d in pn.devices:
        for s in d.sensors_in_range:
            counts[s] = counts.get(s, 0) + 1
    if not any(c > 1 for c in counts.values()):
        out.append("rule 4: no sensor is shared between devices")
    if pn.devices:
        seen = {pn.devices[0].id}
        stack = [pn.devices[0].id]
        while stack:
            for nb in pn.neighbors(stack.pop()):
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) != len(pn.devices):
            out.append("network is not connected")
    return out


# -- trees ------------------------------------------------------------------


def _tree_shape(count: int, rng: random.Random) -> tuple[list[str], list[tuple[str, str]]]:
    """Node ids and child->parent edges for an SFT of ``count`` nodes."""
    if count < MIN_MICROSERVICES:
        raise GenerationError(f"an SFT needs at least {MIN_MICROSERVICES} microservices, got {count}")
    if count == 6:
        edges = [("F1", "A1"), ("F2", "A1"), ("A1", "A2"), ("F3", "A2"), ("A2", "EH")]
        return ["A1", "A2", "EH", "F1", "F2", "F3"], edges
    parent = {"F1": "A1", "A1": "EH"}
    n_f, n_a = 1, 1
    while len(parent) + 1 < count:
        if rng.random() < 0.6:
            n_f += 1
            joins = sorted(n for n in parent.values())
            parent[f"F{n_f}"] = rng.choice(sorted(set(joins)))
        else:
            n_a += 1
            leaf = rng.choice(sorted(n for n in parent if n.startswith("F")))
            new = f"A{n_a}"
            parent[new] = parent[leaf]
            parent[leaf] = new
    nodes = sorted(set(parent) | {"EH"})
    return nodes, sorted(parent.items())


def generate_sft(params: GenParams, network: PhysicalNetwork | None = None) -> ServiceFunctionTree:
    """A well-formed SFT whose leaf filters draw on sensor pools of ``network``."""
    if params.microservice_count < MIN_MICROSERVICES:
        raise GenerationError(
            f"an SFT needs at least {MIN_MICROSERVICES} microservices, got {params.microservice_count}"
        )
    if network is None:
        network = generate_physical_network(params)
    rng = random.Random(f"sft:{params.seed}")
    nodes, edges = _tree_shape(params.microservice_count, rng)
    children = {n for n, _ in edges}
    parents = {p for _, p in edges}
    leaves = sorted(children - parents)

    # The tree watches one region of interest: the sensors reachable from
    # devices within ``roi_radius`` hops of a focal device.
    focus = rng.choice(network.device_ids)
    area = {focus}
    frontier = {focus}
    for _ in range(params.roi_radius):
        frontier = {nb for d in frontier for nb in network.neighbors(d)} - area
        area |= frontier
    pools: dict[str, set[str]] = {}
    for d in sorted(area):
        for sid in network.device(d).sensors_in_range:
            pools.setdefault(network.sensor(sid).modality, set()).add(sid)
    keys = sorted(pools)
    link_req = dict(DEFAULT_LINK_REQUIREMENTS)

    microservices = []
    leaf_speed = {}
    for n in nodes:
        cap = BIG if rng.random() < params.microservice_big_ratio else SMALL
        if n in leaves:
            modality = rng.choice(keys)
            eligible = frozenset(pools[modality])
            count = min(rng.choice([1, 1, 2]), len(eligible))
            leaf_speed[n] = link_req.get(modality, SLOW)
            microservices.append(
                Microservice(n, MicroserviceKind.FILTER, cap, modality, eligible, count)
            )
        elif n == "EH":
            microservices.append(Microservice(n, MicroserviceKind.EVENT_HANDLER, cap))
        else:
            microservices.append(Microservice(n, MicroserviceKind.AGGREGATOR, cap))
    sft_edges = []
    for child, par in edges:
        speed = leaf_speed.get(child)
        if speed is None:
            speed = FAST if rng.random() < params.fast_link_ratio else SLOW
        sft_edges.append(SftEdge(child, par, speed))
    return ServiceFunctionTree(tuple(microservices), tuple(sft_edges))


def generate_scenario(params: GenParams, name: str | None = None) -> Scenario:
    network = generate_physical_network(params)
    sft = generate_sft(params, network)
    config = SolverConfig(h_max=params.h_max).with_modalities(network.modalities | sft.modalities)
    knobs = {k: v for k, v in asdict(params).items() if k != "other_sensors" or v}
    return Scenario(
        network,
        sft,
        config,
        name=name or f"gen-{params.profile}-{params.seed}",
        notes=(f"generated with {knobs}",),
    )


def small_params(seed: int, **overrides) -> GenParams:
    """Oracle-sized parameters: 3-6 devices and 3-4 microservices."""
    rng = random.Random(f"small-profile:{seed}")
    devices = rng.randint(3, 6)
    drawn = dict(
        device_count=devices,
        temperature_sensors=rng.randint(2, 5),
        visual_sensors=rng.randint(1, 2),
        wind_sensors=rng.randint(0, 2),
        microservice_count=rng.randint(3, 4),
        region_size=rng.randint(2, 4),
        h_max=rng.randint(1, 3),
        device_big_ratio=0.6,
        microservice_big_ratio=0.35,
    )
    drawn.update(overrides)
    return GenParams(seed=seed, **drawn)


__all__ = [
    "GenParams",
    "GenerationError",
    "PAPER_RANGES",
    "generate_physical_network",
    "generate_scenario",
    "generate_sft",
    "network_rule_violations",
    "paper_params",
    "small_params",
]
