"""Leaf-first recursive backtracking mapper with breadth-first extended search."""

from __future__ import annotations

import random
import time
from collections import deque
from collections.abc import Callable, Collection, Iterable
from dataclasses import dataclass
from typing import NamedTuple

import networkx as nx

from .completion import completion_possible
from .constraints import (
    det_link_requirement,
    find_feasible_path,
    has_required_sensors,
    is_resource_compatible,
    validate_connectivity_and_link_speed,
    validate_extended_path,
    validate_path,
)
from .model import (
    ForwardingRecord,
    LinkUsage,
    Mapping,
    MappingResult,
    PhysicalNetwork,
    ScenarioError,
    ServiceFunctionTree,
    SolverConfig,
    SolverStats,
    path_edges,
    scenario_defects,
)


def order_microservices(sft: ServiceFunctionTree) -> list[str]:
    """Placement order: by height above the leaves, then by id.

    A node's height is one more than the tallest of its children, so every
    child sorts before its parent and the root event handler comes last.
    """
    height: dict[str, int] = {}
    on_stack: set[str] = set()

    def visit(ms_id: str) -> int:
        if ms_id in height:
            return height[ms_id]
        if ms_id in on_stack:
            raise ValueError(f"cycle through {ms_id}")
        on_stack.add(ms_id)
        preds = sft.predecessors(ms_id)
        h = 1 + max(visit(p) for p in preds) if preds else 0
        on_stack.discard(ms_id)
        height[ms_id] = h
        return h

    for ms_id in sft.node_ids:
        visit(ms_id)
    return sorted(sft.node_ids, key=lambda i: (height[i], i))


def device_sequence(pn: PhysicalNetwork, config: SolverConfig) -> list[str]:
    ids = sorted(pn.device_ids)
    if config.device_order == "random":
        random.Random(config.random_seed).shuffle(ids)
    return ids


class PlacementCheck(NamedTuple):
    valid: bool
    has_sensors: bool
    usage: LinkUsage
    paths: dict


def map_ms_to_fog(
    m: str,
    d: str,
    pn: PhysicalNetwork,
    sft: ServiceFunctionTree,
    placements: dict[str, str],
    usage: LinkUsage,
    h_max: int,
) -> PlacementCheck:
    """Try ``m`` on device ``d`` given the microservices already placed.

    ``has_sensors`` reports sensor coverage even when the placement itself
    fails, so the caller can collect candidate origins for extended search.
    """
    ms = sft.node(m)
    device = pn.device(d)
    failed = PlacementCheck(False, False, usage, {})
    if not has_required_sensors(device, ms.eligible_sensors, ms.required_sensor_count):
        return failed
    h_sens = ms.required_sensor_count != 0
    failed = PlacementCheck(False, h_sens, usage, {})
    if not is_resource_compatible(device, ms.required_capacity, placements, sft):
        return failed
    preds = sft.predecessors(m)
    if not preds:
        return PlacementCheck(True, h_sens, usage, {})
    if not placements:
        return failed
    same = [p for p in preds if placements.get(p) == d]
    if same:
        current = usage
        paths = {(p, m): (d,) for p in same}
        for p in preds:
            if p in same or p not in placements:
                continue
            ok, current, path = validate_path(pn, sft, p, m, placements[p], d, current, h_max)
            if not ok:
                return failed
            paths[(p, m)] = path
        return PlacementCheck(True, h_sens, current, paths)
    ok, current, paths = validate_connectivity_and_link_speed(pn, sft, m, d, placements, usage, h_max)
    if ok:
        return PlacementCheck(True, h_sens, current, paths)
    return failed


class ExtendedSearchResult(NamedTuple):
    host: str | None
    valid: bool
    selected: str | None
    path: tuple[str, ...]
    usage: LinkUsage


def extended_search_to_map(
    m: str,
    pn: PhysicalNetwork,
    sft: ServiceFunctionTree,
    usage: LinkUsage,
    sensor_devices: Collection[str],
    config: SolverConfig,
    placements: dict[str, str],
    exclude: Collection[str] = (),
    origin_order: Iterable[str] | None = None,
) -> ExtendedSearchResult:
    """Find the host closest to a sensor-covering device that data can be relayed to.

    Each origin in ``sensor_devices`` is searched breadth-first; a host must
    have room for ``m``, must not itself cover the sensors, and must be
    reachable within ``h_max`` hops over links with enough spare capacity
    for the modality's data stream.  The first closest host wins.
    """
    ms = sft.node(m)
    link_req = det_link_requirement(ms, config)
    origins = [d for d in (origin_order or sorted(sensor_devices)) if d in sensor_devices]
    best: ExtendedSearchResult | None = None
    min_hops = float("inf")
    for sd in origins:
        visited = set()
        queue = deque([(sd, 0, ())])
        while queue:
            cd, distance, cur_path = queue.popleft()
            if cd in visited:
                continue
            visited.add(cd)
            if distance >= min_hops:
                break
            if (
                cd not in sensor_devices
                and cd not in exclude
                and is_resource_compatible(pn.device(cd), ms.required_capacity, placements, sft)
            ):
                ok, new_usage = validate_extended_path(pn, (sd,) + cur_path, link_req, usage)
                if ok:
                    best = ExtendedSearchResult(cd, True, sd, cur_path, new_usage)
                    min_hops = distance
                    break
            if distance == config.h_max:
                continue
            for nb, key, cap in pn.incident(cd):
                if nb not in visited and cap - usage.consumed_on(key) >= link_req:
                    queue.append((nb, distance + 1, cur_path + (nb,)))
    if best is None:
        return ExtendedSearchResult(None, False, None, (), usage)
    return best


@dataclass
class BranchEvent:
    """Snapshot handed to an observer around each placement branch."""

    kind: str  # "enter", "undo" or "extended"
    microservice: str
    device: str | None
    placements: dict
    usage: LinkUsage
    reserved_paths: dict
    forwarding: dict
    detail: object = None


Observer = Callable[[BranchEvent], None]


def _resolve(conflict: set[int], reasons: list[list[set[int]]]) -> set[int]:
    """Union of one explanation per failure, preferring ones already covered."""
    conflict = set(conflict)
    for alts in reasons:
        if len(alts) == 1:
            conflict |= alts[0]
    pending = [alts for alts in reasons if len(alts) > 1]
    # Greedy cover: favour levels that explain many failures at once.
    while pending:
        pending = [alts for alts in pending if not any(a <= conflict for a in alts)]
        if not pending:
            break
        votes: dict[int, int] = {}
        for alts in pending:
            for lvl in set().union(*alts) - conflict:
                votes[lvl] = votes.get(lvl, 0) + 1
        alts = pending.pop(0)
        conflict |= min(
            alts, key=lambda a: (len(a - conflict), -sum(votes.get(l, 0) for l in a - conflict), -max(a, default=-1))
        )
    return conflict


# The integer-programming completion check costs about as much as a few
# thousand attempts, so it is only paid once the search proves hard: a
# global check after ``ENGAGE_AFTER`` attempts, then at every level whose
# failed subtrees have averaged ``PROBE_COST`` attempts.
ENGAGE_AFTER = 20000
PROBE_COST = 3000
PROBE_NODES = 2000


class _Search:
    def __init__(self, pn, sft, config, observer=None):
        self.pn = pn
        self.sft = sft
        self.config = config
        self.order = order_microservices(sft)
        self.level = {m: i for i, m in enumerate(self.order)}
        self.devices = device_sequence(pn, config)
        self.observer = observer
        self.backjump = config.pruning == "backjump"
        self.placements: dict[str, str] = {}
        self.paths: dict[tuple[str, str], tuple[str, ...]] = {}
        self.forwarding: dict[str, ForwardingRecord] = {}
        self.excluded: dict[str, set[str]] = {m: set() for m in self.order}
        # level -> links its routes run over
        self.route_links: dict[int, set[tuple[str, str]]] = {}
        # level -> (link, units, owner levels) charges its routes cannot avoid
        self.forced: dict[int, list[tuple[tuple[str, str], int, frozenset[int]]]] = {}
        self._mandatory_cache: dict = {}
        self._static_cache: dict = {}
        self._dist_cache: dict = {}
        self._joint_cache: dict = {}
        self._relax_cache: dict = {}
        self._fits_cache: dict = {}
        # level -> (link, units) its routes charge
        self.route_charges: dict[int, list[tuple[tuple[str, str], int]]] = {}
        self._speed_graphs: dict[int, nx.Graph] = {}
        self._options_cache: dict = {}
        # level -> (device, forwarding) of its current choice; routes follow
        # from the devices of the prefix, which route-dependent conflicts include
        self.choice: dict[int, int] = {}
        self._choice_ids: dict[tuple, int] = {}
        # level -> conflict levels -> assignments of those levels known to fail
        self.nogoods: dict[int, dict[tuple[int, ...], set[tuple]]] = {}
        self.engaged = False
        # level -> [attempts spent in failed subtrees, failed subtrees]
        self.cost: dict[int, list[int]] = {}
        self.stats = SolverStats()

    def _emit(self, kind, m, d, usage, detail=None):
        if self.observer is not None:
            self.observer(
                BranchEvent(kind, m, d, dict(self.placements), usage, dict(self.paths), dict(self.forwarding), detail)
            )

    def _hosted_levels(self, devices) -> set[int]:
        return {self.level[m] for m, d in self.placements.items() if d in devices}

    # A conflict set names the earlier levels whose current choices explain
    # a failure: as long as those levels keep their devices, the failure
    # recurs whatever the other levels do.  Link exhaustion is traced to the
    # levels whose routes fill the blocking links; since those routes depend
    # on everything placed before them, the whole prefix up to the deepest
    # such level is blamed.

    def _static_route(self, a: str, b: str, speed: int) -> bool:
        key = (a, b, speed)
        ok = self._static_cache.get(key)
        if ok is None:
            ok = find_feasible_path(self.pn, a, b, speed, LinkUsage(), self.config.h_max) is not None
            self._static_cache[key] = ok
        return ok

    def _static_dist(self, sources: frozenset, speed: int) -> dict[str, int]:
        key = (sources, speed)
        dist = self._dist_cache.get(key)
        if dist is None:
            dist = {d: 0 for d in sources}
            queue = deque(sorted(sources))
            while queue:
                cur = queue.popleft()
                if dist[cur] == self.config.h_max:
                    continue
                for nb, _, cap in self.pn.incident(cur):
                    if cap >= speed and nb not in dist:
                        dist[nb] = dist[cur] + 1
                        queue.append(nb)
            self._dist_cache[key] = dist
        return dist

    def _saturation_blame(self, usage: LinkUsage, speed: int, src_dist: dict, near) -> set[int] | None:
        """Prefix of levels responsible for every blocking link; ``near(u, v)`` picks the relevant links."""
        blocking = set()
        for l in self.pn.links:
            if l.capacity >= speed and l.capacity - usage.consumed_on(l.key) < speed and near(l.a, l.b):
                blocking.add(l.key)
        owners = [lvl for lvl, keys in self.route_links.items() if keys & blocking]
        if not owners:
            return None
        return set(range(max(owners) + 1))

    def _route_blame(self, a: str, b: str, speed: int, usage: LinkUsage) -> set[int] | None:
        h = self.config.h_max
        da = self._static_dist(frozenset([a]), speed)
        db = self._static_dist(frozenset([b]), speed)
        inf = h + 1

        def near(u, v):
            return min(da.get(u, inf) + db.get(v, inf), da.get(v, inf) + db.get(u, inf)) + 1 <= h

        return self._saturation_blame(usage, speed, da, near)

    def _mandatory_links(self, a: str, b: str, speed: int) -> frozenset:
        """Links on every route of at most h_max hops from ``a`` to ``b`` over links of ``speed``."""
        key = (a, b, speed)
        found = self._mandatory_cache.get(key)
        if found is None:
            path = find_feasible_path(self.pn, a, b, speed, LinkUsage(), self.config.h_max)
            found = set()
            for k in path_edges(path or ()):
                blocked = LinkUsage({k: self.pn.link_capacity(*k)})
                if find_feasible_path(self.pn, a, b, speed, blocked, self.config.h_max) is None:
                    found.add(k)
            found = frozenset(found)
            self._mandatory_cache[key] = found
        return found

    def _forced_entries(self, idx, m, d, paths, record, origins):
        entries = []
        for (p, _), path in paths.items():
            if len(path) > 1:
                speed = self.sft.edge(p, m).required_speed
                owners = frozenset((self.level[p], idx))
                for k in self._mandatory_links(self.placements[p], d, speed):
                    entries.append((k, speed, owners))
        if record is not None:
            units = det_link_requirement(self.sft.node(m), self.config)
            common = None
            for o in sorted(origins):
                if self._static_route(o, d, units):
                    links = self._mandatory_links(o, d, units)
                    common = links if common is None else common & links
            for k in sorted(common or ()):
                entries.append((k, units, frozenset((idx,))))
        return entries

    def _forced_usage(self) -> tuple[LinkUsage, dict]:
        owners: dict[tuple[str, str], set[int]] = {}
        charges = []
        for entries in self.forced.values():
            for k, units, who in entries:
                charges.append((k, units))
                owners.setdefault(k, set()).update(who)
        return LinkUsage(charges), owners

    # Routing the predecessors one after another is not monotone in the
    # load, so a joint failure is only traced through the stronger question
    # of whether any choice of routes fits at all.

    def _route_options(self, a: str, b: str, speed: int) -> list[tuple[tuple[str, str], ...]]:
        key = (a, b, speed)
        found = self._options_cache.get(key)
        if found is None:
            g = self._speed_graphs.get(speed)
            if g is None:
                g = nx.Graph()
                g.add_nodes_from(self.pn.device_ids)
                g.add_edges_from(l.key for l in self.pn.links if l.capacity >= speed)
                self._speed_graphs[speed] = g
            found = [tuple(path_edges(p)) for p in nx.all_simple_paths(g, a, b, cutoff=self.config.h_max)]
            self._options_cache[key] = found
        return found

    def _joint_fits(self, routes: list[tuple[str, str, int]], load: dict, budget: int = 20000) -> bool:
        """Whether some choice of paths carries every route on top of ``load``.

        Gives up and answers True after ``budget`` partial assignments.
        """
        key = (tuple(sorted(routes)), tuple(sorted(load.items())))
        known = self._fits_cache.get(key)
        if known is not None:
            return known
        known = self._fits(routes, load, budget)
        self._fits_cache[key] = known
        return known

    def _fits(self, routes, load, budget):
        options = sorted(((self._route_options(a, b, speed), speed) for a, b, speed in routes), key=lambda o: len(o[0]))
        spare = {}
        steps = [budget]

        def room(k):
            if k not in spare:
                spare[k] = self.pn.link_capacity(*k) - load.get(k, 0)
            return spare[k]

        def place(i):
            if i == len(options):
                return True
            paths, speed = options[i]
            for path in paths:
                if all(room(k) >= speed for k in path):
                    steps[0] -= 1
                    if steps[0] < 0:
                        return True
                    for k in path:
                        spare[k] -= speed
                    ok = place(i + 1)
                    for k in path:
                        spare[k] += speed
                    if ok:
                        return True
            return False

        return place(0)

    def _reserved_routes(self) -> list[tuple[tuple[str, str, int], set[int]]]:
        """Every route reserved so far with the levels whose choices fix its endpoints."""
        routes = []
        for (p, q), path in self.paths.items():
            if len(path) > 1:
                routes.append(((path[0], path[-1], self.sft.edge(p, q).required_speed), {self.level[p], self.level[q]}))
        for m, rec in self.forwarding.items():
            units = det_link_requirement(self.sft.node(m), self.config)
            routes.append(((rec.selected_sensor_device, rec.host, units), {self.level[m]}))
        return routes

    def _packing_blame(self, idx: int, routes: list[tuple[str, str, int]], preds: set[int]) -> set[int] | None:
        """Levels whose routes, however routed, leave no room for ``routes``."""
        earlier = sorted(self._reserved_routes(), key=lambda r: -max(r[1]))
        keep = [r for r, _ in earlier]
        if self._joint_fits(keep + routes, {}):
            return None
        owners = [o for _, o in earlier]
        i = 0
        while i < len(keep):
            trial = keep[:i] + keep[i + 1 :]
            if not self._joint_fits(trial + routes, {}):
                keep, owners = trial, owners[:i] + owners[i + 1 :]
            else:
                i += 1
        blame = set(preds)
        for o in owners:
            blame |= o
        return blame - {idx}

    def _joint_blame(self, idx: int, routes: list[tuple[str, str, int]], preds: set[int]) -> list[set[int]]:
        reasons = []
        levels = sorted(self.route_charges)
        load: dict = {}
        for lvl in levels:
            for k, units in self.route_charges[lvl]:
                load[k] = load.get(k, 0) + units
            if not self._joint_fits(routes, load):
                reasons.append(set(range(lvl + 1)) | preds)
                break
        f_usage, f_owners = self._forced_usage()
        if f_owners and not self._joint_fits(routes, dict(f_usage.items())):
            who = set(preds)
            for k in f_owners:
                who |= f_owners[k]
            reasons.append(who - {idx})
        return reasons

    def _direct_reasons(self, idx: int, m: str, d: str, usage: LinkUsage) -> list[set[int]]:
        """Alternative explanations for ``m`` failing on ``d``; any one of them suffices."""
        ms = self.sft.node(m)
        device = self.pn.device(d)
        if not has_required_sensors(device, ms.eligible_sensors, ms.required_sensor_count):
            return [set()]
        if device.capacity < ms.required_capacity:
            return [set()]
        reasons = []
        if not is_resource_compatible(device, ms.required_capacity, self.placements, self.sft):
            reasons.append(self._hosted_levels({d}))
        routed = [
            (p, self.placements[p], self.sft.edge(p, m).required_speed)
            for p in self.sft.predecessors(m)
            if self.placements[p] != d
        ]
        lonely = [{self.level[p]} for p, src, speed in routed if not self._static_route(src, d, speed)]
        if lonely:
            return reasons + lonely
        key = (m, d, tuple(src for _, src, _ in routed))
        joint = self._joint_cache.get(key)
        if joint is None:
            joint = validate_connectivity_and_link_speed(
                self.pn, self.sft, m, d, self.placements, LinkUsage(), self.config.h_max
            )[0]
            self._joint_cache[key] = joint
        if not joint:
            return reasons + [{self.level[p] for p, _, _ in routed}]
        # Only exhausted links stand in the way.  A single route blocked on
        # its own stays blocked under any extra load, which makes it safe to
        # trace; interacting routes are not, so they blame everything.
        forced = None
        traced = len(reasons)
        for p, src, speed in routed:
            if find_feasible_path(self.pn, src, d, speed, usage, self.config.h_max) is None:
                blame = self._route_blame(src, d, speed, usage)
                if blame is not None:
                    reasons.append(blame | {self.level[p]})
                # Charges no alternative routing could avoid may block it already.
                if forced is None:
                    forced = self._forced_usage()
                f_usage, f_owners = forced
                if find_feasible_path(self.pn, src, d, speed, f_usage, self.config.h_max) is None:
                    who = {self.level[p]}
                    for k in f_owners:
                        who |= f_owners[k]
                    reasons.append(who - {idx})
        routes = [(src, d, speed) for _, src, speed in routed]
        preds = {self.level[p] for p, _, _ in routed}
        if len(reasons) == traced and len(routed) > 1:
            reasons += self._joint_blame(idx, routes, preds)
        if not traced:
            packed = self._packing_blame(idx, routes, preds)
            if packed is not None:
                reasons.append(packed)
        return reasons or [set(range(idx))]

    def _extended_conflict(
        self, idx: int, m: str, origins: Collection[str], tried: Collection[str], usage: LinkUsage
    ) -> set[int]:
        ms = self.sft.node(m)
        link_req = det_link_requirement(ms, self.config)
        dist = self._static_dist(frozenset(origins), link_req)
        hosts = {d for d in dist if d not in origins and self.pn.device(d).capacity >= ms.required_capacity}
        blame = self._hosted_levels(hosts)
        unloaded = extended_search_to_map(
            m, self.pn, self.sft, LinkUsage(), origins, self.config, self.placements, tried, self.devices
        )
        if unloaded.valid:
            f_usage, f_owners = self._forced_usage()
            under_forced = extended_search_to_map(
                m, self.pn, self.sft, f_usage, origins, self.config, self.placements, tried, self.devices
            )
            if not under_forced.valid:
                return blame.union(*f_owners.values())
            h = self.config.h_max
            inf = h + 1
            links = self._saturation_blame(
                usage, link_req, dist, lambda u, v: min(dist.get(u, inf), dist.get(v, inf)) + 1 <= h
            )
            return blame | (links if links is not None else set(range(idx)))
        return blame

    # Capacity relaxation: drop link capacities and route interactions and
    # ask whether the unplaced microservices can still get devices at all.
    # A leaf may sit on any device its sensor data can reach within h_max
    # hops, an inner node on any device within h_max hops of its placed
    # children.  Counting only a subset of the placed levels relaxes it
    # further, so a failing subset is a valid conflict set.

    def _candidates(self, m: str, hosts: dict[str, str]) -> frozenset[str]:
        ms = self.sft.node(m)
        if ms.needs_sensors:
            covering = frozenset(
                d.id for d in self.pn.devices
                if has_required_sensors(d, ms.eligible_sensors, ms.required_sensor_count)
            )
            return frozenset(self._static_dist(covering, det_link_requirement(ms, self.config)))
        allowed = None
        for p in self.sft.predecessors(m):
            if p not in hosts:
                continue
            near = self._static_dist(frozenset([hosts[p]]), self.sft.edge(p, m).required_speed).keys()
            allowed = set(near) if allowed is None else allowed & near
        return frozenset(allowed) if allowed is not None else frozenset(d.id for d in self.pn.devices)

    def _relaxation_holds(self, idx: int, levels: Iterable[int]) -> bool:
        hosts = {self.order[j]: self.placements[self.order[j]] for j in levels}
        rest = self.order[idx:]
        anchors = tuple(hosts.get(p) for m in rest for p in self.sft.predecessors(m))
        free = {d.id: d.capacity for d in self.pn.devices}
        for m, d in hosts.items():
            free[d] -= self.sft.node(m).required_capacity
        key = (idx, tuple(free.values()), anchors)
        ok = self._relax_cache.get(key)
        if ok is not None:
            return ok
        need = {m: self.sft.node(m).required_capacity for m in rest}
        cands = {m: self._candidates(m, hosts) for m in rest}
        ok = True
        # unit-splitting relaxation, then one slot of size k per item of size >= k
        for k in [None] + sorted({r for r in need.values() if r > 1}):
            g = nx.DiGraph()
            total = 0
            for m in rest:
                demand = need[m] if k is None else int(need[m] >= k)
                if not demand:
                    continue
                total += demand
                g.add_edge("s", ("m", m), capacity=demand)
                for d in cands[m]:
                    g.add_edge(("m", m), ("d", d), capacity=demand)
            if not total:
                continue
            for d, f in free.items():
                units = f if k is None else max(f, 0) // k
                if units > 0 and g.has_node(("d", d)):
                    g.add_edge(("d", d), "t", capacity=units)
            if not g.has_node("t") or nx.maximum_flow_value(g, "s", "t") < total:
                ok = False
                break
        self._relax_cache[key] = ok
        return ok

    def _counting_holds(self, idx: int, levels: Iterable[int]) -> bool:
        """The relaxation without candidate sets: enough spare units and big enough slots."""
        free = {d.id: d.capacity for d in self.pn.devices}
        for j in levels:
            m = self.order[j]
            free[self.placements[m]] -= self.sft.node(m).required_capacity
        need = [self.sft.node(m).required_capacity for m in self.order[idx:]]
        if sum(need) > sum(f for f in free.values() if f > 0):
            return False
        for k in set(need) - {0, 1}:
            if sum(1 for r in need if r >= k) > sum(f // k for f in free.values() if f > 0):
                return False
        return True

    def _relaxation_conflict(self, idx: int, holds) -> set[int] | None:
        """None when ``holds`` accepts the placed levels, else a small set of levels it rejects."""
        if holds(idx, range(idx)):
            return None
        # drop the deepest levels first so the conflict reaches back as little as possible
        keep = set(range(idx))
        for j in reversed(range(idx)):
            if not holds(idx, keep - {j}):
                keep.discard(j)
        return keep

    # Forward check: an inner node with placed children needs some device
    # with room for it and some routing of those children's streams that
    # fits the current load.  More placements and more load only make this
    # harder, so a failure here holds for the whole subtree.

    def _forward_reason(self, m: str, d: str, placed: list[str], load: dict) -> set[int] | None:
        ms = self.sft.node(m)
        device = self.pn.device(d)
        if device.capacity < ms.required_capacity:
            return set()
        if not is_resource_compatible(device, ms.required_capacity, self.placements, self.sft):
            return self._hosted_levels({d})
        routed = [(p, self.placements[p], self.sft.edge(p, m).required_speed) for p in placed if self.placements[p] != d]
        for p, src, speed in routed:
            if not self._static_route(src, d, speed):
                return {self.level[p]}
        if not routed:
            return None
        routes = [(src, d, speed) for _, src, speed in routed]
        preds = {self.level[p] for p, _, _ in routed}
        if not self._joint_fits(routes, {}):
            return preds
        if self._joint_fits(routes, load):
            return None
        acc: dict = {}
        for lvl in sorted(self.route_charges):
            for k, units in self.route_charges[lvl]:
                acc[k] = acc.get(k, 0) + units
            if not self._joint_fits(routes, acc):
                return set(range(lvl + 1)) | preds
        return set(range(max(self.route_charges) + 1)) | preds

    def _forward_conflict(self, idx: int, usage: LinkUsage) -> set[int] | None:
        load = None
        for m in self.order[idx:]:
            if self.sft.node(m).needs_sensors:
                continue
            placed = [p for p in self.sft.predecessors(m) if p in self.placements]
            if not placed:
                continue
            if load is None:
                load = dict(usage.items())
            conflict: set[int] = set()
            for d in self.devices:
                reason = self._forward_reason(m, d, placed, load)
                if reason is None:
                    break
                conflict |= reason
            else:
                return conflict
        return None

    # Conflict sets are global explanations, so the choices they name can
    # be remembered as nogoods.  A nogood is checked at the first level
    # where all its members are assigned.

    def _learn(self, conflict: set[int]) -> None:
        levels = tuple(sorted(conflict))
        at = levels[-1] + 1 if levels else 0
        key = tuple(self.choice[j] for j in levels)
        self.nogoods.setdefault(at, {}).setdefault(levels, set()).add(key)

    def _nogood_hit(self, idx: int) -> set[int] | None:
        for levels, keys in self.nogoods.get(idx, {}).items():
            if tuple(self.choice[j] for j in levels) in keys:
                return set(levels)
        return None

    def _completion_conflict(self, idx: int, usage: LinkUsage) -> set[int] | None:
        if not self.engaged:
            if self.stats.attempts < ENGAGE_AFTER:
                return None
            self.engaged = True
            if not completion_possible(self.pn, self.sft, self.config, node_limit=PROBE_NODES):
                return set()
        spent, failed = self.cost.get(idx, (0, 0))
        if idx == 0 or not failed or spent < PROBE_COST * failed:
            return None
        if completion_possible(self.pn, self.sft, self.config, self.placements, dict(usage.items()), PROBE_NODES):
            return None
        return set(range(idx))

    def solve(self, idx: int, usage: LinkUsage) -> tuple[bool, LinkUsage, set[int]]:
        """Place ``order[idx:]``; on failure also return the conflicting earlier levels."""
        if idx >= len(self.order):
            return True, usage, set()
        if not self.backjump:
            return self._solve(idx, usage)
        start = self.stats.attempts
        ok, final, conflict = self._solve(idx, usage)
        if not ok:
            entry = self.cost.setdefault(idx, [0, 0])
            entry[0] += self.stats.attempts - start
            entry[1] += 1
        return ok, final, conflict

    def _solve(self, idx: int, usage: LinkUsage) -> tuple[bool, LinkUsage, set[int]]:
        if self.backjump:
            known = self._nogood_hit(idx)
            if known is not None:
                return False, usage, known
            # the flow check is too costly to pay at every node; at the root it
            # settles instances that are infeasible on capacity alone
            holds = self._relaxation_holds if idx == 0 else self._counting_holds
            relaxed = self._relaxation_conflict(idx, holds)
            if relaxed is not None:
                self._learn(relaxed)
                return False, usage, relaxed
            ahead = self._forward_conflict(idx, usage)
            if ahead is not None:
                self._learn(ahead)
                return False, usage, ahead
            hopeless = self._completion_conflict(idx, usage)
            if hopeless is not None:
                return False, usage, hopeless
        m = self.order[idx]
        s_cov: set[str] = set()
        conflict: set[int] = set()
        rejected: list[str] = []
        for d in self.devices:
            if d in self.excluded[m]:
                continue
            self.stats.attempts += 1
            valid, h_sens, usage_c2, paths = map_ms_to_fog(
                m, d, self.pn, self.sft, self.placements, usage, self.config.h_max
            )
            if h_sens:
                s_cov.add(d)
            if not valid:
                self.excluded[m].add(d)
                if self.backjump:
                    rejected.append(d)
                continue
            ok, final, sub = self._descend(idx, m, d, usage, usage_c2, paths, None)
            if ok:
                return True, final, set()
            if self.backjump:
                if idx not in sub:
                    return False, usage, sub
                conflict |= sub - {idx}

        # Every direct host failed: relay sensor data to a farther device
        # instead, retrying with the next-closest host if the subtree fails.
        if self.sft.node(m).needs_sensors and s_cov:
            tried: set[str] = set()
            while True:
                self.stats.attempts += 1
                self.stats.extended_searches += 1
                found = extended_search_to_map(
                    m, self.pn, self.sft, usage, s_cov, self.config, self.placements, tried, self.devices
                )
                self._emit("extended", m, found.host, usage, (frozenset(s_cov), frozenset(tried), found))
                if not found.valid:
                    if self.backjump:
                        conflict |= self._extended_conflict(idx, m, s_cov, tried, usage)
                    break
                record = ForwardingRecord(found.selected, found.host, found.path)
                ok, final, sub = self._descend(idx, m, found.host, usage, found.usage, {}, record, s_cov)
                if ok:
                    return True, final, set()
                if self.backjump:
                    if idx not in sub:
                        return False, usage, sub
                    conflict |= sub - {idx}
                tried.add(found.host)
        if self.backjump:
            # explained only now: most sweeps end early
            reasons = [self._direct_reasons(idx, m, d, usage) for d in rejected]
            conflict = _resolve(conflict, reasons)
            self._learn(conflict)
        return False, usage, conflict

    def _descend(self, idx, m, d, usage_before, usage_after, paths, record, origins=()):
        self._emit("enter", m, d, usage_before)
        self.placements[m] = d
        self.paths.update(paths)
        links = {k for p in paths.values() for k in path_edges(p)}
        if record is not None:
            self.forwarding[m] = record
            links.update(path_edges(record.full_path))
        charges = [(k, self.sft.edge(p, m).required_speed) for (p, _), path in paths.items() for k in path_edges(path)]
        if record is not None:
            units = det_link_requirement(self.sft.node(m), self.config)
            charges += [(k, units) for k in path_edges(record.full_path)]
        if charges:
            self.route_charges[idx] = charges
        self.choice[idx] = self._choice_ids.setdefault((d, record), len(self._choice_ids))
        if links:
            self.route_links[idx] = links
            if self.backjump:
                self.forced[idx] = self._forced_entries(idx, m, d, paths, record, origins)
        ok, final, sub = self.solve(idx + 1, usage_after)
        if ok:
            return True, final, sub
        del self.placements[m]
        for key in paths:
            del self.paths[key]
        self.forwarding.pop(m, None)
        self.route_links.pop(idx, None)
        self.forced.pop(idx, None)
        del self.choice[idx]
        self.route_charges.pop(idx, None)
        self.stats.backtracks += 1
        for later in self.order[idx + 1 :]:
            self.excluded[later].clear()
        self._emit("undo", m, d, usage_before)
        return False, usage_before, sub


def map_sft_to_pn(
    sft: ServiceFunctionTree,
    pn: PhysicalNetwork,
    config: SolverConfig | None = None,
    observer: Observer | None = None,
) -> MappingResult:
    """Search for a placement of every microservice that satisfies all constraints.

    Returns a failed result with an empty mapping when none exists.  The
    optional ``observer`` sees a :class:`BranchEvent` before each placement,
    after each undo and after each extended search.
    """
    config = config or SolverConfig()
    defects = scenario_defects(pn, sft, config)
    if defects:
        raise ScenarioError("cannot map malformed scenario", defects)
    search = _Search(pn, sft, config, observer)
    start = time.perf_counter()
    ok, usage, _ = search.solve(0, LinkUsage())
    search.stats.elapsed = time.perf_counter() - start
    if not ok:
        return MappingResult(False, Mapping(), LinkUsage(), search.stats)
    mapping = Mapping(
        placements={m: search.placements[m] for m in sorted(search.placements)},
        reserved_paths={k: search.paths[k] for k in sorted(search.paths)},
        forwarding={m: search.forwarding[m] for m in sorted(search.forwarding)},
    )
    return MappingResult(True, mapping, usage, search.stats)
