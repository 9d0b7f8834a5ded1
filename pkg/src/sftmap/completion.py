"""Integer-programming test of whether a partial mapping can be completed at all.

The solver commits to one canonical route per stream.  This check gives
up that restriction: it asks whether any placement of the remaining
microservices, any forwarding origin and any routes of at most ``h_max``
hops fit the devices and the spare link capacities.  Every mapping the
solver can produce passes it, so a failure proves the subtree empty.

Each open stream is a unit flow through a layered copy of the network:
layer ``t`` holds every device after ``t`` hops, and "stay" arcs let
shorter routes (or co-located endpoints) idle until layer ``h_max``.  A
flow that revisits a device only wastes capacity, so allowing walks does
not change the answer.
"""

from __future__ import annotations

from collections.abc import Mapping as MappingABC

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix

from .constraints import det_link_requirement, has_required_sensors
from .model import PhysicalNetwork, ServiceFunctionTree, SolverConfig, link_key

INFEASIBLE = 2


class _Program:
    def __init__(self):
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.lo: list[float] = []
        self.hi: list[float] = []

    def var(self, ub: float = 1.0) -> int:
        self.lb.append(0.0)
        self.ub.append(ub)
        return len(self.lb) - 1

    def row(self, terms, lo: float, hi: float) -> None:
        r = len(self.lo)
        for c, v in terms:
            self.rows.append(r)
            self.cols.append(c)
            self.vals.append(v)
        self.lo.append(lo)
        self.hi.append(hi)

    def solve(self, node_limit: int | None):
        n = len(self.lb)
        if not self.lo:
            return True
        a = coo_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.lo), n)).tocsr()
        options = {} if node_limit is None else {"node_limit": node_limit}
        res = milp(
            np.zeros(n),
            constraints=LinearConstraint(a, self.lo, self.hi),
            integrality=np.ones(n),
            bounds=Bounds(self.lb, self.ub),
            options=options,
        )
        return res.status != INFEASIBLE


def completion_possible(
    pn: PhysicalNetwork,
    sft: ServiceFunctionTree,
    config: SolverConfig,
    hosts: MappingABC[str, str] | None = None,
    load: MappingABC[tuple[str, str], int] | None = None,
    node_limit: int | None = None,
) -> bool:
    """False only if no valid mapping extends ``hosts`` on top of ``load``.

    ``hosts`` are the microservices placed so far, ``load`` the link units
    their routes already hold.  Streams into placed microservices and the
    sensor data of placed leaves count as routed.  When ``node_limit``
    branch-and-bound nodes do not settle the question the answer is True.
    """
    hosts = dict(hosts or {})
    load = dict(load or {})
    h = config.h_max
    devices = pn.device_ids
    prog = _Program()

    x = {}
    for m in sft.nodes:
        fixed = hosts.get(m.id)
        for d in devices:
            ok = pn.device(d).capacity >= m.required_capacity and fixed in (None, d)
            x[m.id, d] = prog.var(1.0 if ok else 0.0)
        prog.row([(x[m.id, d], 1) for d in devices], 1, 1)
    for d in devices:
        prog.row([(x[m.id, d], m.required_capacity) for m in sft.nodes], -np.inf, pn.device(d).capacity)

    on_link: dict[tuple[str, str], list[tuple[int, int]]] = {l.key: [] for l in pn.links}

    def stream(units: int, supply: dict, sink: dict) -> None:
        # balance[d, t]: flow entering minus flow leaving device d at layer t
        balance = {(d, t): [] for d in devices for t in range(h + 1)}
        for d, v in supply.items():
            balance[d, 0].append((v, 1))
        for d, v in sink.items():
            balance[d, h].append((v, -1))
        for t in range(h):
            arcs = [(d, d) for d in devices]
            for l in pn.links:
                if l.capacity >= units:
                    arcs += [(l.a, l.b), (l.b, l.a)]
            for a, b in arcs:
                v = prog.var()
                balance[a, t].append((v, -1))
                balance[b, t + 1].append((v, 1))
                if a != b:
                    on_link[link_key(a, b)].append((v, units))
        for terms in balance.values():
            prog.row(terms, 0, 0)

    for m in sft.nodes:
        if not m.needs_sensors or m.id in hosts:
            continue
        covering = [
            d for d in devices if has_required_sensors(pn.device(d), m.eligible_sensors, m.required_sensor_count)
        ]
        if not covering:
            return False
        origin = {d: prog.var() for d in covering}
        prog.row([(v, 1) for v in origin.values()], 1, 1)
        stream(det_link_requirement(m, config), origin, {d: x[m.id, d] for d in devices})
    for e in sft.edges:
        if e.target in hosts:
            continue
        stream(
            e.required_speed,
            {d: x[e.source, d] for d in devices},
            {d: x[e.target, d] for d in devices},
        )
    for l in pn.links:
        if on_link[l.key]:
            prog.row(on_link[l.key], -np.inf, l.capacity - load.get(l.key, 0))
    return prog.solve(node_limit)
