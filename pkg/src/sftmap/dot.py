"""Graphviz DOT rendering of a mapping on its physical network.

Devices hosting microservices are yellow, devices relaying sensor data for
a remotely hosted leaf are red (red wins when a device is both), all others
light blue.  Each link is labelled with its speed and the number of Fast and
Slow streams the mapping routes across it.
"""

from __future__ import annotations

from .io import link_flows
from .model import FAST, SLOW, MappingResult, PhysicalNetwork, ServiceFunctionTree, SolverConfig

DEFAULT_COLOR = "lightblue"
HOST_COLOR = "yellow"
FORWARDING_COLOR = "red"


class DotExportError(ValueError):
    """The result refers to devices or links the network does not have."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("result does not match the network: " + "; ".join(problems))


def _quote(s: str) -> str:
    # backslashes pass through so label line breaks stay ``\n``
    return '"' + s.replace('"', '\\"') + '"'


def _mismatches(pn: PhysicalNetwork, sft: ServiceFunctionTree, result: MappingResult) -> list[str]:
    mapping = result.mapping
    out = []
    for m, d in sorted(mapping.placements.items()):
        if not pn.has_device(d):
            out.append(f"{m} is placed on unknown device {d}")
        if m not in sft.node_ids:
            out.append(f"{m} is not a microservice of the SFT")
    paths = [p for _, p in sorted(mapping.reserved_paths.items())]
    paths += [rec.full_path for _, rec in sorted(mapping.forwarding.items())]
    for path in paths:
        for a, b in zip(path, path[1:]):
            if not (pn.has_device(a) and pn.has_device(b) and pn.adjacent(a, b)):
                out.append(f"path step {a}-{b} is not a network link")
    for a, b in sorted(result.final_link_usage):
        if not (pn.has_device(a) and pn.has_device(b) and pn.adjacent(a, b)):
            out.append(f"link usage names {a}-{b}, which is not a network link")
    for key in sorted(mapping.reserved_paths):
        if not all(k in sft.node_ids for k in key):
            out.append(f"reserved path for unknown SFT edge {key[0]}->{key[1]}")
    return out


def export_dot(
    pn: PhysicalNetwork,
    result: MappingResult,
    sft: ServiceFunctionTree,
    config: SolverConfig | None = None,
    name: str = "mapping",
) -> str:
    """DOT text for ``result`` drawn on ``pn``; identical inputs give identical bytes."""
    problems = _mismatches(pn, sft, result)
    if problems:
        raise DotExportError(problems)
    config = (config or SolverConfig()).with_modalities(pn.modalities | sft.modalities)
    mapping = result.mapping
    forwarding = set(mapping.forwarding_nodes)
    flows = link_flows(pn, sft, mapping, config) if mapping.placements else {}

    lines = [f"graph {_quote(name)} {{", "  node [shape=circle, style=filled];"]
    for d in pn.devices:
        hosted = mapping.hosted_on(d.id)
        if d.id in forwarding:
            color = FORWARDING_COLOR
        elif hosted:
            color = HOST_COLOR
        else:
            color = DEFAULT_COLOR
        label = d.id if not hosted else d.id + "\\n" + ", ".join(hosted)
        lines.append(f"  {_quote(d.id)} [label={_quote(label)}, fillcolor={color}];")
    for l in pn.links:
        units = flows.get(l.key, [])
        fast = sum(1 for u in units if u == FAST)
        slow = sum(1 for u in units if u == SLOW)
        speed = {FAST: "Fast", SLOW: "Slow"}.get(l.capacity, str(l.capacity))
        label = f"{speed}\\nF:{fast} S:{slow}"
        lines.append(f"  {_quote(l.a)} -- {_quote(l.b)} [label={_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


__all__ = ["DEFAULT_COLOR", "DotExportError", "FORWARDING_COLOR", "HOST_COLOR", "export_dot"]
