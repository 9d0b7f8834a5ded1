"""JSON documents for scenarios, mappings and solve reports.

Every document carries a ``format``/``version``/``kind`` header and is
checked against the bundled JSON schema before any domain object is built,
so unknown fields and wrongly typed values are rejected with the offending
field named.  Unit fields accept either integers or the Small/Big and
Slow/Fast labels; documents are written with labels where one exists.
"""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .constraints import Violation, det_link_requirement
from .model import (
    CAPACITY_LABELS,
    FAST,
    SLOW,
    SPEED_LABELS,
    ForwardingRecord,
    FogDevice,
    Link,
    Mapping,
    MappingResult,
    Microservice,
    ModelError,
    PhysicalNetwork,
    Scenario,
    ScenarioError,
    Sensor,
    ServiceFunctionTree,
    SftEdge,
    SolverConfig,
    path_edges,
)

FORMAT = "sftmap"
VERSION = 1
_CAPACITY_NAMES = {v: k for k, v in CAPACITY_LABELS.items()}
_SPEED_NAMES = {v: k for k, v in SPEED_LABELS.items()}


class DocumentError(ValueError):
    """A document could not be read.

    ``line`` is set for syntax errors, ``field`` (a dotted path such as
    ``network.links[2].a``) for schema and invariant errors.
    """

    def __init__(self, message: str, *, source: str | None = None, line: int | None = None,
                 field: str | None = None, defects=()):
        self.source = source
        self.line = line
        self.field = field
        self.defects = list(defects)
        where = source or "<document>"
        if line is not None:
            where += f":{line}"
        if field:
            where += f" at {field}"
        text = f"{where}: {message}"
        if self.defects:
            text += "\n  - " + "\n  - ".join(self.defects)
        super().__init__(text)


@lru_cache(maxsize=None)
def _schema_defs() -> dict:
    text = resources.files("sftmap").joinpath("schema/documents-v1.json").read_text(encoding="utf-8")
    return json.loads(text)


@lru_cache(maxsize=None)
def _validator(kind: str) -> jsonschema.Draft202012Validator:
    schema = dict(_schema_defs())
    schema["$ref"] = f"#/$defs/{kind}_document"
    return jsonschema.Draft202012Validator(schema)


def _field_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def check_document(doc, kind: str, source: str | None = None) -> None:
    """Raise :class:`DocumentError` unless ``doc`` is a valid ``kind`` document."""
    if not isinstance(doc, dict):
        raise DocumentError("document must be a JSON object", source=source)
    found = doc.get("kind")
    if found != kind:
        raise DocumentError(f"expected a {kind} document, found kind {found!r}", source=source, field="kind")
    errors = sorted(_validator(kind).iter_errors(doc), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        first = errors[0]
        raise DocumentError(
            first.message,
            source=source,
            field=_field_path(first.absolute_path),
            defects=[f"{_field_path(e.absolute_path)}: {e.message}" for e in errors[1:]],
        )


def _parse_json(text: str, source: str | None):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"invalid JSON: {exc.msg} (column {exc.colno})", source=source, line=exc.lineno) from None


def _read(path) -> tuple[str, str]:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8"), str(path)
    except OSError as exc:
        raise DocumentError(f"cannot read file: {exc.strerror or exc}", source=str(path)) from None


def _build(field: str, source, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScenarioError as exc:
        raise DocumentError("invalid content", source=source, field=field, defects=exc.defects or [str(exc)]) from None
    except (ModelError, ValueError) as exc:
        raise DocumentError(str(exc), source=source, field=field) from None


# -- encoding ---------------------------------------------------------------


def _capacity_out(units: int):
    return _CAPACITY_NAMES.get(units, units)


def _speed_out(units: int):
    return _SPEED_NAMES.get(units, units)


def _header(kind: str) -> dict:
    return {"format": FORMAT, "version": VERSION, "kind": kind}


def mapping_to_dict(mapping: Mapping) -> dict:
    return {
        "placements": dict(sorted(mapping.placements.items())),
        "reserved_paths": [
            {"source": s, "target": t, "path": list(p)} for (s, t), p in sorted(mapping.reserved_paths.items())
        ],
        "forwarding": [
            {
                "microservice": m,
                "selected_sensor_device": rec.selected_sensor_device,
                "host": rec.host,
                "path": list(rec.path),
            }
            for m, rec in sorted(mapping.forwarding.items())
        ],
    }


def config_to_dict(config: SolverConfig) -> dict:
    return {
        "h_max": config.h_max,
        "modality_link_requirement": {k: _speed_out(v) for k, v in sorted(config.modality_link_requirement.items())},
        "device_order": config.device_order,
        "random_seed": config.random_seed,
        "pruning": config.pruning,
    }


def scenario_to_dict(scenario: Scenario) -> dict:
    pn, sft = scenario.network, scenario.sft
    doc = _header("scenario")
    doc.update(
        name=scenario.name,
        notes=list(scenario.notes),
        config=config_to_dict(scenario.config),
        network={
            "devices": [
                {"id": d.id, "capacity": _capacity_out(d.capacity), "sensors": sorted(d.sensors_in_range)}
                for d in pn.devices
            ],
            "links": [{"a": l.a, "b": l.b, "capacity": _speed_out(l.capacity)} for l in pn.links],
            "sensors": [{"id": s.id, "modality": s.modality, "roi": s.roi} for s in pn.sensors],
        },
        sft={
            "microservices": [
                {
                    "id": m.id,
                    "kind": m.kind.value,
                    "required_capacity": _capacity_out(m.required_capacity),
                    "required_modality": m.required_modality,
                    "eligible_sensors": sorted(m.eligible_sensors),
                    "required_sensor_count": m.required_sensor_count,
                }
                for m in sft.nodes
            ],
            "edges": [
                {"source": e.source, "target": e.target, "required_speed": _speed_out(e.required_speed)}
                for e in sft.edges
            ],
        },
        reference_mapping=None if scenario.reference_mapping is None else mapping_to_dict(scenario.reference_mapping),
    )
    return doc


def dumps(doc: dict) -> str:
    """Stable pretty-printed JSON with a trailing newline."""
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def scenario_digest(scenario: Scenario) -> str:
    """Content hash of a scenario, independent of its on-disk formatting."""
    body = scenario_to_dict(scenario)
    return "sha256:" + hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


# -- decoding ---------------------------------------------------------------


def mapping_from_dict(body: dict, source: str | None = None, field: str = "mapping") -> Mapping:
    reserved = {}
    for i, item in enumerate(body.get("reserved_paths", [])):
        key = (item["source"], item["target"])
        if key in reserved:
            raise DocumentError(f"duplicate reserved path for {key[0]}->{key[1]}", source=source,
                                field=f"{field}.reserved_paths[{i}]")
        reserved[key] = tuple(item["path"])
    forwarding = {}
    for i, item in enumerate(body.get("forwarding", [])):
        m = item["microservice"]
        if m in forwarding:
            raise DocumentError(f"duplicate forwarding record for {m}", source=source, field=f"{field}.forwarding[{i}]")
        forwarding[m] = ForwardingRecord(item["selected_sensor_device"], item["host"], tuple(item["path"]))
    return Mapping(
        placements=dict(sorted(body["placements"].items())),
        reserved_paths=dict(sorted(reserved.items())),
        forwarding=dict(sorted(forwarding.items())),
    )


def scenario_from_dict(doc: dict, source: str | None = None) -> Scenario:
    check_document(doc, "scenario", source)
    net, tree = doc["network"], doc["sft"]
    sensors = [
        _build(f"network.sensors[{i}]", source, Sensor, s["id"], s["modality"], s["roi"])
        for i, s in enumerate(net.get("sensors", []))
    ]
    devices = [
        _build(f"network.devices[{i}]", source, FogDevice, d["id"], d["capacity"], frozenset(d.get("sensors", [])))
        for i, d in enumerate(net["devices"])
    ]
    links = [
        _build(f"network.links[{i}]", source, Link, l["a"], l["b"], l["capacity"])
        for i, l in enumerate(net.get("links", []))
    ]
    pn = _build("network", source, PhysicalNetwork, tuple(devices), tuple(links), tuple(sensors))
    nodes = [
        _build(
            f"sft.microservices[{i}]",
            source,
            Microservice,
            m["id"],
            m["kind"],
            m["required_capacity"],
            m.get("required_modality"),
            frozenset(m.get("eligible_sensors", [])),
            m.get("required_sensor_count", 0),
        )
        for i, m in enumerate(tree["microservices"])
    ]
    edges = [
        _build(f"sft.edges[{i}]", source, SftEdge, e["source"], e["target"], e["required_speed"])
        for i, e in enumerate(tree.get("edges", []))
    ]
    sft = ServiceFunctionTree(tuple(nodes), tuple(edges))
    cfg = doc.get("config", {})
    config = _build("config", source, SolverConfig, **cfg)
    # Modalities the table does not mention stream at Slow speed.
    config = config.with_modalities(pn.modalities | sft.modalities)
    ref = doc.get("reference_mapping")
    reference = None if ref is None else mapping_from_dict(ref, source, "reference_mapping")
    return _build(
        "<root>",
        source,
        Scenario,
        pn,
        sft,
        config,
        name=doc.get("name", "scenario"),
        notes=tuple(doc.get("notes", [])),
        reference_mapping=reference,
    )


def loads_scenario(text: str, source: str | None = None) -> Scenario:
    return scenario_from_dict(_parse_json(text, source), source)


def load_scenario(path) -> Scenario:
    text, source = _read(path)
    return loads_scenario(text, source)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(dumps(scenario_to_dict(scenario)), encoding="utf-8")


def mapping_document(mapping: Mapping, scenario_name: str | None = None) -> dict:
    doc = _header("mapping")
    if scenario_name is not None:
        doc["scenario"] = scenario_name
    doc["mapping"] = mapping_to_dict(mapping)
    return doc


def loads_mapping(text: str, source: str | None = None) -> Mapping:
    doc = _parse_json(text, source)
    check_document(doc, "mapping", source)
    return mapping_from_dict(doc["mapping"], source)


def load_mapping(path) -> Mapping:
    text, source = _read(path)
    return loads_mapping(text, source)


def save_mapping(mapping: Mapping, path, scenario_name: str | None = None) -> None:
    Path(path).write_text(dumps(mapping_document(mapping, scenario_name)), encoding="utf-8")


# -- reports ----------------------------------------------------------------


def link_flows(pn: PhysicalNetwork, sft: ServiceFunctionTree, mapping: Mapping, config: SolverConfig):
    """Units of every stream crossing each link: SFT edges and relayed sensor data."""
    flows: dict[tuple[str, str], list[int]] = defaultdict(list)
    for key, path in mapping.reserved_paths.items():
        for k in path_edges(path):
            flows[k].append(sft.edge(*key).required_speed)
    for m, rec in mapping.forwarding.items():
        units = det_link_requirement(sft.node(m), config)
        for k in path_edges(rec.full_path):
            flows[k].append(units)
    return flows


def violation_to_dict(v: Violation) -> dict:
    return {"constraint": v.constraint.value, "subject": list(v.subject), "detail": v.detail}


def build_report(scenario: Scenario, result: MappingResult, violations: list[Violation]) -> dict:
    """Solve report document.  Wall-clock time is left out so reports are reproducible."""
    pn, sft, config = scenario.network, scenario.sft, scenario.config
    mapping = result.mapping
    loads = []
    for d in pn.devices:
        hosted = mapping.hosted_on(d.id)
        loads.append(
            {
                "device": d.id,
                "capacity": d.capacity,
                "load": sum(sft.node(m).required_capacity for m in hosted),
                "hosted": hosted,
            }
        )
    flows = link_flows(pn, sft, mapping, config)
    links = [
        {
            "a": l.a,
            "b": l.b,
            "capacity": l.capacity,
            "used": sum(flows.get(l.key, [])),
            "fast": sum(1 for u in flows.get(l.key, []) if u == FAST),
            "slow": sum(1 for u in flows.get(l.key, []) if u == SLOW),
        }
        for l in pn.links
    ]
    doc = _header("report")
    doc.update(
        scenario=scenario.name,
        scenario_digest=scenario_digest(scenario),
        h_max=config.h_max,
        success=result.success,
        stats={
            "attempts": result.stats.attempts,
            "backtracks": result.stats.backtracks,
            "extended_searches": result.stats.extended_searches,
        },
        mapping=mapping_to_dict(mapping),
        violations=[violation_to_dict(v) for v in violations],
        device_loads=loads,
        link_usage=links,
        forwarding_nodes=mapping.forwarding_nodes,
    )
    return doc


__all__ = [
    "DocumentError",
    "FORMAT",
    "VERSION",
    "build_report",
    "canonical_json",
    "check_document",
    "config_to_dict",
    "dumps",
    "link_flows",
    "load_mapping",
    "load_scenario",
    "loads_mapping",
    "loads_scenario",
    "mapping_document",
    "mapping_from_dict",
    "mapping_to_dict",
    "save_mapping",
    "save_scenario",
    "scenario_digest",
    "scenario_from_dict",
    "scenario_to_dict",
]
