"""Map service function trees of event-processing microservices onto fog networks."""

from .constraints import ConstraintKind, Violation, find_feasible_path, validate_full_mapping
from .model import (
    BIG,
    FAST,
    SLOW,
    SMALL,
    ForwardingRecord,
    FogDevice,
    Link,
    LinkUsage,
    Mapping,
    MappingResult,
    Microservice,
    MicroserviceKind,
    PhysicalNetwork,
    Scenario,
    Sensor,
    ServiceFunctionTree,
    SftEdge,
    SolverConfig,
    SolverStats,
)
from .oracle import enumerate_valid_mappings, oracle_feasible
from .solver import map_sft_to_pn

__version__ = "0.1.0"

__all__ = [
    "BIG",
    "FAST",
    "SLOW",
    "SMALL",
    "ConstraintKind",
    "ForwardingRecord",
    "FogDevice",
    "Link",
    "LinkUsage",
    "Mapping",
    "MappingResult",
    "Microservice",
    "MicroserviceKind",
    "PhysicalNetwork",
    "Scenario",
    "Sensor",
    "ServiceFunctionTree",
    "SftEdge",
    "SolverConfig",
    "SolverStats",
    "Violation",
    "enumerate_valid_mappings",
    "find_feasible_path",
    "map_sft_to_pn",
    "oracle_feasible",
    "validate_full_mapping",
]
