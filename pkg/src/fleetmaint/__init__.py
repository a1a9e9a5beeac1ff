"""Deterministic desk-scale predictive-maintenance platform simulation.

Edge gateways score streaming vehicle telemetry with Local Outlier
Factor, suspicious reports travel over an in-process pub/sub bus to a
cloud analyzer that localizes the suspect part and maintains the
learning-model lifecycle, and a backend coordinator turns diagnoses into
maintenance orders fulfilled from stock or print-on-demand near the
vehicle's destination.
"""

from .errors import (
    CatalogError,
    DuplicateMessageError,
    FleetMaintError,
    IntegrityError,
    InvalidFilterError,
    InvalidInputError,
    OutOfRouteError,
    ScenarioError,
    SchemaMismatchError,
)
from .lof import LofParams, lof_score
from .models import LinearClassifier, ModelSnapshot

__all__ = [
    "CatalogError",
    "DuplicateMessageError",
    "FleetMaintError",
    "IntegrityError",
    "InvalidFilterError",
    "InvalidInputError",
    "LinearClassifier",
    "LofParams",
    "ModelSnapshot",
    "OutOfRouteError",
    "ScenarioError",
    "SchemaMismatchError",
    "lof_score",
]

__version__ = "0.1.0"
