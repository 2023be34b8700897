"""Capsule routing-by-agreement with master-coefficient fast inference."""

from caproute.errors import DimensionError, FormatError, MissingClassError, ValidationError
from caproute.master import BuilderConfig, FilterSpec, MasterMatrix, build_master, replicate_master
from caproute.routing import NormKind, RoutingConfig, classify, dynamic_route, fast_route, squash
from caproute.synth import LabeledDataset, PlantedSpec, generate_planted

__all__ = [
    "BuilderConfig",
    "DimensionError",
    "FilterSpec",
    "FormatError",
    "LabeledDataset",
    "MasterMatrix",
    "MissingClassError",
    "NormKind",
    "PlantedSpec",
    "RoutingConfig",
    "ValidationError",
    "build_master",
    "classify",
    "dynamic_route",
    "fast_route",
    "generate_planted",
    "replicate_master",
    "squash",
]
