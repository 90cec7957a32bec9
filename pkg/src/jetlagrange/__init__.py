"""Canonical geometry of autonomous metrical multi-time Lagrange spaces of electrodynamics."""

from .errors import (
    ConfigurationError,
    DegenerateMetricError,
    ExpressionError,
    JetLagrangeError,
    ModelError,
    SingularMetricError,
    SingularPointError,
)
from .jetgeometry import FieldJets, JetPoint
from .jetnum import JetScalar, JetSpace, jet_space
from .modelspec import ModelDef, load_model, load_model_file, make_model, parse_expression

__all__ = [
    "ConfigurationError",
    "DegenerateMetricError",
    "ExpressionError",
    "FieldJets",
    "JetLagrangeError",
    "JetPoint",
    "JetScalar",
    "JetSpace",
    "ModelDef",
    "ModelError",
    "SingularMetricError",
    "SingularPointError",
    "jet_space",
    "load_model",
    "load_model_file",
    "make_model",
    "parse_expression",
]
