from .formulation import (
    VARIANTS,
    BuildError,
    CostWeights,
    DecisionError,
    EmsDecision,
    big_m_value,
    build_model,
    closed_form_counts,
    extract_decision,
)
from .model import Constraint, MilpModel, ModelBuilder, ModelError, Variable

__all__ = ["VARIANTS", "BuildError", "Constraint", "CostWeights", "DecisionError", "EmsDecision",
           "MilpModel", "ModelBuilder", "ModelError", "Variable", "big_m_value", "build_model",
           "closed_form_counts", "extract_decision"]
