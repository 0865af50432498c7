"""Exact robustness verification for binarized networks with ternary weights."""
from .network import BnnModel, InputSpec, ModelError, Norm, load_input, load_model, propagate, propagate_scaled
from .search import MaxEpsResult, bracket_search, max_eps
from .verify import METHODS, Answer, MethodConfig, VerifyReport, verify_bnn

__all__ = [
    "Answer", "BnnModel", "InputSpec", "METHODS", "MaxEpsResult", "MethodConfig", "ModelError", "Norm",
    "VerifyReport", "bracket_search", "load_input", "load_model", "max_eps", "propagate",
    "propagate_scaled", "verify_bnn",
]
__version__ = "0.1.0"
