"""Iterative descriptor construction and selection with BART screening."""

__version__ = "0.1.0"

from .bart import BartConfig, bart_fit
from .descriptors import Descriptor, Op, evaluate, parse_descriptor
from .estimators import BartGSESelector, DescriptorExpander, IBARTRegressor
from .exceptions import (
    BudgetExceededError,
    DomainError,
    IbartError,
    NoSignalError,
    ParseError,
    ValidationError,
)
from .pan import PanConfig, PanResult, pan_run
from .selectors import gse_select, l0_best_subset, lasso_cv, lasso_path
from .space import DescriptorSpace, generate_binary, generate_unary

__all__ = [
    "__version__",
    "BartConfig",
    "bart_fit",
    "Descriptor",
    "Op",
    "evaluate",
    "parse_descriptor",
    "BartGSESelector",
    "DescriptorExpander",
    "IBARTRegressor",
    "BudgetExceededError",
    "DomainError",
    "IbartError",
    "NoSignalError",
    "ParseError",
    "ValidationError",
    "PanConfig",
    "PanResult",
    "pan_run",
    "gse_select",
    "l0_best_subset",
    "lasso_cv",
    "lasso_path",
    "DescriptorSpace",
    "generate_binary",
    "generate_unary",
]
