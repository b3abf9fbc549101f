"""Combinatorial compressed sensing with expander matrices.

Measurement matrices, sparse test signals, greedy decoders and the
Monte-Carlo harness used to measure their recovery regions.
"""

from .decoders import ALGORITHMS, DecodeConfig, DecodeReport, decode, hard_threshold
from .errors import BudgetError, CCSError, FormatError, InvalidArgumentError
from .expander import (
    ExpanderMatrix,
    ExpansionReport,
    apply,
    certify_expansion,
    generate,
    neighborhood,
    unique_neighborhood,
)
from .signals import (
    SignalSpec,
    SparseSignal,
    is_dissociated,
    sample_signal,
    scale_columns_dissociated,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "BudgetError",
    "CCSError",
    "DecodeConfig",
    "DecodeReport",
    "ExpanderMatrix",
    "ExpansionReport",
    "FormatError",
    "InvalidArgumentError",
    "SignalSpec",
    "SparseSignal",
    "apply",
    "certify_expansion",
    "decode",
    "generate",
    "hard_threshold",
    "is_dissociated",
    "neighborhood",
    "sample_signal",
    "scale_columns_dissociated",
    "unique_neighborhood",
]
