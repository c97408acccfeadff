from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .branch import Branch
from .errors import DimensionError, ValidationError

if TYPE_CHECKING:
    from services.tensor_core import Graph


@dataclass
class Codebook:
    """Table of d codewords of dimension D for one branch, with usage counters."""

    entries: np.ndarray
    branch: Branch
    usage_counts: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.branch = Branch(self.branch)
        self.entries = np.array(self.entries, dtype=np.float64)
        if self.entries.ndim != 2 or min(self.entries.shape) < 1:
            raise ValidationError(f"{self.branch.value} codebook needs a non-empty d x D table, "
                                  f"got shape {self.entries.shape}", ["entries"])
        if not np.all(np.isfinite(self.entries)):
            raise ValidationError(f"{self.branch.value} codebook has non-finite entries", ["entries"])
        if self.usage_counts is None:
            self.usage_counts = np.zeros(self.size, dtype=np.int64)
        self.usage_counts = np.asarray(self.usage_counts, dtype=np.int64)
        if self.usage_counts.shape != (self.size,):
            raise DimensionError(f"usage counts length {self.usage_counts.shape} differs from codebook size {self.size}")

    @classmethod
    def initialize(cls, size: int, dim: int, branch: Branch, rng: np.random.Generator) -> "Codebook":
        """Entries drawn uniformly from [-1/size, 1/size]."""
        limit = 1.0 / size
        return cls(rng.uniform(-limit, limit, size=(size, dim)), branch)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    def reset_usage(self) -> None:
        self.usage_counts = np.zeros(self.size, dtype=np.int64)


@dataclass(frozen=True)
class QuantizationResult:
    """
    Quantization of R latent rows.

    `quantized` is the straight-through output: its value is the selected
    codeword and its gradient is passed to `pre_quantized` unchanged.
    `codeword` is the plain row lookup, differentiable only toward the codebook.
    """

    graph: "Graph"
    index: np.ndarray
    quantized: int
    codeword: int
    pre_quantized: int
    branch: Branch = field(default=Branch.ACCENT)
