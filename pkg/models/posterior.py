from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Hashable, Sequence

import numpy as np

from .errors import ContractViolation, DimensionError, ValidationError

if TYPE_CHECKING:
    from services.tensor_core import Graph


@dataclass(frozen=True)
class GaussianPosterior:
    """
    Diagonal Gaussian whose mean and log-variance live as nodes in a graph.

    Both nodes are R x D matrices; each row is one distribution. A single
    distribution is a 1 x D posterior.
    """

    graph: "Graph"
    mean: int
    log_variance: int

    def __post_init__(self) -> None:
        mean_shape = self.graph.shape(self.mean)
        if mean_shape != self.graph.shape(self.log_variance) or len(mean_shape) != 2:
            raise DimensionError(
                f"mean {mean_shape} and log-variance {self.graph.shape(self.log_variance)} "
                "must be matrices of equal shape")
        with np.errstate(over="ignore", under="ignore"):
            variance = np.exp(self.graph.value(self.log_variance))
        if not np.all(np.isfinite(variance)) or not np.all(variance > 0):
            raise ValidationError("posterior variance must be finite and positive", ["log_variance"])

    @classmethod
    def from_values(cls, graph: "Graph", mean, log_variance, requires_grad: bool = True) -> "GaussianPosterior":
        mean = np.atleast_2d(np.asarray(mean, dtype=np.float64))
        log_variance = np.atleast_2d(np.asarray(log_variance, dtype=np.float64))
        return cls(graph,
                   graph.leaf(mean, requires_grad=requires_grad, name="mean"),
                   graph.leaf(log_variance, requires_grad=requires_grad, name="log_variance"))

    @property
    def rows(self) -> int:
        return self.graph.shape(self.mean)[0]

    @property
    def dim(self) -> int:
        return self.graph.shape(self.mean)[1]

    def mean_values(self) -> np.ndarray:
        return self.graph.value(self.mean)

    def variance_values(self) -> np.ndarray:
        return np.exp(self.graph.value(self.log_variance))

    def row(self, index: int) -> "GaussianPosterior":
        return self.select([index])

    def select(self, indices: Sequence[int]) -> "GaussianPosterior":
        return GaussianPosterior(self.graph,
                                 self.graph.gather_rows(self.mean, indices),
                                 self.graph.gather_rows(self.log_variance, indices))


@dataclass
class GroupIndex:
    """Partition of observation rows into labelled groups."""

    group_of: dict[int, Hashable]
    members: dict[Hashable, list[int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.members:
            members: dict[Hashable, list[int]] = {}
            for row in sorted(self.group_of):
                members.setdefault(self.group_of[row], []).append(row)
            self.members = members
        if sorted(self.group_of) != list(range(len(self.group_of))):
            raise ContractViolation("observation rows must be numbered 0..n-1")
        listed = sorted(row for rows in self.members.values() for row in rows)
        if listed != sorted(self.group_of):
            raise ContractViolation("group members do not cover each observation exactly once")
        for group, rows in self.members.items():
            if any(self.group_of[row] != group for row in rows):
                raise ContractViolation(f"group {group!r} lists rows assigned to another group")

    @classmethod
    def from_labels(cls, labels: Sequence[Hashable]) -> "GroupIndex":
        group_of = {row: label for row, label in enumerate(labels)}
        members: dict[Hashable, list[int]] = {}
        for label in sorted(set(labels)):
            members[label] = [row for row, value in enumerate(labels) if value == label]
        return cls(group_of, members)

    @property
    def size(self) -> int:
        return len(self.group_of)

    def groups(self) -> list[Hashable]:
        """Groups with at least one member, in stored order."""
        return [group for group, rows in self.members.items() if rows]

    def position_of(self) -> list[int]:
        """For each observation row, the position of its group in groups()."""
        positions = {group: i for i, group in enumerate(self.groups())}
        return [positions[self.group_of[row]] for row in range(self.size)]

    def membership_matrix(self) -> np.ndarray:
        """G x R indicator matrix for the non-empty groups."""
        groups = self.groups()
        matrix = np.zeros((len(groups), self.size))
        for position, group in enumerate(groups):
            matrix[position, self.members[group]] = 1.0
        return matrix
