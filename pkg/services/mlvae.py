"""
Multi-level variational machinery: group accumulation of diagonal Gaussians,
reparameterized sampling and the KL term against a standard normal prior.
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from models.errors import ContractViolation, DimensionError
from models.posterior import GaussianPosterior, GroupIndex
from services.tensor_core import Graph

LOG_VARIANCE_BOUND = 10.0


def clamp_log_variance(graph: Graph, log_variance: int, bound: float = LOG_VARIANCE_BOUND) -> int:
    """Clamp to [-bound, bound] as x - relu(x - bound) + relu(-bound - x)."""
    upper = graph.relu(graph.subtract(log_variance, graph.full_like(log_variance, bound)))
    lower = graph.relu(graph.subtract(graph.full_like(log_variance, -bound), log_variance))
    return graph.add(graph.subtract(log_variance, upper), lower)


def _precision(graph: Graph, p: GaussianPosterior) -> int:
    return graph.exp(graph.negate(p.log_variance))


def accumulate_group(posteriors: Sequence[GaussianPosterior]) -> GaussianPosterior:
    """
    Product of diagonal Gaussians: precisions add, means are precision weighted.

    A single member is returned as is.
    """
    if not posteriors:
        raise ContractViolation("accumulate_group needs at least one posterior")
    graph = posteriors[0].graph
    shape = graph.shape(posteriors[0].mean)
    for p in posteriors[1:]:
        if p.graph is not graph:
            raise ContractViolation("all posteriors must belong to the same graph")
        if graph.shape(p.mean) != shape:
            raise DimensionError(f"posterior shapes differ: {shape} and {graph.shape(p.mean)}")
    if len(posteriors) == 1:
        return posteriors[0]

    precisions = [_precision(graph, p) for p in posteriors]
    weighted = [graph.multiply(prec, p.mean) for prec, p in zip(precisions, posteriors)]
    total_precision = reduce(graph.add, precisions)
    log_variance = graph.negate(graph.log(total_precision))
    mean = graph.multiply(reduce(graph.add, weighted), graph.exp(log_variance))
    return GaussianPosterior(graph, mean, log_variance)


def accumulate_by_group(per_obs: GaussianPosterior, groups: GroupIndex) -> GaussianPosterior:
    """
    Accumulate the rows of `per_obs` within each non-empty group.

    Row k of the result belongs to groups.groups()[k].
    """
    if groups.size != per_obs.rows:
        raise DimensionError(f"group index covers {groups.size} rows, posterior has {per_obs.rows}")
    graph = per_obs.graph
    membership = graph.constant(groups.membership_matrix())
    precision = _precision(graph, per_obs)
    total_precision = graph.matmul(membership, precision)
    weighted = graph.matmul(membership, graph.multiply(precision, per_obs.mean))
    log_variance = graph.negate(graph.log(total_precision))
    mean = graph.multiply(weighted, graph.exp(log_variance))
    return GaussianPosterior(graph, mean, log_variance)


def reparameterize(p: GaussianPosterior, noise) -> int:
    """mean + exp(0.5 * log_variance) * noise; the noise is a constant."""
    graph = p.graph
    noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    if noise.shape != graph.shape(p.mean):
        raise DimensionError(f"noise shape {noise.shape} differs from posterior shape {graph.shape(p.mean)}")
    std = graph.exp(graph.scale(p.log_variance, 0.5))
    return graph.add(p.mean, graph.multiply(std, graph.constant(noise)))


def kl_standard_normal(p: GaussianPosterior) -> int:
    """0.5 * sum(mean^2 + exp(log_variance) - log_variance - 1), summed over every row."""
    graph = p.graph
    inner = graph.subtract(
        graph.subtract(graph.add(graph.square(p.mean), graph.exp(p.log_variance)), p.log_variance),
        graph.full_like(p.log_variance, 1.0),
    )
    return graph.scale(graph.sum(inner), 0.5)


def batch_kl(posterior: GaussianPosterior, batch_size: int) -> int:
    if batch_size < 1:
        raise ContractViolation(f"batch size must be positive, got {batch_size}")
    return posterior.graph.scale(kl_standard_normal(posterior), 1.0 / batch_size)


def kl_loss_batch(per_obs: GaussianPosterior, groups: GroupIndex, grouped: bool = True) -> int:
    """
    KL term of one branch for a mini-batch, divided by the batch size.

    With `grouped`, each group present in the batch is accumulated first and
    contributes one KL; otherwise every observation contributes its own.
    """
    if grouped:
        return batch_kl(accumulate_by_group(per_obs, groups), per_obs.rows)
    return batch_kl(per_obs, per_obs.rows)
