"""
Vector-quantization bottleneck: nearest-codeword lookup with straight-through
gradients, the commitment and codebook terms, and usage perplexity.
"""
from __future__ import annotations

import numpy as np
from scipy.stats import entropy

from models.codebook import Codebook, QuantizationResult
from models.errors import DimensionError, UndefinedUsageError
from services.tensor_core import Graph


def nearest_index(z: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """Index of the closest entry per row of z by squared distance; ties go to the lowest index."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    if z.shape[1] != entries.shape[1]:
        raise DimensionError(f"latent width {z.shape[1]} differs from codeword width {entries.shape[1]}")
    distances = ((z[:, None, :] - entries[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(distances, axis=1)


def quantize(graph: Graph, z: int, book: Codebook, entries: int | None = None,
             count_usage: bool = True) -> QuantizationResult:
    """
    Quantize every row of node `z` against the codebook.

    `entries` is the graph node holding the codebook table; a constant copy of
    book.entries is used when it is not given.
    """
    if entries is None:
        entries = graph.constant(book.entries)
    if graph.shape(entries) != book.entries.shape:
        raise DimensionError(f"entries node shape {graph.shape(entries)} differs from codebook {book.entries.shape}")
    shape = graph.shape(z)
    if len(shape) != 2 or shape[1] != book.dim:
        raise DimensionError(f"cannot quantize shape {shape} with a codebook of width {book.dim}")

    index = nearest_index(graph.value(z), graph.value(entries))
    if count_usage:
        np.add.at(book.usage_counts, index, 1)

    codeword = graph.gather_rows(entries, index)
    # value is exactly the codeword, gradient goes to z
    quantized = graph.add(graph.stop_gradient(codeword),
                          graph.subtract(z, graph.stop_gradient(z)))
    return QuantizationResult(graph, index, quantized, codeword, z, book.branch)


def commitment_loss(r: QuantizationResult) -> int:
    graph = r.graph
    return graph.sum(graph.square(graph.subtract(r.pre_quantized, graph.stop_gradient(r.codeword))))


def codebook_loss(r: QuantizationResult) -> int:
    graph = r.graph
    return graph.sum(graph.square(graph.subtract(graph.stop_gradient(r.pre_quantized), r.codeword)))


def perplexity(book: Codebook) -> float:
    counts = book.usage_counts
    if counts.sum() == 0:
        raise UndefinedUsageError(f"{book.branch.value} codebook has no recorded usage")
    return float(np.exp(entropy(counts)))
