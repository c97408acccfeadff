"""
Objective speech metrics: DTW alignment, mel cepstral distortion, F0 frame
error, cosine similarity of embeddings and word error rate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import librosa
import numpy as np

from models.errors import ContractViolation, DimensionError, UndefinedSimilarityError
from models.evaluation_inputs import F0Track

MCD_CONSTANT = 10.0 / np.log(10.0) * np.sqrt(2.0)


def _frames(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise ContractViolation(f"{name} must be a non-empty frame sequence, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class Alignment:
    path: list[tuple[int, int]]
    cost: float


def dtw_align(a, b) -> Alignment:
    """
    Minimum cumulative squared-Euclidean warping path from (0, 0) to the last
    frame pair, with steps (1, 0), (0, 1) and (1, 1).
    """
    a, b = _frames(a, "a"), _frames(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"frame widths differ: {a.shape[1]} vs {b.shape[1]}")
    D, wp = librosa.sequence.dtw(X=a.T, Y=b.T, metric="sqeuclidean")
    path = [(int(i), int(j)) for i, j in wp[::-1]]
    return Alignment(path, float(D[-1, -1]))


def mcd(ref_cep, syn_cep, skip_c0: bool = True) -> float:
    """DTW-aligned mean of (10/ln 10) * sqrt(2 * sum_d (c_d - c'_d)^2) over the path."""
    ref, syn = _frames(ref_cep, "reference cepstra"), _frames(syn_cep, "synthesized cepstra")
    if ref.shape[1] != syn.shape[1]:
        raise DimensionError(f"cepstral orders differ: {ref.shape[1]} vs {syn.shape[1]}")
    if skip_c0:
        if ref.shape[1] < 2:
            raise DimensionError("skipping c0 leaves no coefficients")
        ref, syn = ref[:, 1:], syn[:, 1:]
    path = np.array(dtw_align(ref, syn).path)
    diff = ref[path[:, 0]] - syn[path[:, 1]]
    return float(np.mean(MCD_CONSTANT * np.sqrt(np.sum(diff * diff, axis=1))))


def ffe(ref: F0Track, syn: F0Track, gross_threshold: float = 0.2) -> float:
    """Fraction of frames with a voicing decision error or a gross pitch error."""
    if ref.frames != syn.frames:
        raise DimensionError(f"F0 tracks have {ref.frames} and {syn.frames} frames")
    if ref.frames == 0:
        raise ContractViolation("F0 tracks are empty")
    voicing_error = ref.voiced != syn.voiced
    both = ref.voiced & syn.voiced
    deviation = np.zeros(ref.frames)
    deviation[both] = np.abs(syn.f0_hz[both] - ref.f0_hz[both]) / ref.f0_hz[both]
    gross_error = both & (deviation > gross_threshold)
    return float(np.count_nonzero(voicing_error | gross_error) / ref.frames)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionError(f"vector lengths differ: {a.size} vs {b.size}")
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise UndefinedSimilarityError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def average_cosine_similarity(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    if not pairs:
        raise ContractViolation("no embedding pairs to compare")
    return float(np.mean([cosine_similarity(a, b) for a, b in pairs]))


@dataclass(frozen=True)
class WerResult:
    rate: float
    substitutions: int
    deletions: int
    insertions: int
    reference_length: int

    def as_dict(self) -> dict[str, float]:
        return {"wer": self.rate, "substitutions": self.substitutions, "deletions": self.deletions,
                "insertions": self.insertions, "reference_tokens": self.reference_length}


def edit_operations(ref: Sequence[str], hyp: Sequence[str]) -> tuple[int, int, int]:
    """
    (substitutions, deletions, insertions) of a minimum-edit alignment.

    Among alignments of equal cost the one with fewest insertions wins. Since
    deletions - insertions = len(ref) - len(hyp) for every alignment, that is
    also the one with most substitutions.
    """
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    inserted = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    inserted[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost[i, j], inserted[i, j] = min(
                (cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]), inserted[i - 1, j - 1]),
                (cost[i - 1, j] + 1, inserted[i - 1, j]),
                (cost[i, j - 1] + 1, inserted[i, j - 1] + 1),
            )

    insertions = int(inserted[n, m])
    deletions = insertions + n - m
    substitutions = int(cost[n, m]) - deletions - insertions
    return substitutions, deletions, insertions


def wer(ref_tokens: Sequence[str], hyp_tokens: Sequence[str]) -> WerResult:
    if len(ref_tokens) == 0:
        raise ContractViolation("word error rate needs a non-empty reference")
    s, d, i = edit_operations(ref_tokens, hyp_tokens)
    return WerResult((s + d + i) / len(ref_tokens), s, d, i, len(ref_tokens))


def corpus_wer(pairs: Sequence[tuple[Sequence[str], Sequence[str]]]) -> WerResult:
    """Edit counts summed over line pairs, divided by the total reference length."""
    totals = np.zeros(3, dtype=np.int64)
    length = 0
    for ref, hyp in pairs:
        totals += edit_operations(ref, hyp)
        length += len(ref)
    if length == 0:
        raise ContractViolation("word error rate needs a non-empty reference")
    s, d, i = (int(v) for v in totals)
    return WerResult((s + d + i) / length, s, d, i, length)
