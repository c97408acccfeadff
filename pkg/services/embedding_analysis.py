"""
Cluster quality of extracted embeddings and 2-D projection for scatter plots.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import pandas as pd
from sklearn.decomposition import PCA

from models.branch import Branch, EmbeddingKind
from models.embedding_record import EmbeddingRecord, select_records
from models.errors import DegenerateDataError, DimensionError, InsufficientDataError


TIE_RTOL = 1e-9
TIE_ATOL = 1e-12


def nearest_class(distances: np.ndarray) -> np.ndarray:
    """
    Column of the smallest distance in each row.

    Distances within TIE_RTOL/TIE_ATOL of the row minimum count as tied and
    the first tied column wins.
    """
    tied = np.isclose(distances, distances.min(axis=1, keepdims=True), rtol=TIE_RTOL, atol=TIE_ATOL)
    return np.argmax(tied, axis=1)


def leave_one_out_centroid_accuracy(points: np.ndarray, labels: Sequence[str]) -> float:
    """
    Leave-one-out nearest-centroid accuracy with Euclidean distance.

    A held-out point is compared with its own class centroid recomputed
    without it; ties go to the lowest label in sorted order.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes, encoded, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if classes.size < 2:
        raise InsufficientDataError(f"need at least 2 labels, got {classes.size}")
    if counts.min() < 2:
        raise InsufficientDataError(f"label {classes[counts.argmin()]!r} has fewer than 2 records")

    sums = np.zeros((classes.size, points.shape[1]))
    np.add.at(sums, encoded, points)
    centroids = sums / counts[:, None]
    distances = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    rows = np.arange(points.shape[0])
    own = (sums[encoded] - points) / (counts[encoded] - 1)[:, None]
    distances[rows, encoded] = ((points - own) ** 2).sum(axis=1)
    predicted = nearest_class(distances)
    return float(np.mean(predicted == encoded))


def _stack(records: Sequence[EmbeddingRecord]) -> np.ndarray:
    widths = {r.vector.size for r in records}
    if len(widths) > 1:
        raise DimensionError(f"embedding widths differ: {sorted(widths)}")
    return np.vstack([r.vector for r in records])


def centroid_accuracy(records: Sequence[EmbeddingRecord], label: Branch,
                      branch: Branch | None = None, kind: EmbeddingKind | None = None) -> float:
    """
    Leave-one-out nearest-centroid accuracy of speaker or accent labels.

    When branch and kind are given, only records of that embedding space are used.
    """
    if branch is not None and kind is not None:
        records = select_records(list(records), branch, kind)
    if not records:
        raise InsufficientDataError("no embedding records selected")
    return leave_one_out_centroid_accuracy(_stack(records), [r.label(label) for r in records])


def group_holdout_accuracy(records: Sequence[EmbeddingRecord], label: Branch = Branch.ACCENT,
                           holdout: Branch = Branch.SPEAKER) -> float:
    """
    Nearest-centroid accuracy when every record of a holdout group is scored
    against centroids built only from the other groups.
    """
    points = _stack(records)
    labels = np.array([r.label(label) for r in records])
    held = np.array([r.label(holdout) for r in records])
    correct = 0
    for group in sorted(set(held)):
        test = held == group
        train_labels = labels[~test]
        classes = np.unique(train_labels)
        if classes.size < 2:
            raise InsufficientDataError(f"holding out {group!r} leaves fewer than 2 labels")
        centroids = np.vstack([points[~test][train_labels == c].mean(axis=0) for c in classes])
        distances = ((points[test][:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        correct += int(np.sum(classes[nearest_class(distances)] == labels[test]))
    return correct / len(records)


def pca2(vectors) -> np.ndarray:
    """
    Mean-centred projection onto the top two principal directions.

    Each direction is signed so its first nonzero loading is positive.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InsufficientDataError(f"PCA needs at least 2 vectors, got shape {X.shape}")
    if X.shape[1] < 2:
        raise DegenerateDataError(f"PCA to 2-D needs at least 2 dimensions, got {X.shape[1]}")
    if np.allclose(X, X.mean(axis=0), rtol=0.0, atol=0.0):
        raise DegenerateDataError("all vectors coincide after centring")

    pca = PCA(n_components=2, svd_solver="full")
    projected = pca.fit_transform(X)
    for k, component in enumerate(pca.components_):
        scale = np.abs(component).max()
        first = np.flatnonzero(np.abs(component) > 1e-12 * scale)
        if first.size and component[first[0]] < 0:
            projected[:, k] = -projected[:, k]
    return projected


def disentanglement_report(records: Sequence[EmbeddingRecord]) -> pd.DataFrame:
    """
    Centroid accuracy of both labels in every branch/kind space, plus accent
    accuracy with each speaker held out.
    """
    rows = []
    for branch in Branch:
        for kind in EmbeddingKind:
            selected = select_records(list(records), branch, kind)
            if not selected:
                continue
            for label in Branch:
                rows.append({"branch": branch.value, "kind": kind.value, "label": label.value,
                             "metric": "centroid_accuracy", "value": centroid_accuracy(selected, label)})
            try:
                holdout = group_holdout_accuracy(selected)
            except InsufficientDataError:
                holdout = float("nan")
            rows.append({"branch": branch.value, "kind": kind.value, "label": Branch.ACCENT.value,
                         "metric": "speaker_holdout_accuracy", "value": holdout})
    return pd.DataFrame(rows, columns=["branch", "kind", "label", "metric", "value"])
