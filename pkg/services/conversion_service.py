"""
Evaluation-mode use of a trained model: group latents, plain reconstruction,
accent conversion and embedding extraction. No sampling happens here; every
latent is a posterior mean.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from models.branch import Branch, EmbeddingKind
from models.dataset import Dataset, Utterance
from models.embedding_record import EmbeddingRecord
from models.errors import DimensionError, UnknownLabelError, ValidationError
from services.dart_model import BRANCHES, Batch, DartModel, decode, encode, group_posteriors
from services.tensor_core import Graph
from services.vq import nearest_index


@dataclass(frozen=True)
class GroupLatents:
    """Decoder-ready latent per group id for each branch."""

    speaker: dict[str, np.ndarray]
    accent: dict[str, np.ndarray]

    def of(self, branch: Branch) -> dict[str, np.ndarray]:
        return self.speaker if branch is Branch.SPEAKER else self.accent


class ConversionService:
    def __init__(self, model: DartModel):
        self.model = model

    def _check(self, data: Dataset) -> None:
        if len(data) == 0:
            raise ValidationError("dataset is empty", ["data"])
        if data.feature_dim != self.model.config.feature_dim:
            raise DimensionError(
                f"dataset feature_dim {data.feature_dim} differs from model {self.model.config.feature_dim}")

    def _bottleneck(self, branch: Branch, rows: np.ndarray) -> np.ndarray:
        if not self.model.config.use_vq:
            return rows.copy()
        entries = self.model.codebooks[branch].entries
        return entries[nearest_index(rows, entries)]

    def _encode(self, data: Dataset):
        self._check(data)
        batch = Batch.from_utterances(data.sorted_by_id().utterances)
        graph = Graph()
        nodes = self.model.bind(graph, trainable=False)
        posteriors = encode(graph, nodes, batch)
        grouped = group_posteriors(self.model.config, posteriors, batch)
        return batch, graph, posteriors, grouped

    def encode_groups(self, data: Dataset) -> GroupLatents:
        batch, graph, _, grouped = self._encode(data)
        latents = {}
        for branch in BRANCHES:
            vectors = self._bottleneck(branch, graph.value(grouped[branch].mean))
            latents[branch] = {group: vectors[k] for k, group in enumerate(batch.groups[branch].groups())}
        return GroupLatents(latents[Branch.SPEAKER], latents[Branch.ACCENT])

    def decode_utterance(self, speaker: np.ndarray, accent: np.ndarray, frames: int) -> np.ndarray:
        """T x F features decoded from one speaker latent and one accent latent."""
        graph = Graph()
        nodes = self.model.bind(graph, trainable=False)
        rows = decode(graph, nodes, graph.constant(speaker.reshape(1, -1)), graph.constant(accent.reshape(1, -1)))
        return np.array(graph.value(graph.gather_rows(rows, [0] * frames)))

    def reconstruct(self, data: Dataset, log_callback=None) -> dict[str, np.ndarray]:
        """Decode every utterance from its own speaker and accent group latents."""
        def log(msg: str) -> None:
            if log_callback:
                log_callback(msg)

        latents = self.encode_groups(data)
        log(f"Reconstructing {len(data)} utterances")
        return {
            u.utterance_id: self.decode_utterance(latents.speaker[u.speaker_id], latents.accent[u.accent_id], u.frames)
            for u in data.sorted_by_id()
        }

    def conversion_latents(self, utterance: Utterance, target_accent: str,
                           reference_set: Dataset) -> tuple[np.ndarray, np.ndarray]:
        reference = reference_set.with_utterance(utterance)
        if target_accent not in reference.accents():
            raise UnknownLabelError(f"accent {target_accent!r} is not present in the reference set")
        latents = self.encode_groups(reference)
        return latents.speaker[utterance.speaker_id], latents.accent[target_accent]

    def convert(self, utterance: Utterance, target_accent: str, reference_set: Dataset,
                log_callback=None) -> np.ndarray:
        """
        Decode with the utterance's speaker latent and the target accent's group latent.

        Args:
            utterance: Source utterance; it joins the reference set if missing
            target_accent: Accent id present in the reference set
            reference_set: Utterances whose groups supply both latents
            log_callback: Optional callback function for logging messages

        Returns:
            T x F features with the source utterance's frame count
        """
        if log_callback:
            log_callback(f"Converting {utterance.utterance_id} from {utterance.accent_id} to {target_accent}")
        speaker, accent = self.conversion_latents(utterance, target_accent, reference_set)
        return self.decode_utterance(speaker, accent, utterance.frames)

    def extract_embeddings(self, data: Dataset, log_callback=None) -> list[EmbeddingRecord]:
        """
        Pre-VQ means, group-accumulated means and quantized vectors for both
        branches, with the whole dataset as one extraction batch.

        Returns:
            Records ordered by utterance id, then branch, then kind
        """
        batch, graph, posteriors, grouped = self._encode(data)
        vectors: dict[tuple[Branch, EmbeddingKind], np.ndarray] = {}
        for branch in BRANCHES:
            grouped_rows = graph.value(grouped[branch].mean)[batch.groups[branch].position_of()]
            vectors[branch, EmbeddingKind.PRE_VQ] = graph.value(posteriors[branch].mean)
            vectors[branch, EmbeddingKind.GROUPED] = grouped_rows
            vectors[branch, EmbeddingKind.QUANTIZED] = self._bottleneck(branch, grouped_rows)

        records = []
        for position, u in enumerate(batch.utterances):
            for branch in BRANCHES:
                for kind in EmbeddingKind:
                    records.append(EmbeddingRecord(u.utterance_id, u.speaker_id, u.accent_id, branch, kind,
                                                   vectors[branch, kind][position].copy()))
        if log_callback:
            log_callback(f"Extracted {len(records)} embedding vectors for {batch.size} utterances")
        return records


def reconstruct(model: DartModel, data: Dataset) -> dict[str, np.ndarray]:
    return ConversionService(model).reconstruct(data)


def convert(model: DartModel, utterance: Utterance, target_accent: str, reference_set: Dataset) -> np.ndarray:
    return ConversionService(model).convert(utterance, target_accent, reference_set)


def extract_embeddings(model: DartModel, data: Dataset) -> list[EmbeddingRecord]:
    return ConversionService(model).extract_embeddings(data)
