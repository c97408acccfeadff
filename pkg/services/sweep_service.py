"""
Codebook-size sweep: one training run per size, summarised as a table row.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import pandas as pd

from models.branch import Branch, EmbeddingKind
from models.dataset import Dataset
from models.errors import ContractViolation
from models.model_config import ModelConfig
from services.conversion_service import ConversionService
from services.dart_model import Batch, loss_for_batch
from services.embedding_analysis import centroid_accuracy
from services.tensor_core import Graph
from services.train_service import TrainService

SWEEP_COLUMNS = [
    "size", "recon", "kl", "commitment",
    "accent_grouped_accuracy", "speaker_grouped_accuracy",
    "accent_quantized_accuracy", "speaker_quantized_accuracy",
    "speaker_perplexity", "accent_perplexity",
]


def sweep_row(cfg: ModelConfig, data: Dataset, size: int) -> dict[str, float]:
    """Train with both codebooks of `size` entries and seed cfg.seed + size, then evaluate."""
    run_cfg = cfg.with_overrides(codebook_sizes=(size, size), seed=cfg.seed + size)
    result = TrainService(run_cfg).train(data)
    model = result.model

    graph = Graph()
    nodes = model.bind(graph, trainable=False)
    batch = Batch.from_utterances(data.sorted_by_id().utterances)
    _, losses = loss_for_batch(model, graph, nodes, batch, training=False, count_usage=False)
    evaluation = losses.breakdown(graph, run_cfg.beta)

    records = ConversionService(model).extract_embeddings(data)
    last = result.history[-1]
    return {
        "size": size,
        "recon": evaluation.recon,
        "kl": evaluation.kl,
        "commitment": evaluation.commitment,
        "accent_grouped_accuracy": centroid_accuracy(records, Branch.ACCENT, Branch.ACCENT, EmbeddingKind.GROUPED),
        "speaker_grouped_accuracy": centroid_accuracy(records, Branch.SPEAKER, Branch.SPEAKER, EmbeddingKind.GROUPED),
        "accent_quantized_accuracy": centroid_accuracy(records, Branch.ACCENT, Branch.ACCENT, EmbeddingKind.QUANTIZED),
        "speaker_quantized_accuracy": centroid_accuracy(records, Branch.SPEAKER, Branch.SPEAKER, EmbeddingKind.QUANTIZED),
        "speaker_perplexity": last["speaker_perplexity"],
        "accent_perplexity": last["accent_perplexity"],
    }


class SweepService:
    def __init__(self, config: ModelConfig, workers: int = 1):
        if workers < 1:
            raise ContractViolation(f"workers must be at least 1, got {workers}")
        self.config = config
        self.workers = workers

    def run(self, data: Dataset, sizes: Sequence[int], log_callback=None) -> pd.DataFrame:
        """
        Train and evaluate one model per codebook size.

        Args:
            data: Dataset used for training and for the embedding evaluation
            sizes: Codebook sizes, applied to both branches
            log_callback: Optional callback function for logging messages

        Returns:
            DataFrame with SWEEP_COLUMNS and one row per size, in the given order
        """
        def log(msg: str) -> None:
            if log_callback:
                log_callback(msg)

        if not sizes or any(size < 1 for size in sizes):
            raise ContractViolation(f"codebook sizes must be positive, got {list(sizes)}")

        rows = []
        if self.workers == 1:
            for size in sizes:
                log(f"Training with codebook size {size}...")
                rows.append(sweep_row(self.config, data, size))
                log(f"✓ size {size}: accent accuracy {rows[-1]['accent_grouped_accuracy']:.3f}")
        else:
            log(f"Training {len(sizes)} codebook sizes on {self.workers} worker processes...")
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                futures = [pool.submit(sweep_row, self.config, data, size) for size in sizes]
                for size, future in zip(sizes, futures):
                    rows.append(future.result())
                    log(f"✓ size {size}: accent accuracy {rows[-1]['accent_grouped_accuracy']:.3f}")
        return pd.DataFrame(rows, columns=SWEEP_COLUMNS)
