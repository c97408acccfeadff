"""
Training loop: seeded mini-batches, Adam with linear warmup and stepwise
annealing, and a per-step loss history.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from models.branch import Branch
from models.dataset import Dataset
from models.errors import ContractViolation, DimensionError, DivergenceError, ValidationError
from models.loss_breakdown import LossBreakdown
from models.model_config import ModelConfig
from services.dart_model import (
    DECODER_PARAMETERS,
    Batch,
    DartModel,
    build_model,
    inherit_decoder,
    loss_for_batch,
    seed_streams,
)
from services.checkpoint import load_checkpoint
from services.tensor_core import Graph
from services.vq import perplexity

ANNEAL_FACTOR = 0.3
ADAM_BETAS = (0.9, 0.98)
ADAM_EPSILON = 1e-9

HISTORY_COLUMNS = ["step", "learning_rate", "recon", "kl", "commitment", "codebook", "total", "beta",
                   "speaker_perplexity", "accent_perplexity"]


def learning_rate(step: int, cfg: ModelConfig) -> float:
    """Linear ramp to the peak over warmup_steps, then x0.3 from each anneal step on."""
    if not 0 <= step <= cfg.total_steps:
        raise ContractViolation(f"step {step} outside [0, {cfg.total_steps}]")
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.learning_rate * step / cfg.warmup_steps
    passed = sum(1 for milestone in cfg.anneal_steps if step >= milestone)
    return cfg.learning_rate * ANNEAL_FACTOR ** passed


@dataclass
class AdamState:
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               lr: float) -> dict[str, np.ndarray]:
        beta1, beta2 = ADAM_BETAS
        self.steps += 1
        updated = {}
        for name, grad in grads.items():
            m = beta1 * self.first.get(name, 0.0) + (1.0 - beta1) * grad
            v = beta2 * self.second.get(name, 0.0) + (1.0 - beta2) * grad * grad
            self.first[name], self.second[name] = m, v
            m_hat = m / (1.0 - beta1 ** self.steps)
            v_hat = v / (1.0 - beta2 ** self.steps)
            updated[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPSILON)
        return updated


@dataclass
class TrainingResult:
    model: DartModel
    history: list[dict[str, float]]
    final_loss: LossBreakdown

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.history, columns=HISTORY_COLUMNS)


def save_history_csv(result: TrainingResult, path: Path) -> None:
    result.history_frame().to_csv(path, index=False, lineterminator="\n", float_format="%.17g")


def _codebook_perplexity(model: DartModel, branch: Branch) -> float:
    if not model.config.use_vq:
        return float("nan")
    return perplexity(model.codebooks[branch])


class TrainService:
    """Trains a model from a config on a labelled dataset."""

    def __init__(self, config: ModelConfig):
        self.config = config

    def _initial_model(self, log) -> DartModel:
        model = build_model(self.config)
        if self.config.init_checkpoint:
            source = load_checkpoint(Path(self.config.init_checkpoint))
            inherit_decoder(model, source)
            log(f"Decoder initialized from {self.config.init_checkpoint}"
                + (" (frozen)" if self.config.freeze_decoder else ""))
        return model

    def _batches(self, count: int, rng: np.random.Generator):
        """Endless stream of index lists: one seeded permutation per epoch, last batch may be short."""
        size = self.config.batch_size
        while True:
            order = rng.permutation(count)
            for start in range(0, count, size):
                yield order[start:start + size].tolist()

    def train(self, data: Dataset, log_callback=None) -> TrainingResult:
        """
        Run total_steps optimizer steps.

        Utterances are sorted by id first, so the result depends only on the
        dataset contents and the seed.

        Args:
            data: Training utterances, all with the config's feature_dim
            log_callback: Optional callback function for logging messages

        Returns:
            TrainingResult with the trained model and one history row per step

        Raises:
            DivergenceError: If a loss term stops being finite
        """
        def log(msg: str) -> None:
            if log_callback:
                log_callback(msg)

        cfg = self.config
        cfg.validate()
        if len(data) == 0:
            raise ValidationError("cannot train on an empty dataset", ["data"])
        if data.feature_dim != cfg.feature_dim:
            raise DimensionError(f"dataset feature_dim {data.feature_dim} differs from config {cfg.feature_dim}")

        streams = seed_streams(cfg.seed)
        model = self._initial_model(log)
        for book in model.codebooks.values():
            book.reset_usage()
        frozen = DECODER_PARAMETERS if cfg.freeze_decoder else ()
        utterances = data.sorted_by_id().utterances
        batches = self._batches(len(utterances), streams["shuffle"])
        adam = AdamState()

        log(f"Training on {len(utterances)} utterances for {cfg.total_steps} steps "
            f"(batch {cfg.batch_size}, seed {cfg.seed})")
        history: list[dict[str, float]] = []
        breakdown = None
        for step in range(1, cfg.total_steps + 1):
            batch = Batch.from_utterances([utterances[i] for i in next(batches)])
            graph = Graph()
            nodes = model.bind(graph, frozen=frozen)
            _, losses = loss_for_batch(model, graph, nodes, batch, training=True, rng=streams["noise"])
            breakdown = losses.breakdown(graph, cfg.beta)
            for term in ("recon", "kl", "commitment", "codebook", "total"):
                value = getattr(breakdown, term)
                if not np.isfinite(value):
                    log(f"ERROR: {term} became {value} at step {step}")
                    raise DivergenceError(step, term, value)

            grads = graph.backward(losses.total)
            lr = learning_rate(step, cfg)
            params = model.parameters()
            trainable = {name: grads[node] for name, node in nodes.items() if name not in frozen}
            for name, values in adam.update(params, trainable, lr).items():
                model.set_parameter(name, values)

            row = {"step": step, "learning_rate": lr, **breakdown.as_dict(),
                   "speaker_perplexity": _codebook_perplexity(model, Branch.SPEAKER),
                   "accent_perplexity": _codebook_perplexity(model, Branch.ACCENT)}
            history.append(row)
            if step % cfg.log_every == 0 or step == cfg.total_steps:
                log(f"step {step}: lr={lr:.3g} total={breakdown.total:.6f} recon={breakdown.recon:.6f} "
                    f"kl={breakdown.kl:.4f} commit={breakdown.commitment:.6f} "
                    f"perplexity s/a={row['speaker_perplexity']:.2f}/{row['accent_perplexity']:.2f}")

        log(f"✓ Training finished: final total loss {breakdown.total:.6f}")
        return TrainingResult(model, history, breakdown)


def train(cfg: ModelConfig, data: Dataset, log_callback=None) -> TrainingResult:
    return TrainService(cfg).train(data, log_callback=log_callback)
