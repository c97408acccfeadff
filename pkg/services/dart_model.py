"""
Desk-scale accent/speaker disentanglement model.

Frames go through a two-layer tanh encoder and are average-pooled per
utterance. Each branch has mean and log-variance heads; the per-utterance
posteriors are accumulated within their group (speaker_id for the speaker
branch, accent_id for the accent branch). Speaker group means are taken
relative to the mean of their accent's speakers. Group latents are sampled
during training, passed through the branch codebook and decoded back to
frames from the concatenated speaker and accent latents.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from models.branch import Branch
from models.codebook import Codebook, QuantizationResult
from models.dataset import Utterance
from models.errors import ContractViolation, DimensionError, ValidationError
from models.loss_breakdown import LossBreakdown
from models.model_config import ModelConfig
from models.posterior import GaussianPosterior, GroupIndex
from services.mlvae import accumulate_by_group, batch_kl, clamp_log_variance, reparameterize
from services.tensor_core import Graph
from services.vq import codebook_loss, commitment_loss, quantize

BRANCHES = (Branch.SPEAKER, Branch.ACCENT)
DECODER_PARAMETERS = ("dec_w1", "dec_b1", "dec_w2", "dec_b2", "dec_w3", "dec_b3")


def codebook_parameter(branch: Branch) -> str:
    return f"{branch.value}_codebook"


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for initialization, batch shuffling and latent noise."""
    init, shuffle, noise = np.random.SeedSequence(seed).spawn(3)
    return {
        "init": np.random.default_rng(init),
        "shuffle": np.random.default_rng(shuffle),
        "noise": np.random.default_rng(noise),
    }


@dataclass
class DartModel:
    config: ModelConfig
    params: dict[str, np.ndarray]
    codebooks: dict[Branch, Codebook]

    def parameters(self) -> dict[str, np.ndarray]:
        """All trainable arrays in a fixed order, codebooks last."""
        merged = dict(self.params)
        for branch in BRANCHES:
            merged[codebook_parameter(branch)] = self.codebooks[branch].entries
        return merged

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.parameters().values()))

    def set_parameter(self, name: str, values: np.ndarray) -> None:
        values = np.array(values, dtype=np.float64)
        current = self.parameters()
        if name not in current:
            raise KeyError(f"model has no parameter {name!r}")
        if values.shape != current[name].shape:
            raise DimensionError(f"{name} has shape {current[name].shape}, got {values.shape}")
        for branch in BRANCHES:
            if name == codebook_parameter(branch):
                self.codebooks[branch].entries = values
                return
        self.params[name] = values

    def bind(self, graph: Graph, trainable: bool = True, frozen: tuple[str, ...] = ()) -> dict[str, int]:
        """Add every parameter to `graph` as a leaf; frozen or non-trainable ones get no gradient."""
        return {
            name: graph.leaf(values, requires_grad=trainable and name not in frozen, name=name)
            for name, values in self.parameters().items()
        }


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def build_model(cfg: ModelConfig) -> DartModel:
    cfg.validate()
    rng = seed_streams(cfg.seed)["init"]
    F, H, D = cfg.feature_dim, cfg.hidden_dim, cfg.latent_dim
    params: dict[str, np.ndarray] = {}

    def dense(name: str, fan_in: int, fan_out: int) -> None:
        params[f"{name}_w"] = _glorot(rng, fan_in, fan_out)
        params[f"{name}_b"] = np.zeros((1, fan_out))

    params["enc_w1"], params["enc_b1"] = _glorot(rng, F, H), np.zeros((1, H))
    params["enc_w2"], params["enc_b2"] = _glorot(rng, H, H), np.zeros((1, H))
    for branch in BRANCHES:
        dense(f"{branch.value}_mean", H, D)
        dense(f"{branch.value}_logvar", H, D)
    params["dec_w1"], params["dec_b1"] = _glorot(rng, 2 * D, H), np.zeros((1, H))
    params["dec_w2"], params["dec_b2"] = _glorot(rng, H, H), np.zeros((1, H))
    params["dec_w3"], params["dec_b3"] = _glorot(rng, H, F), np.zeros((1, F))

    codebooks = {
        branch: Codebook.initialize(size, D, branch, rng)
        for branch, size in zip(BRANCHES, cfg.codebook_sizes)
    }
    return DartModel(cfg, params, codebooks)


def inherit_decoder(model: DartModel, source: DartModel) -> None:
    """Copy decoder weights from a previously trained model of matching shape."""
    mismatched = [name for name in DECODER_PARAMETERS
                  if source.params[name].shape != model.params[name].shape]
    if mismatched:
        raise ValidationError(f"init checkpoint decoder shapes do not match: {', '.join(mismatched)}",
                              mismatched)
    for name in DECODER_PARAMETERS:
        model.params[name] = source.params[name].copy()


@dataclass(frozen=True)
class Batch:
    """Utterances stacked frame-wise, with pooling matrices and group indices."""

    utterances: list[Utterance]
    frames: np.ndarray
    frame_owner: list[int]
    frame_counts: np.ndarray
    groups: dict[Branch, GroupIndex] = field(default_factory=dict)

    @classmethod
    def from_utterances(cls, utterances: list[Utterance]) -> "Batch":
        if not utterances:
            raise ContractViolation("a batch needs at least one utterance")
        dims = {u.feature_dim for u in utterances}
        if len(dims) != 1:
            raise DimensionError(f"batch mixes feature dimensions {sorted(dims)}")
        owner = [i for i, u in enumerate(utterances) for _ in range(u.frames)]
        groups = {
            Branch.SPEAKER: GroupIndex.from_labels([u.speaker_id for u in utterances]),
            Branch.ACCENT: GroupIndex.from_labels([u.accent_id for u in utterances]),
        }
        return cls(list(utterances), np.vstack([u.features for u in utterances]), owner,
                   np.array([u.frames for u in utterances], dtype=np.float64), groups)

    @property
    def size(self) -> int:
        return len(self.utterances)

    def sum_matrix(self) -> np.ndarray:
        matrix = np.zeros((self.size, len(self.frame_owner)))
        matrix[self.frame_owner, np.arange(len(self.frame_owner))] = 1.0
        return matrix

    def pool_matrix(self) -> np.ndarray:
        return self.sum_matrix() / self.frame_counts[:, None]

    def accent_centring_matrix(self) -> np.ndarray:
        """
        S x S matrix that subtracts from each speaker group row the mean of the
        speaker groups sharing its accent in this batch.
        A speaker seen under several accents counts under its first one.
        """
        accent_of: dict[str, str] = {}
        for u in self.utterances:
            accent_of.setdefault(u.speaker_id, u.accent_id)
        speakers = self.groups[Branch.SPEAKER].groups()
        accents = np.array([accent_of[s] for s in speakers])
        same = (accents[:, None] == accents[None, :]).astype(np.float64)
        return np.eye(len(speakers)) - same / same.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class ForwardOutput:
    graph: Graph
    reconstruction: int
    posteriors: dict[Branch, GaussianPosterior]
    grouped: dict[Branch, GaussianPosterior]
    latents: dict[Branch, int]
    quantization: dict[Branch, QuantizationResult | None]
    batch: Batch

    def reconstruction_of(self, position: int) -> np.ndarray:
        rows = [i for i, owner in enumerate(self.batch.frame_owner) if owner == position]
        return self.graph.value(self.reconstruction)[rows]


@dataclass(frozen=True)
class LossNodes:
    recon: int
    kl: int
    commitment: int
    codebook: int
    total: int

    def breakdown(self, graph: Graph, beta: float) -> LossBreakdown:
        def scalar(node: int) -> float:
            return float(graph.value(node)[0])

        return LossBreakdown(scalar(self.recon), scalar(self.kl), scalar(self.commitment),
                             scalar(self.codebook), scalar(self.total), beta)


def encode(graph: Graph, nodes: dict[str, int], batch: Batch) -> dict[Branch, GaussianPosterior]:
    """Per-utterance posteriors for both branches, log-variance clamped."""
    frames = graph.constant(batch.frames)
    hidden = graph.tanh(graph.dense(frames, nodes["enc_w1"], nodes["enc_b1"]))
    hidden = graph.tanh(graph.dense(hidden, nodes["enc_w2"], nodes["enc_b2"]))
    pooled = graph.matmul(graph.constant(batch.pool_matrix()), hidden)
    posteriors = {}
    for branch in BRANCHES:
        name = branch.value
        mean = graph.dense(pooled, nodes[f"{name}_mean_w"], nodes[f"{name}_mean_b"])
        log_variance = graph.dense(pooled, nodes[f"{name}_logvar_w"], nodes[f"{name}_logvar_b"])
        posteriors[branch] = GaussianPosterior(graph, mean, clamp_log_variance(graph, log_variance))
    return posteriors


def group_posteriors(cfg: ModelConfig, per_utterance: dict[Branch, GaussianPosterior],
                     batch: Batch) -> dict[Branch, GaussianPosterior]:
    """
    Group-accumulated posterior per branch, one row per group.

    With speaker_residual the speaker means are taken relative to the other
    speakers of the same accent, so a speaker alone in its accent gets a zero mean.
    """
    grouped = {b: accumulate_by_group(per_utterance[b], batch.groups[b]) for b in BRANCHES}
    if cfg.speaker_residual:
        speaker = grouped[Branch.SPEAKER]
        graph = speaker.graph
        centred = graph.matmul(graph.constant(batch.accent_centring_matrix()), speaker.mean)
        grouped[Branch.SPEAKER] = GaussianPosterior(graph, centred, speaker.log_variance)
    return grouped


def decode(graph: Graph, nodes: dict[str, int], speaker: int, accent: int) -> int:
    """One output row of width F per row of the speaker/accent latents."""
    hidden = graph.concat([speaker, accent])
    hidden = graph.tanh(graph.dense(hidden, nodes["dec_w1"], nodes["dec_b1"]))
    hidden = graph.tanh(graph.dense(hidden, nodes["dec_w2"], nodes["dec_b2"]))
    return graph.dense(hidden, nodes["dec_w3"], nodes["dec_b3"])


def forward(model: DartModel, graph: Graph, nodes: dict[str, int], batch: Batch,
            training: bool, rng: np.random.Generator | None = None,
            count_usage: bool = True) -> ForwardOutput:
    cfg = model.config
    if batch.frames.shape[1] != cfg.feature_dim:
        raise DimensionError(f"batch feature_dim {batch.frames.shape[1]} differs from model {cfg.feature_dim}")
    if training and rng is None:
        raise ContractViolation("training forward pass needs a noise generator")

    posteriors = encode(graph, nodes, batch)
    grouped = group_posteriors(cfg, posteriors, batch)
    latents, quantization, decoder_inputs = {}, {}, {}
    for branch in BRANCHES:
        groups = batch.groups[branch]
        if training:
            sample = reparameterize(grouped[branch], rng.standard_normal(graph.shape(grouped[branch].mean)))
        else:
            sample = grouped[branch].mean
        latents[branch] = graph.gather_rows(sample, groups.position_of())
        if cfg.use_vq:
            quantization[branch] = quantize(graph, latents[branch], model.codebooks[branch],
                                            nodes[codebook_parameter(branch)], count_usage=count_usage)
            decoder_inputs[branch] = quantization[branch].quantized
        else:
            quantization[branch] = None
            decoder_inputs[branch] = latents[branch]

    rows = decode(graph, nodes, decoder_inputs[Branch.SPEAKER], decoder_inputs[Branch.ACCENT])
    reconstruction = graph.gather_rows(rows, batch.frame_owner)
    return ForwardOutput(graph, reconstruction, posteriors, grouped, latents, quantization, batch)


def reconstruction_loss(graph: Graph, xhat: int, x: int) -> int:
    """Frobenius norm of xhat - x divided by its element count."""
    if graph.shape(xhat) != graph.shape(x):
        raise DimensionError(f"reconstruction shape {graph.shape(xhat)} differs from target {graph.shape(x)}")
    count = float(np.prod(graph.shape(x)))
    return graph.scale(graph.sqrt(graph.sum(graph.square(graph.subtract(xhat, x)))), 1.0 / count)


def batch_reconstruction_loss(graph: Graph, fwd: ForwardOutput) -> int:
    """reconstruction_loss of every utterance in the batch, averaged."""
    batch = fwd.batch
    target = graph.constant(batch.frames)
    squared = graph.sum(graph.square(graph.subtract(fwd.reconstruction, target)), axis=1)
    per_utterance = graph.sqrt(graph.matmul(graph.constant(batch.sum_matrix()), squared))
    element_counts = batch.frame_counts[:, None] * batch.frames.shape[1]
    normalized = graph.multiply(per_utterance, graph.constant(1.0 / element_counts))
    return graph.scale(graph.sum(normalized), 1.0 / batch.size)


def total_loss(graph: Graph, fwd: ForwardOutput, beta: float) -> LossNodes:
    batch_size = fwd.batch.size
    recon = batch_reconstruction_loss(graph, fwd)
    kl = graph.add(batch_kl(fwd.grouped[Branch.SPEAKER], batch_size),
                   batch_kl(fwd.grouped[Branch.ACCENT], batch_size))
    results = [fwd.quantization[b] for b in BRANCHES]
    if all(r is not None for r in results):
        commitment = graph.scale(graph.add(*[commitment_loss(r) for r in results]), 1.0 / batch_size)
        codebook = graph.scale(graph.add(*[codebook_loss(r) for r in results]), 1.0 / batch_size)
    else:
        commitment = graph.constant(np.zeros(1))
        codebook = graph.constant(np.zeros(1))
    total = graph.add(graph.add(graph.add(recon, graph.scale(kl, beta)), commitment), codebook)
    return LossNodes(recon, kl, commitment, codebook, total)


def loss_for_batch(model: DartModel, graph: Graph, nodes: dict[str, int], batch: Batch,
                   training: bool, rng: np.random.Generator | None = None,
                   count_usage: bool = True) -> tuple[ForwardOutput, LossNodes]:
    fwd = forward(model, graph, nodes, batch, training, rng, count_usage)
    return fwd, total_loss(graph, fwd, model.config.beta)
