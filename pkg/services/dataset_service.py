"""
Synthetic factorized accent/speaker data and stratified train/validation split.

Each frame is a linear mix of an accent factor, a speaker factor and a
per-frame utterance factor plus isotropic noise, so the true grouping of the
variation is known exactly.
"""
from __future__ import annotations

import numpy as np

from models.dataset import Dataset, Utterance
from models.errors import ContractViolation
from models.synth_spec import SynthSpec


def accent_id(a: int) -> str:
    return f"acc{a:02d}"


def speaker_id(a: int, s: int) -> str:
    return f"{accent_id(a)}_spk{s:02d}"


def utterance_id(a: int, s: int, u: int) -> str:
    return f"{speaker_id(a, s)}_utt{u:03d}"


def synth_factors(spec: SynthSpec) -> dict[str, np.ndarray]:
    """Mixing matrices and accent/speaker factors, drawn first from the synth seed."""
    rng = np.random.default_rng(spec.seed)
    F, k = spec.feature_dim, spec.factor_dim
    mixing = {name: rng.standard_normal((F, k)) for name in ("accent_mixing", "speaker_mixing", "utterance_mixing")}
    accents = rng.standard_normal((spec.n_accents, k))
    speakers = rng.standard_normal((spec.n_accents, spec.speakers_per_accent, k))
    return {**mixing, "accents": accents, "speakers": speakers, "rng": rng}


def synth_dataset(spec: SynthSpec, log_callback=None) -> Dataset:
    def log(msg: str) -> None:
        if log_callback:
            log_callback(msg)

    spec.validate()
    factors = synth_factors(spec)
    rng = factors["rng"]
    W_a, W_s, W_u = factors["accent_mixing"], factors["speaker_mixing"], factors["utterance_mixing"]

    utterances = []
    for a in range(spec.n_accents):
        accent_part = spec.accent_scale * (W_a @ factors["accents"][a])
        for s in range(spec.speakers_per_accent):
            speaker_part = spec.speaker_scale * (W_s @ factors["speakers"][a, s])
            group_mean = accent_part + speaker_part
            for u in range(spec.utterances_per_speaker):
                per_frame = rng.standard_normal((spec.frames, spec.factor_dim))
                noise = rng.standard_normal((spec.frames, spec.feature_dim))
                features = (group_mean[None, :]
                            + spec.utterance_scale * (per_frame @ W_u.T)
                            + spec.noise_scale * noise)
                utterances.append(Utterance(utterance_id(a, s, u), speaker_id(a, s), accent_id(a), features))

    log(f"Generated {len(utterances)} utterances: {spec.n_accents} accents x "
        f"{spec.speakers_per_accent} speakers x {spec.utterances_per_speaker} utterances")
    return Dataset(utterances)


def split(data: Dataset, holdout_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """
    Stratified split by (speaker_id, accent_id).

    Each stratum sends floor(fraction * count) utterances, chosen by a seeded
    shuffle of its id-sorted members, to validation.
    """
    if not 0 <= holdout_fraction < 1:
        raise ContractViolation(f"holdout fraction must be in [0, 1), got {holdout_fraction}")
    rng = np.random.default_rng(seed)
    strata: dict[tuple[str, str], list[Utterance]] = {}
    for u in data.sorted_by_id():
        strata.setdefault((u.speaker_id, u.accent_id), []).append(u)

    held_out: set[str] = set()
    for key in sorted(strata):
        members = strata[key]
        count = int(np.floor(holdout_fraction * len(members)))
        order = rng.permutation(len(members))
        held_out.update(members[i].utterance_id for i in order[:count])

    train = Dataset([u for u in data if u.utterance_id not in held_out])
    validation = Dataset([u for u in data if u.utterance_id in held_out])
    return train, validation
