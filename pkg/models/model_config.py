from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ValidationError


def read_config_file(path: Path) -> dict[str, Any]:
    """Read a YAML or JSON config file into a mapping; an empty file is an empty mapping."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file does not exist: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            loaded = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path.name} is not valid YAML/JSON: {exc}") from None
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ValidationError(f"{path.name} must contain a mapping at the top level")
    return loaded


def check_known_keys(cls, values: dict[str, Any], source: str) -> None:
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ValidationError(f"{source} has unknown key(s): {', '.join(unknown)}", unknown)


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int | None = None
    hidden_dim: int = 256
    latent_dim: int = 8
    codebook_sizes: tuple[int, int] = (512, 512)
    beta: float = 1e-4
    learning_rate: float = 1e-3
    warmup_steps: int = 200
    anneal_steps: tuple[int, ...] = (1000, 1333, 1667)
    total_steps: int = 2000
    batch_size: int = 16
    seed: int = 42
    use_vq: bool = True
    speaker_residual: bool = True
    init_checkpoint: str | None = None
    freeze_decoder: bool = False
    log_every: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "codebook_sizes", tuple(self.codebook_sizes))
        object.__setattr__(self, "anneal_steps", tuple(self.anneal_steps))

    @classmethod
    def from_mapping(cls, values: dict[str, Any], source: str = "model config") -> "ModelConfig":
        check_known_keys(cls, values, source)
        try:
            return cls(**values)
        except TypeError as exc:
            raise ValidationError(f"{source} has a malformed value: {exc}") from None

    @classmethod
    def from_file(cls, path: Path) -> "ModelConfig":
        return cls.from_mapping(read_config_file(path), Path(path).name)

    def to_dict(self) -> dict[str, Any]:
        values = asdict(self)
        values["codebook_sizes"] = list(self.codebook_sizes)
        values["anneal_steps"] = list(self.anneal_steps)
        return values

    def with_overrides(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def violations(self) -> list[str]:
        bad = []

        def positive_int(name: str, value) -> None:
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                bad.append(name)

        if self.feature_dim is None:
            bad.append("feature_dim")
        else:
            positive_int("feature_dim", self.feature_dim)
        positive_int("hidden_dim", self.hidden_dim)
        positive_int("latent_dim", self.latent_dim)
        positive_int("total_steps", self.total_steps)
        positive_int("batch_size", self.batch_size)
        positive_int("log_every", self.log_every)
        if len(self.codebook_sizes) != 2 or any(
                not isinstance(s, int) or isinstance(s, bool) or s < 1 for s in self.codebook_sizes):
            bad.append("codebook_sizes")
        if not isinstance(self.beta, (int, float)) or self.beta < 0:
            bad.append("beta")
        if not isinstance(self.learning_rate, (int, float)) or self.learning_rate <= 0:
            bad.append("learning_rate")
        if (not isinstance(self.warmup_steps, int) or self.warmup_steps < 0
                or (isinstance(self.total_steps, int) and self.warmup_steps >= self.total_steps)):
            bad.append("warmup_steps")
        steps = self.anneal_steps
        if any(not isinstance(s, int) for s in steps) or any(b <= a for a, b in zip(steps, steps[1:])):
            bad.append("anneal_steps")
        if not isinstance(self.seed, int):
            bad.append("seed")
        if self.freeze_decoder and not self.init_checkpoint:
            bad.append("freeze_decoder")
        return bad

    def validate(self) -> None:
        """Raise ValidationError naming every violated field."""
        bad = self.violations()
        if bad:
            raise ValidationError(f"invalid model config: {', '.join(bad)}", bad)
