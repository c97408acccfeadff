from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DatasetParseError, SchemaError, UnknownLabelError, ValidationError

REQUIRED_FIELDS = ("utterance_id", "speaker_id", "accent_id", "features")


@dataclass(eq=False)
class Utterance:
    utterance_id: str
    speaker_id: str
    accent_id: str
    features: np.ndarray

    def __post_init__(self) -> None:
        for name in ("utterance_id", "speaker_id", "accent_id"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ValidationError(f"{name} must be a non-empty string, got {value!r}", [name])
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2 or min(features.shape) < 1:
            raise ValidationError(
                f"{self.utterance_id}: features must be a non-empty T x F matrix, got shape {features.shape}",
                ["features"])
        if not np.all(np.isfinite(features)):
            raise ValidationError(f"{self.utterance_id}: features contain non-finite values", ["features"])
        self.features = features

    @property
    def frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Utterance):
            return NotImplemented
        return (self.utterance_id == other.utterance_id
                and self.speaker_id == other.speaker_id
                and self.accent_id == other.accent_id
                and np.array_equal(self.features, other.features))


@dataclass
class Dataset:
    utterances: list[Utterance] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        dims = {u.feature_dim for u in self.utterances}
        if len(dims) > 1:
            raise ValidationError(f"utterances disagree on feature_dim: {sorted(dims)}", ["features"])
        for u in self.utterances:
            if u.utterance_id in seen:
                raise ValidationError(f"duplicate utterance_id {u.utterance_id}", ["utterance_id"])
            seen.add(u.utterance_id)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    @property
    def feature_dim(self) -> int | None:
        return self.utterances[0].feature_dim if self.utterances else None

    def ids(self) -> list[str]:
        return [u.utterance_id for u in self.utterances]

    def speakers(self) -> list[str]:
        return sorted({u.speaker_id for u in self.utterances})

    def accents(self) -> list[str]:
        return sorted({u.accent_id for u in self.utterances})

    def get(self, utterance_id: str) -> Utterance:
        for u in self.utterances:
            if u.utterance_id == utterance_id:
                return u
        raise UnknownLabelError(f"utterance {utterance_id!r} is not in the dataset")

    def sorted_by_id(self) -> "Dataset":
        return Dataset(sorted(self.utterances, key=lambda u: u.utterance_id))

    def subset(self, utterance_ids: Iterable[str]) -> "Dataset":
        wanted = set(utterance_ids)
        return Dataset([u for u in self.utterances if u.utterance_id in wanted])

    def with_utterance(self, utterance: Utterance) -> "Dataset":
        """This dataset plus `utterance` when its id is not already present."""
        if utterance.utterance_id in set(self.ids()):
            return self
        return Dataset(self.utterances + [utterance])


def _parse_line(text: str, line_number: int) -> Utterance:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(f"malformed JSON ({exc.msg})", line_number) from None
    if not isinstance(record, dict):
        raise DatasetParseError("expected a JSON object", line_number)
    missing = [name for name in REQUIRED_FIELDS if name not in record]
    if missing:
        raise SchemaError(f"line {line_number}: missing field(s) {', '.join(missing)}", missing)
    rows = record["features"]
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise DatasetParseError("features must be a non-empty array of arrays", line_number)
    if len({len(r) for r in rows}) != 1:
        raise DatasetParseError("feature rows have unequal lengths", line_number)
    try:
        return Utterance(record["utterance_id"], record["speaker_id"], record["accent_id"], rows)
    except (ValidationError, ValueError, TypeError) as exc:
        raise DatasetParseError(str(exc), line_number) from None


def load_dataset(path: Path) -> Dataset:
    """Load a JSON-lines dataset; blank lines are ignored and an empty file is an empty dataset."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)

    utterances: list[Utterance] = []
    first_line = None
    seen: dict[str, int] = {}
    with path.open("r", encoding="utf-8") as f:
        for line_number, text in enumerate(f, start=1):
            if not text.strip():
                continue
            utterance = _parse_line(text, line_number)
            if first_line is None:
                first_line = (line_number, utterance.feature_dim)
            elif utterance.feature_dim != first_line[1]:
                raise ValidationError(
                    f"line {line_number} has feature_dim {utterance.feature_dim} but "
                    f"line {first_line[0]} has feature_dim {first_line[1]}", ["features"])
            if utterance.utterance_id in seen:
                raise ValidationError(
                    f"line {line_number} repeats utterance_id {utterance.utterance_id} "
                    f"from line {seen[utterance.utterance_id]}", ["utterance_id"])
            seen[utterance.utterance_id] = line_number
            utterances.append(utterance)
    return Dataset(utterances)


def save_dataset(data: Dataset, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for u in data:
            record = {
                "utterance_id": u.utterance_id,
                "speaker_id": u.speaker_id,
                "accent_id": u.accent_id,
                "features": u.features.tolist(),
            }
            f.write(json.dumps(record) + "\n")
