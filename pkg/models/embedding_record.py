from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .branch import Branch, EmbeddingKind
from .errors import SchemaError, ValidationError

ID_COLUMNS = ["utterance_id", "speaker_id", "accent_id", "branch", "kind"]


@dataclass(eq=False)
class EmbeddingRecord:
    """One embedding vector of one utterance, tagged with its branch and kind."""

    utterance_id: str
    speaker_id: str
    accent_id: str
    branch: Branch
    kind: EmbeddingKind
    vector: np.ndarray

    def __post_init__(self) -> None:
        self.branch = Branch(self.branch)
        self.kind = EmbeddingKind(self.kind)
        self.vector = np.asarray(self.vector, dtype=np.float64).reshape(-1)

    def label(self, by: Branch) -> str:
        return self.speaker_id if Branch(by) is Branch.SPEAKER else self.accent_id


def select_records(records: list[EmbeddingRecord], branch: Branch,
                   kind: EmbeddingKind) -> list[EmbeddingRecord]:
    branch, kind = Branch(branch), EmbeddingKind(kind)
    return [r for r in records if r.branch is branch and r.kind is kind]


def save_embeddings_csv(records: list[EmbeddingRecord], path: Path) -> None:
    """Write records with columns utterance_id, speaker_id, accent_id, branch, kind, v0..v{D-1}."""
    if not records:
        raise ValidationError("no embedding records to write")
    width = records[0].vector.size
    rows = []
    for r in records:
        if r.vector.size != width:
            raise ValidationError(f"{r.utterance_id} has a {r.vector.size}-wide vector, expected {width}")
        rows.append([r.utterance_id, r.speaker_id, r.accent_id, r.branch.value, r.kind.value, *r.vector])
    df = pd.DataFrame(rows, columns=ID_COLUMNS + [f"v{i}" for i in range(width)])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")


def load_embeddings_csv(path: Path) -> list[EmbeddingRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    df = pd.read_csv(path, dtype={c: str for c in ID_COLUMNS}, float_precision="round_trip")
    missing = [c for c in ID_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"{path.name} is missing column(s) {', '.join(missing)}", missing)
    value_columns = [c for c in df.columns if c.startswith("v") and c[1:].isdigit()]
    if not value_columns:
        raise SchemaError(f"{path.name} has no v0.. value columns", ["v0"])
    value_columns.sort(key=lambda c: int(c[1:]))
    try:
        vectors = df[value_columns].to_numpy(dtype=np.float64)
        return [
            EmbeddingRecord(row.utterance_id, row.speaker_id, row.accent_id, row.branch, row.kind, vectors[i])
            for i, row in enumerate(df[ID_COLUMNS].itertuples(index=False))
        ]
    except ValueError as exc:
        raise ValidationError(f"{path.name}: {exc}") from None
