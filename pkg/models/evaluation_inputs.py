"""
Inputs of the listening-test and objective metrics, with their file loaders.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DatasetParseError, SchemaError, ValidationError


@dataclass(eq=False)
class F0Track:
    """Per-frame fundamental frequency in Hz; 0 marks an unvoiced frame."""

    f0_hz: np.ndarray

    def __post_init__(self) -> None:
        self.f0_hz = np.asarray(self.f0_hz, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.f0_hz)) or np.any(self.f0_hz < 0):
            raise ValidationError("F0 values must be finite and non-negative", ["f0_hz"])

    @property
    def frames(self) -> int:
        return self.f0_hz.size

    @property
    def voiced(self) -> np.ndarray:
        return self.f0_hz > 0


@dataclass(frozen=True)
class BWSTrial:
    shown: tuple[str, ...]
    best: str
    worst: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "shown", tuple(self.shown))
        if len(set(self.shown)) < 2:
            raise ValidationError(f"a trial must show at least 2 distinct items, got {list(self.shown)}", ["shown"])
        if self.best == self.worst:
            raise ValidationError(f"best and worst are both {self.best!r}", ["best", "worst"])
        for role in ("best", "worst"):
            if getattr(self, role) not in self.shown:
                raise ValidationError(f"{role} item {getattr(self, role)!r} was not shown in the trial", [role])


def load_f0_csv(path: Path) -> F0Track:
    """Two-column CSV `frame_index,f0_hz`, ordered by frame_index."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    df = pd.read_csv(path)
    df.columns = df.columns.str.strip().str.lower()
    missing = [c for c in ("frame_index", "f0_hz") if c not in df.columns]
    if missing:
        raise SchemaError(f"{path.name} is missing column(s) {', '.join(missing)}", missing)
    df = df.sort_values("frame_index", kind="stable")
    return F0Track(df["f0_hz"].to_numpy(dtype=np.float64))


def load_bws_trials(path: Path) -> list[BWSTrial]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    trials = []
    with path.open("r", encoding="utf-8") as f:
        for line_number, text in enumerate(f, start=1):
            if not text.strip():
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(f"malformed JSON ({exc.msg})", line_number) from None
            missing = [k for k in ("shown", "best", "worst") if k not in record]
            if missing:
                raise SchemaError(f"line {line_number}: missing field(s) {', '.join(missing)}", missing)
            try:
                trials.append(BWSTrial(tuple(str(s) for s in record["shown"]),
                                       str(record["best"]), str(record["worst"])))
            except ValidationError as exc:
                raise ValidationError(f"line {line_number}: {exc}", exc.fields) from None
    return trials


def load_ratings(path: Path) -> list[float]:
    """One number per line; blank lines are skipped."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    ratings = []
    with path.open("r", encoding="utf-8") as f:
        for line_number, text in enumerate(f, start=1):
            if not text.strip():
                continue
            try:
                ratings.append(float(text))
            except ValueError:
                raise DatasetParseError(f"not a number: {text.strip()!r}", line_number) from None
    return ratings


def load_transcript(path: Path) -> list[list[str]]:
    """Whitespace-tokenized lines of a transcript file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open("r", encoding="utf-8") as f:
        return [line.split() for line in f.read().splitlines()]
