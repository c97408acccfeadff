"""
Self-describing checkpoint file.

Layout: one JSON header line (format tag, version, config, codebook usage,
parameter manifest), then for every parameter a JSON line {"name", "shape"}
followed by its values as little-endian float64 bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from models.errors import ValidationError
from models.model_config import ModelConfig
from services.dart_model import BRANCHES, DartModel, build_model

FORMAT_TAG = "dart-checkpoint"
FORMAT_VERSION = 1
VALUE_DTYPE = np.dtype("<f8")


def save_checkpoint(model: DartModel, path: Path) -> None:
    params = model.parameters()
    header = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "usage_counts": {b.value: model.codebooks[b].usage_counts.tolist() for b in BRANCHES},
        "parameters": [{"name": name, "shape": list(values.shape)} for name, values in params.items()],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name, values in params.items():
            block = {"name": name, "shape": list(values.shape)}
            f.write(json.dumps(block).encode("utf-8") + b"\n")
            f.write(np.ascontiguousarray(values, dtype=VALUE_DTYPE).tobytes())


def _read_json_line(f, path: Path, what: str) -> dict:
    line = f.readline()
    if not line:
        raise ValidationError(f"{path.name} ends before the {what}")
    try:
        return json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ValidationError(f"{path.name} has a corrupt {what}") from None


def load_checkpoint(path: Path) -> DartModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint does not exist: {path}")
    with open(path, "rb") as f:
        header = _read_json_line(f, path, "header")
        if header.get("format") != FORMAT_TAG or header.get("version") != FORMAT_VERSION:
            raise ValidationError(f"{path.name} is not a version {FORMAT_VERSION} {FORMAT_TAG} file")
        model = build_model(ModelConfig.from_mapping(header["config"], f"{path.name} config"))
        for expected in header["parameters"]:
            block = _read_json_line(f, path, f"block header of {expected['name']}")
            if block != expected:
                raise ValidationError(f"{path.name}: block {block} does not match manifest entry {expected}")
            count = int(np.prod(block["shape"]))
            raw = f.read(count * VALUE_DTYPE.itemsize)
            if len(raw) != count * VALUE_DTYPE.itemsize:
                raise ValidationError(f"{path.name} is truncated inside {block['name']}")
            values = np.frombuffer(raw, dtype=VALUE_DTYPE).astype(np.float64).reshape(block["shape"])
            model.set_parameter(block["name"], values)
    for branch in BRANCHES:
        model.codebooks[branch].usage_counts = np.asarray(header["usage_counts"][branch.value], dtype=np.int64)
    return model
