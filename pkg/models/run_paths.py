import json
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

TOOL_VERSION = "0.1.0"


@dataclass
class RunPaths:
    primary: Path

    def manifest_json(self) -> Path:
        """Return path to the run manifest written next to the primary output"""
        return self.primary.with_name(self.primary.name + ".manifest.json")

    def history_csv(self) -> Path:
        """Return path to the per-step loss history of a training run"""
        return self.primary.with_name(self.primary.stem + ".history.csv")


@dataclass
class RunManifest:
    command_line: list[str]
    config: dict[str, Any]
    seed: int
    started_at: str = field(default_factory=lambda: datetime.now().isoformat())
    finished_at: str | None = None
    outputs: list[str] = field(default_factory=list)
    final_loss: dict[str, float] | None = None
    tool_version: str = TOOL_VERSION

    def finish(self, outputs: list[Path]) -> None:
        self.finished_at = datetime.now().isoformat()
        self.outputs = [str(p) for p in outputs]
        missing = [p for p in self.outputs if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"Run outputs were not written: {', '.join(missing)}")


def save_manifest(manifest: RunManifest, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(asdict(manifest), f, indent=2)
        f.write("\n")
