"""
Aggregation of subjective listening-test results: MOS with a Student-t 95%
interval, and best-worst scaling counts.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats

from models.errors import InsufficientDataError, ValidationError
from models.evaluation_inputs import BWSTrial


@dataclass(frozen=True)
class MosSummary:
    mean: float
    ci95_halfwidth: float
    count: int

    def as_dict(self) -> dict[str, float]:
        return {"mean": self.mean, "ci95": self.ci95_halfwidth, "n": self.count}


def mos_summary(ratings: Sequence[float]) -> MosSummary:
    values = np.asarray(ratings, dtype=np.float64)
    if values.size < 2:
        raise InsufficientDataError(f"MOS needs at least 2 ratings, got {values.size}")
    halfwidth = stats.t.ppf(0.975, values.size - 1) * stats.sem(values)
    return MosSummary(float(values.mean()), float(halfwidth), int(values.size))


def bws_counts(trials: Sequence[BWSTrial]) -> pd.DataFrame:
    """Per-item counts of being shown, picked best and picked worst, sorted by item."""
    shown, best, worst = Counter(), Counter(), Counter()
    for trial in trials:
        if trial.best not in trial.shown or trial.worst not in trial.shown:
            raise ValidationError(f"trial best/worst not among shown items {list(trial.shown)}")
        shown.update(set(trial.shown))
        best[trial.best] += 1
        worst[trial.worst] += 1
    items = sorted(shown)
    return pd.DataFrame({
        "item": items,
        "shown": [shown[i] for i in items],
        "best": [best[i] for i in items],
        "worst": [worst[i] for i in items],
    })


def bws_table(trials: Sequence[BWSTrial]) -> pd.DataFrame:
    """Counts plus score = (best - worst) / shown and best_share = best / shown."""
    table = bws_counts(trials)
    table["score"] = (table["best"] - table["worst"]) / table["shown"]
    table["best_share"] = table["best"] / table["shown"]
    return table


def bws_scores(trials: Sequence[BWSTrial]) -> dict[str, float]:
    table = bws_table(trials)
    return {item: float(score) for item, score in zip(table["item"], table["score"])}
