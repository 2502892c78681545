"""Goodness-of-fit statistics: R-squared, pooled R-squared, level summaries.

Sums of squares are accumulated with `math.fsum` (correctly rounded), so
results are independent of accumulation order and reproduce a
definitional re-implementation bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataValidationError, UndefinedVarianceError

#: How the "avg ± std" summaries are computed; recorded in report metadata.
STD_KIND = "population"


@dataclass(frozen=True)
class EvalPairs:
    """Aligned (predicted, observed) arrays, optionally labeled."""

    predicted: tuple[float, ...]
    observed: tuple[float, ...]
    group_label: str | None = None

    def __post_init__(self) -> None:
        if len(self.predicted) != len(self.observed):
            raise DataValidationError(
                f"predicted and observed lengths differ: "
                f"{len(self.predicted)} vs {len(self.observed)}"
            )
        if len(self.predicted) < 1:
            raise DataValidationError("EvalPairs requires at least one pair")
        for name, values in (("predicted", self.predicted), ("observed", self.observed)):
            if any(not math.isfinite(v) for v in values):
                raise DataValidationError(f"{name} contains a non-finite value")

    @classmethod
    def of(cls, predicted, observed, group_label: str | None = None) -> "EvalPairs":
        return cls(
            tuple(float(v) for v in np.asarray(predicted).ravel()),
            tuple(float(v) for v in np.asarray(observed).ravel()),
            group_label,
        )

    def __len__(self) -> int:
        return len(self.predicted)


def r_squared(pairs: EvalPairs) -> float:
    """Coefficient of determination, 1 - SS_res/SS_tot.

    SS_tot is taken about the mean of the observed values. The result
    may be negative (a fit worse than the mean predictor).

    Raises:
        DataValidationError: fewer than two pairs.
        UndefinedVarianceError: all observed values identical (SS_tot = 0).
    """
    if len(pairs) < 2:
        raise DataValidationError("r_squared requires at least two pairs")
    obs = pairs.observed
    pred = pairs.predicted
    mean_obs = math.fsum(obs) / len(obs)
    ss_tot = math.fsum((o - mean_obs) ** 2 for o in obs)
    if ss_tot == 0.0:
        raise UndefinedVarianceError(
            "all observed values are identical; R-squared is undefined"
        )
    ss_res = math.fsum((p - o) ** 2 for p, o in zip(pred, obs))
    return 1.0 - ss_res / ss_tot


def pooled_r_squared(groups: Sequence[EvalPairs]) -> float:
    """R-squared of the single concatenation of all groups.

    One global mean is used, which is strictly stricter than averaging
    per-group scores: systematic offsets between groups count against
    the fit.

    Raises:
        DataValidationError: no groups, or concatenated length < 2.
        UndefinedVarianceError: concatenated observations all identical.
    """
    if len(groups) == 0:
        raise DataValidationError("pooled_r_squared requires at least one group")
    predicted: list[float] = []
    observed: list[float] = []
    for g in groups:
        predicted.extend(g.predicted)
        observed.extend(g.observed)
    return r_squared(EvalPairs(tuple(predicted), tuple(observed)))


def summarize_levels(scores: Sequence[tuple[object, float]]) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation of per-level scores.

    Args:
        scores: Nonempty (level, score) pairs; levels are carried only
            for caller bookkeeping.

    Returns:
        (mean, std) over exactly the provided scores.
    """
    if len(scores) == 0:
        raise DataValidationError("summarize_levels requires at least one score")
    values = [float(s) for _, s in scores]
    mean = math.fsum(values) / len(values)
    variance = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(variance)
