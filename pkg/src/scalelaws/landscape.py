"""Dense (N, D) evaluation of fitted laws and loss-basin analysis.

A loss grid evaluates a law on a log- or linear-spaced lattice over a
rectangle of raw (N, D) values, recording non-evaluable cells as
explicit error markers rather than NaNs. Basin detection asks whether
the lattice minimum sits strictly inside the rectangle, and classifies
each axis as decreasing, increasing, or U-shaped by majority over the
per-slice shapes. A 1-D variant scans one axis and refines the best
cell with a golden-section search.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import IDENTITY_NORMALIZATION, Normalization
from .errors import DataValidationError, LawDomainError
from .fitter import FitResult
from .laws import SHANNON_FAMILY, LawSpec, ParamVector, evaluate_raw

SPACINGS = ("log", "linear")

DECREASING = "decreasing"
INCREASING = "increasing"
U_SHAPED = "u_shaped"
MIXED = "mixed"

_GOLDEN_TOL = 1e-12
_GOLDEN_MAX_ITERS = 200


@dataclass(frozen=True)
class GridSpec:
    """A rectangular lattice over raw (N, D) values."""

    n_min: float
    n_max: float
    d_min: float
    d_max: float
    n_steps: int
    d_steps: int
    spacing: str = "log"

    def __post_init__(self) -> None:
        for name, lo, hi in (("n", self.n_min, self.n_max), ("d", self.d_min, self.d_max)):
            if not (math.isfinite(lo) and lo > 0):
                raise DataValidationError(f"{name}_min must be a positive real, got {lo}")
            if not (math.isfinite(hi) and hi > lo):
                raise DataValidationError(f"{name}_max must exceed {name}_min, got {hi}")
        if self.n_steps < 2 or self.d_steps < 2:
            raise DataValidationError("n_steps and d_steps must be >= 2")
        if self.spacing not in SPACINGS:
            raise DataValidationError(f"spacing must be one of {SPACINGS}, got {self.spacing!r}")

    def n_axis(self) -> np.ndarray:
        return _axis(self.n_min, self.n_max, self.n_steps, self.spacing)

    def d_axis(self) -> np.ndarray:
        return _axis(self.d_min, self.d_max, self.d_steps, self.spacing)

    def to_dict(self) -> dict:
        return {
            "n_min": self.n_min, "n_max": self.n_max,
            "d_min": self.d_min, "d_max": self.d_max,
            "n_steps": self.n_steps, "d_steps": self.d_steps,
            "spacing": self.spacing,
        }


def _axis(lo: float, hi: float, steps: int, spacing: str) -> np.ndarray:
    if spacing == "log":
        return np.geomspace(lo, hi, steps)
    return np.linspace(lo, hi, steps)


@dataclass(frozen=True)
class LossGrid:
    """Law evaluations over a lattice; error cells carried as a mask.

    `values` has shape [n_steps, d_steps], row index over N, column
    index over D. Masked entries hold 0.0 and must be ignored.
    """

    spec: GridSpec
    law_id: str
    params: ParamVector
    normalization: Normalization
    x: float | None
    n_values: np.ndarray
    d_values: np.ndarray
    values: np.ndarray
    error_mask: np.ndarray

    def value_at(self, i: int, j: int) -> float | None:
        return None if self.error_mask[i, j] else float(self.values[i, j])

    def n_evaluable(self) -> int:
        return int((~self.error_mask).sum())

    def to_csv(self, destination) -> None:
        """Write n,d,loss rows (row-major over N then D); error cells
        emit an empty loss field."""
        if isinstance(destination, (str, Path)):
            with open(destination, "w", newline="", encoding="utf-8") as fh:
                self.to_csv(fh)
            return
        writer = csv.writer(destination)
        writer.writerow(["n", "d", "loss"])
        for i, n in enumerate(self.n_values):
            for j, d in enumerate(self.d_values):
                loss = "" if self.error_mask[i, j] else repr(float(self.values[i, j]))
                writer.writerow([repr(float(n)), repr(float(d)), loss])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def grid_eval(
    law: LawSpec,
    params: ParamVector,
    spec: GridSpec,
    x: float | None = None,
    normalization: Normalization = IDENTITY_NORMALIZATION,
) -> LossGrid:
    """Evaluate predicted loss at every lattice point.

    Grid bounds are raw units; `normalization` (the one recorded in the
    originating fit) is applied before evaluation. Domain errors are
    recorded per cell, not raised, unless the whole grid is
    non-evaluable.
    """
    if params.law_id != law.law_id:
        raise LawDomainError(f"parameter vector is for {params.law_id}, law is {law.law_id}")
    if law.needs_x:
        if x is None:
            raise LawDomainError(f"law {law.law_id} requires x")
        if not math.isfinite(x):
            raise LawDomainError("x must be finite")
        if law.law_id in ("qid", "shannon_extended") and x <= 0:
            raise LawDomainError(f"law {law.law_id} requires x > 0")
    elif x is not None:
        raise LawDomainError(f"law {law.law_id} takes no x")

    n_axis = spec.n_axis()
    d_axis = spec.d_axis()
    n_grid = (n_axis / normalization.n_scale)[:, None]
    d_grid = (d_axis / normalization.d_scale)[None, :]
    values = evaluate_raw(law, params.values, n_grid, d_grid, x)
    values = np.broadcast_to(values, (spec.n_steps, spec.d_steps)).astype(float).copy()
    mask = ~np.isfinite(values) | (values <= 0)
    if mask.all():
        raise LawDomainError(f"{law.law_id}: entirely non-evaluable grid")
    values[mask] = 0.0
    return LossGrid(
        spec=spec,
        law_id=law.law_id,
        params=params,
        normalization=normalization,
        x=x,
        n_values=n_axis,
        d_values=d_axis,
        values=values,
        error_mask=mask,
    )


@dataclass(frozen=True)
class BasinReport:
    """Interior-minimum analysis of a loss grid.

    `argmin` is in raw (n, d) units. Axis verdicts are majority classes
    over fixed-other-axis slices; exact count ties break toward
    "u_shaped", then "decreasing". Slices with error cells classify on
    their longest evaluable run and are counted in partial_slices.
    """

    has_interior_minimum: bool
    argmin: tuple[float, float]
    min_value: float
    boundary_min: bool
    monotonic_n: str
    monotonic_d: str
    partial_slices: int = 0

    def to_dict(self) -> dict:
        return {
            "has_interior_minimum": self.has_interior_minimum,
            "argmin": {"n": self.argmin[0], "d": self.argmin[1]},
            "min_value": self.min_value,
            "boundary_min": self.boundary_min,
            "monotonic_n": self.monotonic_n,
            "monotonic_d": self.monotonic_d,
            "partial_slices": self.partial_slices,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def _longest_run(valid: np.ndarray) -> tuple[int, int]:
    """(start, stop) of the longest contiguous True run; earliest wins ties."""
    best = (0, 0)
    start = None
    for i, flag in enumerate(list(valid) + [False]):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            if i - start > best[1] - best[0]:
                best = (start, i)
            start = None
    return best


def classify_slice(values: np.ndarray, valid: np.ndarray | None = None) -> tuple[str, bool]:
    """Shape of a 1-D slice: strict decrease, strict increase, strict
    decrease-then-increase (u_shaped), or "mixed".

    Returns:
        (classification, partial) where partial flags that error cells
        forced classification onto a contiguous sub-run.
    """
    values = np.asarray(values, dtype=float)
    if valid is None:
        valid = np.ones(values.shape, dtype=bool)
    partial = not valid.all()
    start, stop = (0, len(values)) if not partial else _longest_run(valid)
    segment = values[start:stop]
    if len(segment) < 2:
        return MIXED, partial
    diffs = np.diff(segment)
    neg = diffs < 0
    pos = diffs > 0
    if neg.all():
        return DECREASING, partial
    if pos.all():
        return INCREASING, partial
    if (neg | pos).all() and neg.any() and pos.any():
        turn = int(np.argmax(pos))
        if neg[:turn].all() and pos[turn:].all():
            return U_SHAPED, partial
    return MIXED, partial


def _majority(classes: list[str]) -> str:
    counts = {DECREASING: 0, U_SHAPED: 0, INCREASING: 0}
    for c in classes:
        if c in counts:
            counts[c] += 1
    top = max(counts.values())
    leaders = [c for c in (U_SHAPED, DECREASING, INCREASING) if counts[c] == top]
    return leaders[0]


def detect_basin(grid: LossGrid) -> BasinReport:
    """Locate the lattice minimum and classify monotonicity per axis.

    The basin verdict is conservative: the minimum counts as interior
    only when every cell tied for the minimum lies strictly inside the
    lattice.

    Raises:
        DataValidationError: fewer than 3 samples on either axis.
        LawDomainError: no evaluable cells.
    """
    n_steps, d_steps = grid.values.shape
    if n_steps < 3 or d_steps < 3:
        raise DataValidationError(
            "basin detection requires at least 3 samples per axis, got "
            f"{n_steps} x {d_steps}"
        )
    evaluable = ~grid.error_mask
    if not evaluable.any():
        raise LawDomainError("grid has no evaluable cells")

    masked = np.where(evaluable, grid.values, np.inf)
    min_value = float(masked.min())
    tied = np.argwhere(masked == min_value)
    on_boundary = [
        i in (0, n_steps - 1) or j in (0, d_steps - 1) for i, j in tied
    ]
    boundary_min = any(on_boundary)
    first = min(tied.tolist())  # row-major first
    argmin = (float(grid.n_values[first[0]]), float(grid.d_values[first[1]]))

    partial_count = 0
    n_classes = []
    for j in range(d_steps):  # fixed d, vary n
        cls, partial = classify_slice(grid.values[:, j], evaluable[:, j])
        n_classes.append(cls)
        partial_count += int(partial)
    d_classes = []
    for i in range(n_steps):  # fixed n, vary d
        cls, partial = classify_slice(grid.values[i, :], evaluable[i, :])
        d_classes.append(cls)
        partial_count += int(partial)

    return BasinReport(
        has_interior_minimum=not boundary_min,
        argmin=argmin,
        min_value=min_value,
        boundary_min=boundary_min,
        monotonic_n=_majority(n_classes),
        monotonic_d=_majority(d_classes),
        partial_slices=partial_count,
    )


def optimal_along_axis(
    law: LawSpec,
    params: ParamVector,
    fixed_axis: str,
    fixed_value: float,
    search_range: tuple[float, float],
    resolution: int,
    x: float | None = None,
    normalization: Normalization = IDENTITY_NORMALIZATION,
) -> tuple[float, float, str]:
    """Scan the non-fixed axis on a log lattice and refine the best cell.

    Args:
        fixed_axis: "N" holds model size fixed and scans D; "D" holds
            token count fixed and scans N.
        fixed_value: Raw value of the fixed axis.
        search_range: (low, high) raw bounds of the scanned axis.
        resolution: Lattice points, >= 3.

    Returns:
        (arg, value, classification): the refined raw argmin of the
        scanned axis, the loss there (never above the best lattice
        value), and the lattice slice's shape classification.
    """
    fixed_axis = fixed_axis.upper()
    if fixed_axis not in ("N", "D"):
        raise DataValidationError(f"fixed_axis must be 'N' or 'D', got {fixed_axis!r}")
    if resolution < 3:
        raise DataValidationError(f"resolution must be >= 3, got {resolution}")
    lo, hi = search_range
    if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo < hi):
        raise DataValidationError(f"search_range must satisfy 0 < low < high, got {search_range}")
    if not (math.isfinite(fixed_value) and fixed_value > 0):
        raise DataValidationError(f"fixed_value must be positive, got {fixed_value}")

    lattice = np.geomspace(lo, hi, resolution)

    def loss_at(raw: np.ndarray | float) -> np.ndarray:
        if fixed_axis == "N":
            n = fixed_value / normalization.n_scale
            d = np.asarray(raw) / normalization.d_scale
        else:
            n = np.asarray(raw) / normalization.n_scale
            d = fixed_value / normalization.d_scale
        return evaluate_raw(law, params.values, n, d, x)

    values = np.asarray(loss_at(lattice), dtype=float)
    valid = np.isfinite(values) & (values > 0)
    if not valid.any():
        raise LawDomainError(f"{law.law_id}: non-evaluable slice")
    classification, _ = classify_slice(values, valid)

    masked = np.where(valid, values, np.inf)
    best_idx = int(np.argmin(masked))
    best_arg = float(lattice[best_idx])
    best_val = float(masked[best_idx])

    # Golden-section refinement in log space around the best cell.
    left = math.log(lattice[max(best_idx - 1, 0)])
    right = math.log(lattice[min(best_idx + 1, resolution - 1)])
    if right > left:
        inv_phi = (math.sqrt(5.0) - 1.0) / 2.0

        def f(t: float) -> float:
            v = float(np.asarray(loss_at(math.exp(t)), dtype=float))
            return v if math.isfinite(v) and v > 0 else math.inf

        a, b = left, right
        c = b - inv_phi * (b - a)
        d_pt = a + inv_phi * (b - a)
        fc, fd = f(c), f(d_pt)
        for _ in range(_GOLDEN_MAX_ITERS):
            if b - a <= _GOLDEN_TOL * max(1.0, abs(a) + abs(b)):
                break
            if fc < fd:
                b, d_pt, fd = d_pt, c, fc
                c = b - inv_phi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d_pt, fd
                d_pt = a + inv_phi * (b - a)
                fd = f(d_pt)
        for t, ft in ((c, fc), (d_pt, fd)):
            if ft < best_val:
                best_val = ft
                best_arg = math.exp(t)
    return best_arg, best_val, classification


@dataclass(frozen=True)
class ExponentReport:
    """Fitted exponents of a capacity-family law and what they imply.

    Verdicts compare the model-size exponents (bandwidth alpha vs
    interaction-noise gamma) and the token exponents (signal beta vs
    data-noise delta); the dominating noise exponent on an axis
    predicts an eventual U-turn along it.
    """

    alpha: float
    gamma: float
    beta: float
    delta: float
    n_axis_verdict: str
    d_axis_verdict: str

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "gamma": self.gamma,
            "beta": self.beta,
            "delta": self.delta,
            "n_axis_verdict": self.n_axis_verdict,
            "d_axis_verdict": self.d_axis_verdict,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def exponent_report(fit: FitResult) -> ExponentReport:
    """Extract (alpha, gamma, beta, delta) from a capacity-family fit
    and compare them pairwise, with exact equality reported as a tie."""
    if fit.law_id not in SHANNON_FAMILY:
        raise LawDomainError(
            f"exponent_report requires a capacity-family law, got {fit.law_id}"
        )
    values = fit.params.as_dict()
    alpha, beta = values["alpha"], values["beta"]
    gamma, delta = values["gamma"], values["delta"]
    if alpha > gamma:
        n_verdict = "bandwidth_dominates"
    elif gamma > alpha:
        n_verdict = "noise_dominates"
    else:
        n_verdict = "tie"
    if beta > delta:
        d_verdict = "signal_dominates"
    elif delta > beta:
        d_verdict = "noise_dominates"
    else:
        d_verdict = "tie"
    return ExponentReport(
        alpha=alpha, gamma=gamma, beta=beta, delta=delta,
        n_axis_verdict=n_verdict, d_axis_verdict=d_verdict,
    )
