"""Registry and evaluation of the supported scaling-law forms.

Every law maps (N, D) — model size and token count, both already
normalized — and optionally a perturbation scalar X, to a positive
predicted test loss. All parameters are positive fitted constants.

Capacity-style laws model an effective information capacity

    C = a * N^alpha * log2(1 + SNR)

with a signal-to-noise ratio built from a signal term growing in D and a
noise denominator combining a D-N interaction term, a data-noise term,
and an irreducible floor; the predicted loss is the reciprocal 1/C:

    shannon_full          SNR = b*D^beta / (c*(D*N)^gamma + d*D^delta + e)
    shannon_simplified    SNR =   D^beta / (c*(D*N)^gamma +   D^delta)
    shannon_extended      SNR numerator additionally scaled by X
    shannon_sizeonly_ablation   interaction term c*N^gamma (no D coupling)

Power-law baselines return the loss directly:

    openai        [(a/N)^(alpha/beta) + b/D]^beta
    chinchilla    a/N^alpha + b/D^beta + c
    qid           chinchilla + d * N^alpha' * D^beta' * X^(-gamma)
    precision     chinchilla + d * (D^beta'/N^alpha') * exp(-X/gamma)
    symmetric     a*N^alpha/D^beta + b*D^beta/N^alpha + c
    asymmetric    a*N^alpha/D^beta + b*D^beta'/N^alpha' + c

The X-aware laws carry an orientation switch. "mitigating" is the form
shown above: a larger X (e.g. quantization bit width, SNR in dB)
shrinks the degradation. "amplifying" flips the X dependence
(X^(+gamma), exp(+gamma*X), or dividing the extended law's SNR
numerator by X) for perturbations like learning rate where larger X
means more damage.

Evaluation is vectorized over numpy arrays. Non-evaluable points raise
:class:`~scalelaws.errors.LawDomainError`; infinities and NaNs never
escape into results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .dataset import ObservationSet
from .errors import LawDomainError

LAW_IDS = (
    "shannon_full",
    "shannon_simplified",
    "shannon_extended",
    "openai",
    "chinchilla",
    "qid",
    "precision",
    "symmetric",
    "asymmetric",
    "shannon_sizeonly_ablation",
)

SHANNON_FAMILY = (
    "shannon_full",
    "shannon_simplified",
    "shannon_extended",
    "shannon_sizeonly_ablation",
)

MITIGATING = "mitigating"
AMPLIFYING = "amplifying"
NO_X = "none"

_PARAM_NAMES: dict[str, tuple[str, ...]] = {
    "shannon_full": ("a", "b", "c", "d", "e", "alpha", "beta", "gamma", "delta"),
    "shannon_simplified": ("a", "c", "alpha", "beta", "gamma", "delta"),
    "shannon_extended": ("a", "b", "c", "d", "e", "alpha", "beta", "gamma", "delta"),
    "openai": ("a", "b", "alpha", "beta"),
    "chinchilla": ("a", "b", "c", "alpha", "beta"),
    "qid": ("a", "b", "c", "d", "alpha", "beta", "alpha_prime", "beta_prime", "gamma"),
    "precision": ("a", "b", "c", "d", "alpha", "beta", "alpha_prime", "beta_prime", "gamma"),
    "symmetric": ("a", "b", "c", "alpha", "beta"),
    "asymmetric": ("a", "b", "c", "alpha", "beta", "alpha_prime", "beta_prime"),
    "shannon_sizeonly_ablation": ("a", "b", "c", "d", "e", "alpha", "beta", "gamma", "delta"),
}

_NEEDS_X = frozenset({"qid", "precision", "shannon_extended"})


@dataclass(frozen=True)
class LawSpec:
    """A registered law form.

    Attributes:
        law_id: One of :data:`LAW_IDS`.
        param_names: Ordered names of the positive fitted constants.
        needs_x: Whether evaluation requires a perturbation scalar X.
        x_orientation: "mitigating", "amplifying", or "none" — whether a
            larger X reduces or increases the degradation term.
    """

    law_id: str
    param_names: tuple[str, ...]
    needs_x: bool
    x_orientation: str

    def __post_init__(self) -> None:
        if self.law_id not in LAW_IDS:
            raise LawDomainError(f"unknown law id {self.law_id!r}")
        if self.param_names != _PARAM_NAMES[self.law_id]:
            raise LawDomainError(f"parameter names for {self.law_id} must be "
                                 f"{_PARAM_NAMES[self.law_id]}")
        if self.needs_x != (self.law_id in _NEEDS_X):
            raise LawDomainError(f"needs_x for {self.law_id} must be "
                                 f"{self.law_id in _NEEDS_X}")
        if self.needs_x and self.x_orientation not in (MITIGATING, AMPLIFYING):
            raise LawDomainError(
                f"{self.law_id} requires x_orientation 'mitigating' or 'amplifying'"
            )
        if not self.needs_x and self.x_orientation != NO_X:
            raise LawDomainError(f"{self.law_id} takes no X; x_orientation must be 'none'")

    @property
    def n_params(self) -> int:
        return len(self.param_names)


def _make_spec(law_id: str) -> LawSpec:
    needs_x = law_id in _NEEDS_X
    return LawSpec(
        law_id=law_id,
        param_names=_PARAM_NAMES[law_id],
        needs_x=needs_x,
        x_orientation=MITIGATING if needs_x else NO_X,
    )


_REGISTRY: tuple[LawSpec, ...] = tuple(_make_spec(law_id) for law_id in LAW_IDS)
_BY_ID: dict[str, LawSpec] = {spec.law_id: spec for spec in _REGISTRY}


def law_registry() -> list[LawSpec]:
    """All registered laws in stable order (capacity family first)."""
    return list(_REGISTRY)


def get_law(law_id: str) -> LawSpec:
    try:
        return _BY_ID[law_id]
    except KeyError:
        raise LawDomainError(
            f"unknown law id {law_id!r}; known: {', '.join(LAW_IDS)}"
        ) from None


def with_orientation(law: LawSpec, orientation: str | None) -> LawSpec:
    """Return `law` with its X orientation overridden (no-op on None)."""
    if orientation is None or orientation == law.x_orientation:
        return law
    if not law.needs_x:
        raise LawDomainError(f"{law.law_id} takes no X; cannot set orientation")
    return replace(law, x_orientation=orientation)


def apply_orientation(law: LawSpec, orientation: str | None) -> LawSpec:
    """Fit-time orientation override: honored by X-aware laws, silently
    irrelevant for the rest (so one flag can cover a mixed law list)."""
    if law.needs_x:
        return with_orientation(law, orientation)
    return law


@dataclass(frozen=True)
class ParamVector:
    """Positive parameter values aligned with a law's param_names."""

    law_id: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        names = _PARAM_NAMES.get(self.law_id)
        if names is None:
            raise LawDomainError(f"unknown law id {self.law_id!r}")
        if len(self.values) != len(names):
            raise LawDomainError(
                f"{self.law_id} takes {len(names)} parameters, got {len(self.values)}"
            )
        for name, value in zip(names, self.values):
            if not (math.isfinite(value) and value > 0):
                raise LawDomainError(
                    f"parameter {name} of {self.law_id} must be a positive finite "
                    f"real, got {value}"
                )

    @classmethod
    def from_dict(cls, law_id: str, values: Mapping[str, float]) -> "ParamVector":
        names = _PARAM_NAMES.get(law_id)
        if names is None:
            raise LawDomainError(f"unknown law id {law_id!r}")
        missing = [n for n in names if n not in values]
        if missing:
            raise LawDomainError(f"missing parameter(s) for {law_id}: {', '.join(missing)}")
        return cls(law_id, tuple(float(values[n]) for n in names))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(_PARAM_NAMES[self.law_id], self.values))


# ---------------------------------------------------------------------
# Raw evaluation (vectorized, non-raising; caller inspects finiteness)
# ---------------------------------------------------------------------

def _split_theta(theta):
    """Parameter components for evaluation.

    A 1-D theta yields Python floats (point evaluation). A 2-D theta of
    shape (batch, p) yields (batch, 1) columns so one call evaluates a
    whole batch of parameter vectors against the same inputs; results
    then have shape (batch, n_points).
    """
    arr = np.asarray(theta, dtype=float)
    if arr.ndim == 1:
        return tuple(arr.tolist())
    return tuple(arr[:, j:j + 1] for j in range(arr.shape[1]))


def _snr_raw(law: LawSpec, parts, n, d, x):
    """Signal-to-noise ratio of a capacity-family law (may be non-finite)."""
    if law.law_id == "shannon_simplified":
        a, c, alpha, beta, gamma, delta = parts
        numerator = d ** beta
        denominator = c * (d * n) ** gamma + d ** delta
    else:
        a, b, c, d_coef, e, alpha, beta, gamma, delta = parts
        numerator = b * d ** beta
        if law.law_id == "shannon_sizeonly_ablation":
            denominator = c * n ** gamma + d_coef * d ** delta + e
        else:
            denominator = c * (d * n) ** gamma + d_coef * d ** delta + e
        if law.law_id == "shannon_extended":
            numerator = numerator * x if law.x_orientation == MITIGATING else numerator / x
    return numerator / denominator


def _capacity_raw(law: LawSpec, parts, n, d, x):
    a = parts[0]
    alpha = parts[2] if law.law_id == "shannon_simplified" else parts[5]
    snr = _snr_raw(law, parts, n, d, x)
    return a * n ** alpha * np.log2(1.0 + snr)


def _loss_openai(parts, n, d, x, orientation):
    a, b, alpha, beta = parts
    return ((a / n) ** (alpha / beta) + b / d) ** beta


def _loss_chinchilla(parts, n, d, x, orientation):
    a, b, c, alpha, beta = parts
    return a / n ** alpha + b / d ** beta + c


def _loss_qid(parts, n, d, x, orientation):
    a, b, c, d_coef, alpha, beta, alpha_p, beta_p, gamma = parts
    base = a / n ** alpha + b / d ** beta + c
    x_power = x ** (-gamma) if orientation == MITIGATING else x ** gamma
    return base + d_coef * n ** alpha_p * d ** beta_p * x_power


def _loss_precision(parts, n, d, x, orientation):
    a, b, c, d_coef, alpha, beta, alpha_p, beta_p, gamma = parts
    base = a / n ** alpha + b / d ** beta + c
    x_factor = np.exp(-x / gamma) if orientation == MITIGATING else np.exp(gamma * x)
    return base + d_coef * (d ** beta_p / n ** alpha_p) * x_factor


def _loss_symmetric(parts, n, d, x, orientation):
    a, b, c, alpha, beta = parts
    return a * n ** alpha / d ** beta + b * d ** beta / n ** alpha + c


def _loss_asymmetric(parts, n, d, x, orientation):
    a, b, c, alpha, beta, alpha_p, beta_p = parts
    return a * n ** alpha / d ** beta + b * d ** beta_p / n ** alpha_p + c


_BASELINE_EVAL = {
    "openai": _loss_openai,
    "chinchilla": _loss_chinchilla,
    "qid": _loss_qid,
    "precision": _loss_precision,
    "symmetric": _loss_symmetric,
    "asymmetric": _loss_asymmetric,
}


def evaluate_raw(law: LawSpec, theta: Sequence[float], n, d, x=None) -> np.ndarray:
    """Evaluate a law without domain checks.

    Returns an array that may contain inf/NaN; used by the fitter (which
    treats non-finite values as rejected steps) and by grid evaluation
    (which masks error cells). Prefer :func:`predict_loss` elsewhere.
    """
    if law.needs_x and x is None:
        raise LawDomainError(f"law {law.law_id} requires x")
    parts = _split_theta(theta)
    with np.errstate(all="ignore"):
        if law.law_id in SHANNON_FAMILY:
            return np.asarray(1.0 / _capacity_raw(law, parts, n, d, x), dtype=float)
        return np.asarray(_BASELINE_EVAL[law.law_id](parts, n, d, x, law.x_orientation),
                          dtype=float)


# ---------------------------------------------------------------------
# Validated evaluation
# ---------------------------------------------------------------------

def _coerce_inputs(law: LawSpec, n, d, x):
    scalar = np.ndim(n) == 0 and np.ndim(d) == 0
    n_arr = np.asarray(n, dtype=float)
    d_arr = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(n_arr)) or np.any(n_arr <= 0):
        raise LawDomainError("n must be positive and finite")
    if np.any(~np.isfinite(d_arr)) or np.any(d_arr <= 0):
        raise LawDomainError("d must be positive and finite")
    if law.needs_x:
        if x is None:
            raise LawDomainError(f"law {law.law_id} requires x")
        x_arr = np.asarray(x, dtype=float)
        if np.any(~np.isfinite(x_arr)):
            raise LawDomainError("x must be finite")
        if law.law_id in ("qid", "shannon_extended") and np.any(x_arr <= 0):
            raise LawDomainError(f"law {law.law_id} requires x > 0")
    else:
        if x is not None:
            raise LawDomainError(f"law {law.law_id} takes no x")
        x_arr = None
    return n_arr, d_arr, x_arr, scalar


def _finalize(values: np.ndarray, scalar: bool):
    return float(values) if scalar and values.ndim == 0 else values


def _capacity_checked(law: LawSpec, params: ParamVector, n, d, x):
    n_arr, d_arr, x_arr, scalar = _coerce_inputs(law, n, d, x)
    parts = _split_theta(params.values)
    with np.errstate(all="ignore"):
        snr = np.asarray(_snr_raw(law, parts, n_arr, d_arr, x_arr), dtype=float)
        if np.any(~np.isfinite(snr)):
            raise LawDomainError(f"{law.law_id}: SNR overflowed to a non-finite value")
        cap = np.asarray(_capacity_raw(law, parts, n_arr, d_arr, x_arr), dtype=float)
    if np.any(cap == 0.0):
        raise LawDomainError(f"{law.law_id}: zero capacity (SNR underflow); loss undefined")
    if np.any(~np.isfinite(cap)):
        raise LawDomainError(f"{law.law_id}: capacity overflowed")
    return _finalize(cap, scalar)


def capacity(params: ParamVector, n, d, x=None, law: LawSpec | None = None):
    """Effective capacity C of a capacity-family law at (n, d[, x]).

    Args:
        params: Parameters of a capacity-family law.
        n: Normalized model size(s), positive.
        d: Normalized token count(s), positive.
        x: Perturbation scalar; required exactly for the extended law.
        law: Optional LawSpec overriding the registry default (used to
            carry a non-default X orientation).

    Returns:
        Positive capacity, scalar or array matching the inputs.

    Raises:
        LawDomainError: non-positive inputs, missing/forbidden x, SNR
            overflow, zero capacity, or capacity overflow.
    """
    if law is None:
        law = get_law(params.law_id)
    if law.law_id not in SHANNON_FAMILY:
        raise LawDomainError(f"capacity is defined for {SHANNON_FAMILY}, not {law.law_id}")
    return _capacity_checked(law, params, n, d, x)


def predict_loss(law: LawSpec, params: ParamVector, n, d, x=None):
    """Predicted positive test loss at (n, d[, x]) under `law`.

    Capacity-family laws return the reciprocal of :func:`capacity`;
    baselines return their closed form directly.

    Raises:
        LawDomainError: propagated capacity errors, or a non-finite /
            non-positive baseline value.
    """
    if params.law_id != law.law_id:
        raise LawDomainError(
            f"parameter vector is for {params.law_id}, law is {law.law_id}"
        )
    if law.law_id in SHANNON_FAMILY:
        cap = _capacity_checked(law, params, n, d, x)
        if np.ndim(cap) == 0:
            return 1.0 / cap
        return 1.0 / np.asarray(cap)
    n_arr, d_arr, x_arr, scalar = _coerce_inputs(law, n, d, x)
    values = evaluate_raw(law, params.values, n_arr, d_arr, x_arr)
    if np.any(~np.isfinite(values)):
        raise LawDomainError(f"{law.law_id}: prediction overflowed to a non-finite value")
    if np.any(values <= 0):
        raise LawDomainError(f"{law.law_id}: non-positive predicted loss")
    return _finalize(values, scalar)


def predict_dataset(law: LawSpec, params: ParamVector, data: ObservationSet) -> np.ndarray:
    """Predicted losses for every observation, in data order.

    Observations are normalized by the set's recorded normalization
    before evaluation. Domain errors propagate.
    """
    n = data.n_norm()
    d = data.d_norm()
    x = None
    if law.needs_x:
        x = data.x_values()
        if np.any(np.isnan(x)):
            raise LawDomainError(f"law {law.law_id} requires x_level on every observation")
    return np.asarray(predict_loss(law, params, n, d, x), dtype=float)


# ---------------------------------------------------------------------
# Finite-difference Jacobian
# ---------------------------------------------------------------------

MAX_JACOBIAN_STEP = 1e-2
DEFAULT_JACOBIAN_STEP = 1e-6


def jacobian_fd(
    law: LawSpec,
    params: ParamVector,
    observations: ObservationSet,
    step_rel: float = DEFAULT_JACOBIAN_STEP,
) -> np.ndarray:
    """Central finite differences of the predicted loss, one column per
    parameter, taken in each parameter's unconstrained log coordinate
    u = ln(theta).

    Args:
        law: Law to differentiate (its orientation is honored).
        params: Point of differentiation, matching `law`.
        observations: Evaluation points (normalized internally).
        step_rel: Log-coordinate step, in (0, 1e-2].

    Returns:
        Matrix of shape [n_obs, n_params] with finite entries.

    Raises:
        LawDomainError: invalid step, or a non-evaluable observation.
    """
    if not (0 < step_rel <= MAX_JACOBIAN_STEP):
        raise LawDomainError(f"step_rel must be in (0, {MAX_JACOBIAN_STEP}], got {step_rel}")
    n = observations.n_norm()
    d = observations.d_norm()
    x = None
    if law.needs_x:
        x = observations.x_values()
        if np.any(np.isnan(x)):
            raise LawDomainError(f"law {law.law_id} requires x_level on every observation")
    base = evaluate_raw(law, params.values, n, d, x)
    if np.any(~np.isfinite(base)):
        raise LawDomainError(f"{law.law_id}: non-evaluable observation at the given parameters")
    jac = jacobian_fd_arrays(law, np.asarray(params.values), n, d, x, step_rel)
    if np.any(~np.isfinite(jac)):
        raise LawDomainError(f"{law.law_id}: non-finite Jacobian entry at the given parameters")
    return jac


def jacobian_fd_arrays(
    law: LawSpec,
    theta: np.ndarray,
    n: np.ndarray,
    d: np.ndarray,
    x: np.ndarray | None,
    step_rel: float,
) -> np.ndarray:
    """Array-level Jacobian core (no validation; entries may be non-finite).

    All 2p perturbed parameter vectors are evaluated in one batched call.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.size
    batch = np.tile(theta, (2 * p, 1))
    idx = np.arange(p)
    batch[idx, idx] *= math.exp(step_rel)
    batch[p + idx, idx] *= math.exp(-step_rel)
    values = evaluate_raw(law, batch, n, d, x)  # (2p, n_obs)
    return (values[:p] - values[p:]).T / (2.0 * step_rel)
