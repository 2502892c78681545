"""SNR-calibrated additive Gaussian perturbation of flat weight arrays.

The noise variance is set from the mean squared weight (the signal
power) and a target signal-to-noise ratio in decibels:

    sigma^2 = P_w / 10^(SNR_dB / 10),   P_w = mean(w^2)

Noise draws come from numpy's Generator with the PCG64 bit generator
(ziggurat standard normal), so a seed fully determines the output
within this implementation. float32 inputs are perturbed in double
precision and rounded once at the end.

Weight files use a small binary container (magic "WVEC"): the 4 magic
bytes, a u8 version (1), a u8 dtype code (0 = f32, 1 = f64), a
little-endian u64 element count, then the raw little-endian IEEE-754
values. A one-value-per-line text form is supported for small vectors.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataValidationError

WVEC_MAGIC = b"WVEC"
WVEC_VERSION = 1
_DTYPE_CODES = {"f32": 0, "f64": 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_HEADER = struct.Struct("<4sBBQ")


@dataclass(frozen=True)
class WeightVector:
    """A flat, finite float32 or float64 array of weights."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.dtype not in (np.float32, np.float64):
            raise DataValidationError(
                f"weights must be float32 or float64, got {arr.dtype}"
            )
        arr = np.ascontiguousarray(arr).reshape(-1)
        if arr.size < 1:
            raise DataValidationError("weight vector must hold at least one element")
        if not np.all(np.isfinite(arr)):
            raise DataValidationError("weight vector contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def count(self) -> int:
        return int(self.values.size)

    @property
    def dtype_code(self) -> str:
        return "f32" if self.values.dtype == np.float32 else "f64"


@dataclass(frozen=True)
class PerturbReport:
    """Bookkeeping for one injection.

    `sigma2` is exactly noise_sigma2(signal_power, target_snr_db).
    `empirical_snr_db` is measured against the noise actually drawn, in
    double precision, before any float32 rounding of the output.
    """

    target_snr_db: float
    signal_power: float
    sigma2: float
    empirical_snr_db: float
    seed: int
    count: int
    power_mode: str = "global"

    def to_dict(self) -> dict:
        return {
            "target_snr_db": self.target_snr_db,
            "signal_power": self.signal_power,
            "sigma2": self.sigma2,
            "empirical_snr_db": self.empirical_snr_db,
            "seed": self.seed,
            "count": self.count,
            "power_mode": self.power_mode,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def signal_power(w: WeightVector) -> float:
    """Mean squared weight, accumulated in double precision."""
    values = w.values.astype(np.float64, copy=False)
    return float(np.mean(np.square(values)))


def noise_sigma2(p_w: float, snr_db: float) -> float:
    """Noise variance hitting the target SNR for a given signal power."""
    if not (math.isfinite(p_w) and p_w >= 0):
        raise DataValidationError(f"signal power must be a non-negative real, got {p_w}")
    if not math.isfinite(snr_db):
        raise DataValidationError(f"snr_db must be finite, got {snr_db}")
    return p_w / 10.0 ** (snr_db / 10.0)


def _draw_noise(count: int, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(count) * math.sqrt(sigma2)


def inject(
    w: WeightVector, snr_db: float, seed: int
) -> tuple[WeightVector, PerturbReport]:
    """Add zero-mean Gaussian noise calibrated to the target SNR.

    Args:
        w: Weights with nonzero signal power.
        snr_db: Target SNR in decibels (any finite real).
        seed: Seeds the PCG64 stream; same inputs give identical output.

    Returns:
        (perturbed, report): same length and dtype as the input, plus
        the calibration bookkeeping.

    Raises:
        DataValidationError: zero signal power (SNR undefined).
    """
    p_w = signal_power(w)
    if p_w == 0.0:
        raise DataValidationError("zero signal power; SNR-calibrated injection undefined")
    sigma2 = noise_sigma2(p_w, snr_db)
    rng = np.random.default_rng(seed)
    noise = _draw_noise(w.count, sigma2, rng)
    perturbed64 = w.values.astype(np.float64, copy=False) + noise
    out = perturbed64.astype(w.values.dtype)
    report = PerturbReport(
        target_snr_db=float(snr_db),
        signal_power=p_w,
        sigma2=sigma2,
        empirical_snr_db=10.0 * math.log10(p_w / float(np.mean(np.square(noise)))),
        seed=int(seed),
        count=w.count,
        power_mode="global",
    )
    return WeightVector(out), report


def inject_segmented(
    w: WeightVector, segment_lengths: Sequence[int], snr_db: float, seed: int
) -> tuple[WeightVector, list[PerturbReport]]:
    """Per-segment calibration for multi-tensor files.

    Each segment gets its own signal power, noise variance, and an
    independent stream seeded by SeedSequence(seed, spawn_key=(i,)) for
    segment index i, so segments can be processed concurrently with
    identical results.
    """
    lengths = [int(v) for v in segment_lengths]
    if any(v < 1 for v in lengths) or sum(lengths) != w.count:
        raise DataValidationError(
            f"segment lengths must be positive and sum to {w.count}, got {lengths}"
        )
    out = w.values.astype(np.float64)
    reports = []
    offset = 0
    for index, length in enumerate(lengths):
        segment = WeightVector(w.values[offset:offset + length].copy())
        p_w = signal_power(segment)
        if p_w == 0.0:
            raise DataValidationError(f"segment {index} has zero signal power")
        sigma2 = noise_sigma2(p_w, snr_db)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
        noise = _draw_noise(length, sigma2, rng)
        out[offset:offset + length] += noise
        reports.append(
            PerturbReport(
                target_snr_db=float(snr_db),
                signal_power=p_w,
                sigma2=sigma2,
                empirical_snr_db=10.0 * math.log10(p_w / float(np.mean(np.square(noise)))),
                seed=int(seed),
                count=length,
                power_mode=f"segment:{index}",
            )
        )
        offset += length
    return WeightVector(out.astype(w.values.dtype)), reports


def measure_snr(original: WeightVector, perturbed: WeightVector) -> float:
    """Empirical SNR in dB between a vector and its perturbed copy.

    Raises:
        DataValidationError: length mismatch, zero signal power, or
            identical vectors (the SNR would be infinite).
    """
    if original.count != perturbed.count:
        raise DataValidationError(
            f"vector lengths differ: {original.count} vs {perturbed.count}"
        )
    p_sig = signal_power(original)
    if p_sig == 0.0:
        raise DataValidationError("zero signal power; SNR undefined")
    diff = perturbed.values.astype(np.float64) - original.values.astype(np.float64)
    p_diff = float(np.mean(np.square(diff)))
    if p_diff == 0.0:
        raise DataValidationError("vectors are identical; SNR is infinite")
    return 10.0 * math.log10(p_sig / p_diff)


# ---------------------------------------------------------------------
# WVEC container and text form
# ---------------------------------------------------------------------

def write_wvec(path: str | Path, w: WeightVector) -> None:
    """Write the binary weight container (bit-exact, little endian)."""
    dtype = _CODE_DTYPES[_DTYPE_CODES[w.dtype_code]]
    header = _HEADER.pack(WVEC_MAGIC, WVEC_VERSION, _DTYPE_CODES[w.dtype_code], w.count)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(w.values, dtype=dtype).tobytes())


def read_wvec(path: str | Path) -> WeightVector:
    """Read the binary weight container, validating the header strictly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise DataValidationError(f"{path}: truncated header")
    magic, version, dtype_code, count = _HEADER.unpack_from(blob)
    if magic != WVEC_MAGIC:
        raise DataValidationError(f"{path}: bad magic {magic!r}")
    if version != WVEC_VERSION:
        raise DataValidationError(f"{path}: unsupported version {version}")
    if dtype_code not in _CODE_DTYPES:
        raise DataValidationError(f"{path}: unknown dtype code {dtype_code}")
    dtype = _CODE_DTYPES[dtype_code]
    expected = _HEADER.size + count * dtype.itemsize
    if len(blob) != expected:
        raise DataValidationError(
            f"{path}: expected {expected} bytes for {count} elements, found {len(blob)}"
        )
    values = np.frombuffer(blob, dtype=dtype, offset=_HEADER.size).copy()
    return WeightVector(values)


def write_weights_text(path: str | Path, w: WeightVector) -> None:
    """One value per line; full-precision reprs round-trip exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for v in w.values:
            fh.write(repr(float(v)))
            fh.write("\n")


def read_weights_text(path: str | Path, dtype_code: str = "f64") -> WeightVector:
    if dtype_code not in _DTYPE_CODES:
        raise DataValidationError(f"dtype must be 'f32' or 'f64', got {dtype_code!r}")
    values = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise DataValidationError(
                    f"{path}: line {line_no}: {line!r} is not numeric"
                ) from None
    if not values:
        raise DataValidationError(f"{path}: no values found")
    dtype = np.float32 if dtype_code == "f32" else np.float64
    return WeightVector(np.asarray(values, dtype=dtype))
