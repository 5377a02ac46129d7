"""Filter kernels with a compiled fast path and a pure Python fallback.

The compiled extension is preferred when importable; set
MFCCSYNTH_PURE_PYTHON=1 to force the fallback. Both backends produce
bit-identical float64 results, so the choice only affects speed.
"""
from __future__ import annotations

import os

import numpy as np

from ..errors import ContractError, InvariantError
from . import py_ref

if os.environ.get("MFCCSYNTH_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = py_ref
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = py_ref
        BACKEND = "python"


def _as_float_vector(x, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains NaN or Inf")
    return arr


def _check_autocorrelation(r: np.ndarray, order: int) -> None:
    if order < 1:
        raise ContractError(f"filter order must be >= 1, got {order}")
    if r.shape[-1] < order + 1:
        raise ContractError(
            f"need {order + 1} autocorrelation lags for order {order}, "
            f"got {r.shape[-1]}"
        )
    r0 = r[..., 0]
    if not np.all(r0 > 0.0):
        raise ContractError("zero-lag autocorrelation must be positive")


def levinson(r, order: int, condition: float = 1e-6):
    """Fit an order-p all-pole predictor to autocorrelation lags r[0..p].

    Returns (a, err): coefficients with a[0] = 1 and the final prediction
    error. err stays positive for valid input thanks to the zero-lag
    conditioning term.
    """
    r = _as_float_vector(r, "autocorrelation")
    _check_autocorrelation(r, order)
    a, err = _impl.levinson(r[: order + 1], order, condition)
    if not err > 0.0:
        raise InvariantError("prediction error collapsed to zero; bad lags?")
    return a, err


def levinson_batch(rows, order: int, condition: float = 1e-6):
    """Row-wise levinson over a (n_frames, order+1) lag matrix."""
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ContractError(f"lag matrix must be 2-D, got shape {rows.shape}")
    if rows.size and not np.all(np.isfinite(rows)):
        raise ContractError("lag matrix contains NaN or Inf")
    _check_autocorrelation(rows, order)
    coeffs, errors = _impl.levinson_batch(
        np.ascontiguousarray(rows[:, : order + 1]), order, condition
    )
    if not np.all(errors > 0.0):
        raise InvariantError("prediction error collapsed to zero; bad lags?")
    return coeffs, errors


def _check_filter_args(x, coeffs, frame_of_sample, signal_name):
    x = _as_float_vector(x, signal_name)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 2 or coeffs.shape[1] < 2:
        raise ContractError(
            f"coefficient matrix must be (n_frames, order+1), got {coeffs.shape}"
        )
    if not np.all(np.isfinite(coeffs)):
        raise ContractError("coefficient matrix contains NaN or Inf")
    if not np.all(coeffs[:, 0] == 1.0):
        raise ContractError("all-pole coefficients must be normalized to a[0] = 1")
    fos = np.ascontiguousarray(frame_of_sample, dtype=np.int64)
    if fos.shape != x.shape:
        raise ContractError(
            f"frame index array length {fos.shape} does not match "
            f"signal length {x.shape}"
        )
    if fos.size and (fos.min() < 0 or fos.max() >= coeffs.shape[0]):
        raise ContractError("frame index out of range for coefficient matrix")
    return x, coeffs, fos


def inverse_filter(x, coeffs, frame_of_sample):
    """Whiten x with per-sample coefficient selection by frame index."""
    x, coeffs, fos = _check_filter_args(x, coeffs, frame_of_sample, "signal")
    if x.size == 0:
        return np.zeros(0)
    return _impl.inverse_filter(x, coeffs, fos)


def synthesis_filter(exc, coeffs, frame_of_sample):
    """Run the all-pole recursion over an excitation signal."""
    exc, coeffs, fos = _check_filter_args(exc, coeffs, frame_of_sample, "excitation")
    if exc.size == 0:
        return np.zeros(0)
    return _impl.synthesis_filter(exc, coeffs, fos)
