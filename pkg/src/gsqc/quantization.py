"""Uniform scalar quantizers with non-subtractive uniform dither."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "QuantizerBank",
    "quantize_scalar",
    "index_to_value",
    "quantize_indices",
    "calibrate_supports",
    "dither",
    "quantize_vector_dithered",
    "error_covariance",
    "TINY_SUPPORT",
]

# squares to a positive normal float, so the error variance stays > 0
TINY_SUPPORT = float(np.sqrt(np.finfo(float).tiny))


@dataclass(frozen=True, eq=False)
class QuantizerBank:
    """Per-sample uniform quantizers: level counts, supports, overload factor."""

    levels: np.ndarray
    supports: np.ndarray
    eta: float = 2.0
    dither_seed: int = 0

    def __post_init__(self):
        lv = np.array(self.levels).reshape(-1)
        if lv.size and (np.any(lv < 1) or np.any(lv != np.round(lv))):
            raise ValueError("quantizer levels must be integers >= 1")
        lv = lv.astype(np.int64)
        sp = np.array(self.supports, dtype=float).reshape(-1)
        if sp.shape != lv.shape:
            raise ValueError("levels and supports must have equal length")
        if np.any(sp <= 0) or not np.all(np.isfinite(sp)):
            raise ValueError("supports must be finite and positive")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        lv.setflags(write=False)
        sp.setflags(write=False)
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "supports", sp)

    @property
    def size(self) -> int:
        return self.levels.size

    @cached_property
    def steps(self) -> np.ndarray:
        return 2.0 * self.supports / self.levels


def _validate(levels, support):
    if np.any(np.asarray(levels) < 1):
        raise ValueError("levels must be >= 1")
    if np.any(np.asarray(support) <= 0):
        raise ValueError("support must be positive")


def quantize_indices(v, levels, supports) -> np.ndarray:
    """Cell indices in ``[0, M)`` of the uniform quantizer, vectorized.

    Cells are ``[-g + i d, -g + (i+1) d)``; inputs outside the support
    saturate into the outer cells. Boundaries go to the upper cell.
    """
    v = np.asarray(v, dtype=float)
    levels = np.asarray(levels)
    supports = np.asarray(supports, dtype=float)
    step = 2.0 * supports / levels
    idx = np.floor((v + supports) / step)
    return np.clip(idx, 0, levels - 1).astype(np.int64)


def index_to_value(index, levels, supports) -> np.ndarray:
    """Reconstruction point ``-g + d (index + 1/2)``."""
    levels = np.asarray(levels)
    supports = np.asarray(supports, dtype=float)
    step = 2.0 * supports / levels
    return -supports + step * (np.asarray(index) + 0.5)


def quantize_scalar(v: float, levels: int, support: float) -> tuple[int, float]:
    """Quantize one value; returns ``(index, value)``.

    For an even number of levels the output equals ``d (floor(v/d) + 1/2)``
    inside the support and ``sign(v) (g - d/2)`` outside. A single-level
    quantizer always returns ``(0, 0.0)``.
    """
    _validate(levels, support)
    idx = int(quantize_indices(v, levels, support))
    return idx, float(index_to_value(idx, levels, support))


def calibrate_supports(variances, eta: float = 2.0) -> np.ndarray:
    """Supports ``g_i = eta * sqrt(var_i)``.

    Zero-variance channels get a tiny positive support and a warning.
    """
    var = np.asarray(variances, dtype=float).reshape(-1)
    if np.any(var < 0):
        raise ValueError("variances must be nonnegative")
    if not eta > 0:
        raise ValueError("eta must be positive")
    gam = eta * np.sqrt(var)
    dead = gam < TINY_SUPPORT
    if np.any(dead):
        warnings.warn(
            f"{int(dead.sum())} quantizer input(s) with zero variance; using a tiny support",
            RuntimeWarning,
            stacklevel=2,
        )
        gam = np.where(dead, TINY_SUPPORT, gam)
    return gam


def dither(bank: QuantizerBank, trial_seed: int) -> np.ndarray:
    """Dither vector for one trial, uniform on ``[-d_i/2, d_i/2)``.

    Element ``i`` is the i-th draw of the stream seeded by
    ``(dither_seed, trial_seed)``, so encoder and decoder can regenerate it.
    """
    rng = np.random.default_rng([int(bank.dither_seed), int(trial_seed)])
    u = rng.random(bank.size)
    return (u - 0.5) * bank.steps


def quantize_vector_dithered(y, bank: QuantizerBank, trial_seed: int, *, use_dither: bool = True) -> np.ndarray:
    """Indices of ``Q(y + dither)``; the decoder does not subtract the dither."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != bank.size:
        raise ValueError(f"expected {bank.size} samples, got {y.size}")
    if use_dither:
        y = y + dither(bank, trial_seed)
    return quantize_indices(y, bank.levels, bank.supports)


def error_covariance(bank: QuantizerBank) -> np.ndarray:
    """Additive-noise model covariance ``diag(2 g_i^2 / (3 M_i^2))``."""
    return np.diag(2.0 * bank.supports**2 / (3.0 * bank.levels.astype(float) ** 2))
