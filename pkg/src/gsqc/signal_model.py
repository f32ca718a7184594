"""Bandlimited Gaussian graph-signal prior and its MMSE spectrum estimator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .graph import SpectralGraph

__all__ = [
    "SignalModel",
    "TaskEstimator",
    "covariance",
    "mmse_estimator",
    "mmse_floor",
    "sample_signal",
    "inverse_eigenvalue_variances",
    "db_to_power",
]

log = logging.getLogger(__name__)


def db_to_power(db: float) -> float:
    """Noise power in dB to linear variance (``-30`` dB -> ``1e-3``)."""
    return 10.0 ** (db / 10.0)


def inverse_eigenvalue_variances(sg: SpectralGraph, k: int, offset: float | None = None) -> np.ndarray:
    """Prior variances ``1 / (lam_i + offset)`` for the first ``k`` frequencies.

    ``offset`` defaults to the Fiedler value ``lam_2`` so the DC component
    gets a finite variance.
    """
    lam = np.asarray(sg.eigvals)
    if offset is None:
        offset = float(lam[1]) if lam.size > 1 else 1.0
    if offset <= 0:
        raise ValueError("offset must be positive (is the graph connected?)")
    return 1.0 / (lam[:k] + offset)


@dataclass(frozen=True, eq=False)
class SignalModel:
    """``x = U_K c + w`` with ``c ~ N(0, diag(prior_vars))``, ``w ~ N(0, noise_var I)``."""

    sg: SpectralGraph
    k: int
    prior_vars: np.ndarray
    noise_var: float

    def __post_init__(self):
        pv = np.array(self.prior_vars, dtype=float).reshape(-1)
        if not 1 <= self.k <= self.sg.n:
            raise ValueError(f"bandwidth k={self.k} outside [1, {self.sg.n}]")
        if pv.shape != (self.k,):
            raise ValueError(f"need {self.k} prior variances, got {pv.shape[0]}")
        if np.any(pv <= 0) or not np.all(np.isfinite(pv)):
            raise ValueError("prior variances must be finite and strictly positive")
        if not self.noise_var >= 0:
            raise ValueError("noise variance must be nonnegative")
        pv.setflags(write=False)
        object.__setattr__(self, "prior_vars", pv)
        object.__setattr__(self, "noise_var", float(self.noise_var))

    @property
    def n(self) -> int:
        return self.sg.n

    @property
    def basis(self) -> np.ndarray:
        """``U_K``."""
        return self.sg.eigvecs[:, : self.k]

    @cached_property
    def spectrum(self) -> np.ndarray:
        """Diagonal of ``Lambda~``: prior + noise on the band, noise elsewhere."""
        lt = np.full(self.n, self.noise_var)
        lt[: self.k] += self.prior_vars
        return lt

    @cached_property
    def task_spectrum(self) -> np.ndarray:
        """Length-n vector ``sigma_i^4`` on the band and 0 elsewhere.

        ``U diag(task_spectrum) U^T`` equals ``C_x Gamma*^T Gamma* C_x``.
        """
        t = np.zeros(self.n)
        t[: self.k] = self.prior_vars**2
        return t

    def with_noise(self, noise_var: float) -> "SignalModel":
        return SignalModel(self.sg, self.k, self.prior_vars, noise_var)


@dataclass(frozen=True, eq=False)
class TaskEstimator:
    """MMSE estimator ``c~ = gamma @ x`` of the spectrum.

    ``singular_vals`` are the singular values of ``Gamma* C_x^{1/2}`` in
    descending order and ``order[i]`` is the spectral index they belong to.
    """

    gamma: np.ndarray
    task_energy: float
    singular_vals: np.ndarray
    order: np.ndarray = field(repr=False)


def covariance(m: SignalModel) -> np.ndarray:
    """``C_x = U Lambda~ U^T``."""
    u = m.sg.eigvecs
    cx = (u * m.spectrum) @ u.T
    return 0.5 * (cx + cx.T)


def mmse_estimator(m: SignalModel) -> TaskEstimator:
    """``Gamma* = Lambda^ (Lambda~^{-1})_K U^T``."""
    band = m.spectrum[: m.k]
    if np.any(band <= 0):
        raise ZeroDivisionError("zero entry in the in-band signal+noise spectrum")
    gain = m.prior_vars / band
    gamma = gain[:, None] * m.basis.T
    sv = m.prior_vars / np.sqrt(band)
    order = np.argsort(-sv, kind="stable")
    return TaskEstimator(
        gamma=gamma,
        task_energy=float(np.sum(sv**2)),
        singular_vals=sv[order],
        order=order,
    )


def _floor_matrix_forms(m: SignalModel) -> tuple[float, float]:
    """Canonical Gaussian-conditioning trace and the estimator-form trace.

    The canonical form is ``Tr(Lambda^ - Lambda^ U_K^T C_x^{-1} U_K Lambda^)``;
    the second is ``Tr(Lambda^) - Tr(U_K Lambda^2 U_K^T C_x^{-1})``, the
    dimensionally consistent reading of the estimator error expression.
    """
    cx = covariance(m)
    lam_hat = np.diag(m.prior_vars)
    uk = m.basis
    cinv_uk = np.linalg.solve(cx, uk)
    canonical = np.trace(lam_hat - lam_hat @ uk.T @ cinv_uk @ lam_hat)
    alt = np.trace(lam_hat) - np.trace(uk @ lam_hat**2 @ cinv_uk.T)
    return float(canonical), float(alt)


def mmse_floor(m: SignalModel, check: bool = True) -> float:
    """Infinite-resolution error ``E||c~ - c||^2``.

    Computed in the eigenbasis as ``sum sigma_i^2 s0 / (sigma_i^2 + s0)``;
    with ``check`` (and nonsingular ``C_x``) the two matrix trace forms are
    evaluated too and a disagreement is logged.
    """
    s0 = m.noise_var
    floor = float(np.sum(m.prior_vars * s0 / (m.prior_vars + s0)))
    if check and s0 > 0:
        canonical, alt = _floor_matrix_forms(m)
        scale = max(1.0, float(np.sum(m.prior_vars)))
        if abs(canonical - floor) > 1e-8 * scale or abs(alt - floor) > 1e-8 * scale:
            log.warning(
                "mmse floor forms disagree: spectral %.12g canonical %.12g estimator-form %.12g",
                floor, canonical, alt,
            )
    return max(floor, 0.0)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_signal(m: SignalModel, seed, size: int | None = None):
    """Draw ``(x, c)`` from the model.

    With ``size`` given, returns an (n, size) signal matrix and a (k, size)
    coefficient matrix (one column per draw).
    """
    rng = _rng(seed)
    shape = (m.k,) if size is None else (m.k, size)
    c = rng.standard_normal(shape) * np.sqrt(m.prior_vars).reshape((-1,) + (1,) * (len(shape) - 1))
    wshape = (m.n,) if size is None else (m.n, size)
    w = rng.standard_normal(wshape) * np.sqrt(m.noise_var)
    x = m.basis @ c + w
    return x, c
