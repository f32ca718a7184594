"""Compression designs shared by the design modules, the codec and the benchmarks."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .quantization import QuantizerBank, calibrate_supports, error_covariance
from .signal_model import SignalModel, covariance, mmse_estimator, mmse_floor

__all__ = [
    "CompressionDesign",
    "optimal_recovery",
    "linear_recovery_mse",
    "finalize_design",
    "design_hash",
    "save_design",
    "load_design",
    "design_to_dict",
    "design_from_dict",
]


@dataclass(frozen=True, eq=False)
class CompressionDesign:
    """Sampling matrix, quantizers and linear recovery for one codec setup.

    Rows of ``psi`` with a single quantization level are inactive: they carry
    no bits and their ``phi`` column is zero.
    """

    method: str
    psi: np.ndarray
    phi: np.ndarray
    levels: np.ndarray
    supports: np.ndarray
    eta: float
    basis: np.ndarray
    predicted_excess_mse: float
    predicted_mse: float
    alphas: Optional[np.ndarray] = None
    dither_seed: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.psi.shape[1]

    @property
    def k(self) -> int:
        return self.phi.shape[0]

    @property
    def p(self) -> int:
        return self.psi.shape[0]

    @property
    def bank(self) -> QuantizerBank:
        return QuantizerBank(self.levels, self.supports, self.eta, self.dither_seed)

    @property
    def bits(self) -> float:
        """``sum log2 M_i`` actually used."""
        return float(np.sum(np.log2(self.levels.astype(float)))) if self.levels.size else 0.0

    @property
    def active(self) -> np.ndarray:
        return self.levels > 1


def optimal_recovery(psi, model: SignalModel, bank: QuantizerBank, *, exclude_single_level: bool = True) -> np.ndarray:
    """MSE-optimal linear recovery ``Gamma* C_x Psi^T (Psi C_x Psi^T + G)^{-1}``.

    Single-level quantizers always output 0, so by default they are left out
    of the inverse and get a zero column.
    """
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    if psi.shape[0] != bank.size:
        raise ValueError("sampling matrix rows and quantizer count differ")
    est = mmse_estimator(model)
    cx = covariance(model)
    use = bank.levels > 1 if exclude_single_level else np.ones(bank.size, dtype=bool)
    phi = np.zeros((model.k, bank.size))
    if not np.any(use):
        return phi
    ps = psi[use]
    g = error_covariance(bank)[np.ix_(use, use)]
    inner = ps @ cx @ ps.T + g
    cross = est.gamma @ cx @ ps.T
    try:
        phi[:, use] = np.linalg.solve(inner.T, cross.T).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular sample covariance in the recovery filter") from exc
    return phi


def linear_recovery_mse(model: SignalModel, psi, g) -> float:
    """``E||c - Phi* (Psi x + e)||^2`` under the additive quantization-noise model."""
    est = mmse_estimator(model)
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    base = mmse_floor(model, check=False) + est.task_energy
    if psi.shape[0] == 0:
        return base
    cx = covariance(model)
    inner = psi @ cx @ psi.T + np.asarray(g, dtype=float)
    cross = est.gamma @ cx @ psi.T
    gain = np.trace(cross @ np.linalg.solve(inner, cross.T))
    return float(base - gain)


def finalize_design(
    method: str,
    model: SignalModel,
    psi,
    levels,
    eta: float,
    *,
    predicted_excess: Optional[float] = None,
    alphas=None,
    dither_seed: int = 0,
    extras: Optional[dict] = None,
) -> CompressionDesign:
    """Calibrate supports to ``psi``, compute ``phi`` and the predicted MSE."""
    psi = np.atleast_2d(np.asarray(psi, dtype=float)).reshape(-1, model.n)
    levels = np.asarray(levels, dtype=np.int64).reshape(-1)
    cx = covariance(model)
    var = np.einsum("ij,jk,ik->i", psi, cx, psi)
    supports = calibrate_supports(np.maximum(var, 0.0), eta)
    bank = QuantizerBank(levels, supports, eta, dither_seed)
    phi = optimal_recovery(psi, model, bank)
    floor = mmse_floor(model)
    act = levels > 1
    direct = linear_recovery_mse(model, psi[act], error_covariance(bank)[np.ix_(act, act)])
    if predicted_excess is None:
        predicted_excess = direct - floor
    ex = dict(extras or {})
    ex.setdefault("model_mse_check", direct)
    return CompressionDesign(
        method=method,
        psi=psi,
        phi=phi,
        levels=levels,
        supports=supports,
        eta=float(eta),
        basis=np.array(model.basis),
        predicted_excess_mse=float(max(predicted_excess, 0.0)),
        predicted_mse=float(floor + max(predicted_excess, 0.0)),
        alphas=None if alphas is None else np.asarray(alphas, dtype=float),
        dither_seed=int(dither_seed),
        extras=ex,
    )


# ---------------------------------------------------------------- serialization


def design_hash(design: CompressionDesign) -> bytes:
    """SHA-256 over the arrays the decoder depends on."""
    h = hashlib.sha256()
    for arr in (design.psi, design.phi, design.supports, design.basis):
        a = np.ascontiguousarray(arr, dtype="<f8")
        h.update(np.asarray(a.shape, dtype="<i8").tobytes())
        h.update(a.tobytes())
    h.update(np.ascontiguousarray(design.levels, dtype="<i8").tobytes())
    h.update(np.float64(design.eta).astype("<f8").tobytes())
    h.update(int(design.dither_seed).to_bytes(8, "little", signed=False))
    return h.digest()


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def design_to_dict(design: CompressionDesign) -> dict:
    doc = {
        "format": "gsqc-design",
        "version": 1,
        "method": design.method,
        "n": design.n,
        "k": design.k,
        "p": design.p,
        "eta": design.eta,
        "dither_seed": design.dither_seed,
        "levels": design.levels.tolist(),
        "supports": design.supports.tolist(),
        "psi": design.psi.tolist(),
        "phi": design.phi.tolist(),
        "basis": design.basis.tolist(),
        "predicted_excess_mse": design.predicted_excess_mse,
        "predicted_mse": design.predicted_mse,
        "alphas": None if design.alphas is None else design.alphas.tolist(),
        "extras": _jsonable(design.extras),
        "hash": design_hash(design).hex(),
    }
    return doc


def design_from_dict(doc: dict) -> CompressionDesign:
    if doc.get("format") != "gsqc-design":
        raise ValueError("not a gsqc design document")
    n, k = int(doc["n"]), int(doc["k"])
    design = CompressionDesign(
        method=doc["method"],
        psi=np.array(doc["psi"], dtype=float).reshape(-1, n),
        phi=np.array(doc["phi"], dtype=float).reshape(k, -1),
        levels=np.array(doc["levels"], dtype=np.int64),
        supports=np.array(doc["supports"], dtype=float),
        eta=float(doc["eta"]),
        basis=np.array(doc["basis"], dtype=float).reshape(n, k),
        predicted_excess_mse=float(doc["predicted_excess_mse"]),
        predicted_mse=float(doc["predicted_mse"]),
        alphas=None if doc.get("alphas") is None else np.array(doc["alphas"], dtype=float),
        dither_seed=int(doc.get("dither_seed", 0)),
        extras=dict(doc.get("extras") or {}),
    )
    stored = doc.get("hash")
    if stored is not None and stored != design_hash(design).hex():
        raise ValueError("design hash mismatch: file is corrupt or was edited")
    return design


def save_design(design: CompressionDesign, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(design_to_dict(design)))
    return path


def load_design(path: str | Path) -> CompressionDesign:
    return design_from_dict(json.loads(Path(path).read_text()))
