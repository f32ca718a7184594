"""Load external graphs and signal matrices and fit a bandlimited model to them."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import numpy as np

from ..graph import Graph, SpectralGraph, eigendecompose, gft, load_graph
from ..signal_model import SignalModel

__all__ = ["read_signal_csv", "fit_bandwidth", "fit_model", "ingest_signals"]

log = logging.getLogger(__name__)


def read_signal_csv(path, n: Optional[int] = None) -> np.ndarray:
    """Signal matrix with one column per signal and one row per node.

    A header line is skipped when it does not parse as numbers. If ``n`` is
    given and the matrix arrives transposed (signals as rows), it is flipped.
    """
    path = Path(path)
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError:
        try:
            data = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
        except ValueError as exc:
            raise ValueError(f"malformed signal CSV {path}: {exc}") from None
    if data.size == 0:
        raise ValueError(f"no signals in {path}")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"non-finite entries in {path}")
    if n is not None and data.shape[0] != n:
        if data.shape[1] == n:
            data = data.T
        else:
            raise ValueError(f"signal matrix {data.shape} does not match a graph with {n} nodes")
    return data


def fit_bandwidth(spectral_energy, threshold: float = 0.99) -> int:
    """Smallest K whose leading components hold ``threshold`` of the energy."""
    e = np.asarray(spectral_energy, dtype=float)
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    total = e.sum()
    if total <= 0:
        return 1
    cum = np.cumsum(e) / total
    return int(min(np.searchsorted(cum, threshold - 1e-12) + 1, e.size))


def fit_model(
    sg: SpectralGraph,
    signals: np.ndarray,
    *,
    threshold: float = 0.99,
    bandwidth: Optional[int] = None,
    noise_var: Optional[float] = None,
) -> SignalModel:
    """Bandlimited model from the empirical GFT variances of the signal columns.

    The noise variance defaults to the mean spectral power beyond the fitted
    bandwidth (zero when nothing is left there), floored at a tiny positive
    value so the covariance stays invertible.
    """
    if signals.shape[0] != sg.n:
        raise ValueError(f"signals have {signals.shape[0]} rows, graph has {sg.n} nodes")
    coeffs = gft(sg, signals)
    energy = np.mean(coeffs**2, axis=1)
    k = fit_bandwidth(energy, threshold) if bandwidth is None else int(bandwidth)
    if not 1 <= k <= sg.n:
        raise ValueError(f"bandwidth {k} outside [1, {sg.n}]")
    if noise_var is None:
        tail = energy[k:]
        noise_var = float(tail.mean()) if tail.size else 0.0
    noise_var = max(float(noise_var), 1e-12 * max(float(energy.max()), 1.0))
    prior = np.maximum(energy[:k] - noise_var, 1e-12 * max(float(energy.max()), 1.0))
    log.info("fitted bandwidth K=%d, noise variance %.3g", k, noise_var)
    return SignalModel(sg, k, prior, noise_var)


def ingest_signals(
    graph_path,
    signal_path,
    *,
    threshold: float = 0.99,
    bandwidth: Optional[int] = None,
    noise_var: Optional[float] = None,
) -> tuple[SpectralGraph, np.ndarray, SignalModel]:
    """Graph manifest plus signal CSV to ``(spectral graph, signals, model)``."""
    g = graph_path if isinstance(graph_path, Graph) else load_graph(graph_path)
    sg = eigendecompose(g)
    sig = read_signal_csv(signal_path, sg.n)
    return sg, sig, fit_model(sg, sig, threshold=threshold, bandwidth=bandwidth, noise_var=noise_var)
