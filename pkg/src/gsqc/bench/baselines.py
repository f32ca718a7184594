"""Reference schemes the joint designs are compared against."""

from __future__ import annotations

import numpy as np

from ..designs import CompressionDesign, finalize_design
from ..signal_model import SignalModel, covariance, mmse_estimator, mmse_floor
from ..unconstrained import BitAllocation, identical_level, design_from_allocation, greedy_bit_allocation

__all__ = ["baseline_identical", "baseline_separate", "baseline_mmse", "select_nodes"]


def baseline_mmse(model: SignalModel) -> float:
    """Infinite-resolution MMSE, the floor under every bit-limited scheme."""
    return mmse_floor(model)


def baseline_identical(model: SignalModel, p: int, bits: float, eta: float = 2.0, *, dither_seed: int = 0) -> CompressionDesign:
    """Joint shaped sampler with ``floor(M^(1/P))`` levels on every quantizer."""
    if p < 1:
        raise ValueError("need p >= 1")
    if p > mmse_estimator(model).order.size:
        raise ValueError("identical allocation needs p <= K")
    m_a = identical_level(bits, p)
    alloc = BitAllocation((m_a,) * p, bits)
    return design_from_allocation(model, alloc, eta, method="identical", dither_seed=dither_seed)


def _node_gain(h, x, nodes):
    if not nodes:
        return 0.0
    ss = np.array(nodes)
    return float(np.trace(np.linalg.solve(x[np.ix_(ss, ss)], h[np.ix_(ss, ss)])))


def select_nodes(model: SignalModel, p: int) -> list[int]:
    """Greedy node subset maximizing the unquantized linear-MMSE gain ``Tr(H_SS X_SS^{-1})``."""
    if not 1 <= p <= model.n:
        raise ValueError(f"p={p} outside [1, {model.n}]")
    x = covariance(model)
    u = model.sg.eigvecs
    h = (u * model.task_spectrum) @ u.T
    nodes: list[int] = []
    for _ in range(p):
        best, arg = -np.inf, None
        for j in range(model.n):
            if j in nodes:
                continue
            try:
                val = _node_gain(h, x, nodes + [j])
            except np.linalg.LinAlgError:
                continue
            if arg is None or val > best + 1e-15 * max(1.0, abs(best)):
                best, arg = val, j
        if arg is None:
            break
        nodes.append(arg)
    return nodes


def baseline_separate(model: SignalModel, p: int, bits: float, eta: float = 2.0, *, dither_seed: int = 0) -> CompressionDesign:
    """Node selection first, then greedy levels on the raw samples.

    The selected nodes are ranked by ``sqrt(H_pp / X_pp)`` (their share of the
    task signal per unit sample variance) and those scores go through the
    greedy level allocation. The recovery filter is the optimal linear one
    for the quantized node samples.
    """
    nodes = select_nodes(model, p)
    x = covariance(model)
    u = model.sg.eigvecs
    h = (u * model.task_spectrum) @ u.T
    score = np.sqrt(np.maximum(np.diag(h)[nodes], 0.0) / np.diag(x)[nodes])
    rank = np.argsort(-score, kind="stable")
    alloc = greedy_bit_allocation(score[rank], len(nodes), bits, eta)
    rows = [nodes[r] for r in rank]
    psi = np.zeros((len(rows), model.n))
    psi[np.arange(len(rows)), rows] = 1.0
    return finalize_design(
        "separate", model, psi, alloc.levels, eta,
        dither_seed=dither_seed,
        extras={"bits": float(bits), "nodes": rows},
    )
