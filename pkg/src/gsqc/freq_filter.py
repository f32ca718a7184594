"""Compression design restricted to frequency-domain graph filters.

The sampler is ``Psi = I_S U F U^T`` for a diagonal filter ``F`` and a node
subset ``S``; the node set, level counts and filter are optimized in turn.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .designs import CompressionDesign, finalize_design
from .graph import Graph, SpectralGraph, normalized_laplacian
from .signal_model import SignalModel, mmse_estimator, mmse_floor
from .unconstrained import BitBudget

__all__ = [
    "FreqFilterDesign",
    "PolyFit",
    "filter_matrices",
    "p3_objective",
    "greedy_set_and_bits",
    "update_filter_coordinate",
    "optimize_filter",
    "design_frequency_domain",
    "fit_polynomial_filter",
    "apply_polynomial_filter",
    "filtered_sampler",
]

log = logging.getLogger(__name__)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _kappa(eta: float) -> float:
    # G_kk = kappa X_kk / M_k^2 once supports are calibrated to the filtered signal
    return 2.0 * eta * eta / 3.0


def filter_matrices(model: SignalModel, filter_diag) -> tuple[np.ndarray, np.ndarray]:
    """``X = U F Lambda~ F U^T`` and the task matrix ``H = U F diag(sigma^4, 0) F U^T``."""
    f = np.asarray(filter_diag, dtype=float).reshape(-1)
    if f.size != model.n:
        raise ValueError(f"filter needs {model.n} entries, got {f.size}")
    u = model.sg.eigvecs
    f2 = f * f
    x = (u * (f2 * model.spectrum)) @ u.T
    h = (u * (f2 * model.task_spectrum)) @ u.T
    return 0.5 * (x + x.T), 0.5 * (h + h.T)


def filtered_sampler(model: SignalModel, filter_diag, nodes) -> np.ndarray:
    """Rows ``nodes`` of ``U F U^T``."""
    u = model.sg.eigvecs
    f = np.asarray(filter_diag, dtype=float)
    return (u[list(nodes)] * f) @ u.T


def _inner(x, nodes, levels, kappa):
    xs = x[np.ix_(nodes, nodes)]
    return xs + np.diag(kappa * np.diag(xs) / np.asarray(levels, dtype=float) ** 2)


def p3_objective(
    model: SignalModel,
    filter_diag,
    nodes,
    levels,
    eta: float = 2.0,
    *,
    g: Optional[np.ndarray] = None,
    check: bool = True,
) -> float:
    """Reconstruction gain ``Tr(Gamma C Psi^T (Psi C Psi^T + G)^{-1} Psi C Gamma^T)``.

    ``nodes`` are the sampled nodes and ``levels`` their level counts; by
    default ``G`` follows from supports calibrated to the filtered samples.
    The MSE is ``mmse_floor + task_energy - objective``. With ``check`` the
    trace form built from ``H`` and ``X`` is compared against the direct
    product and the squared-spectrum variant of ``H`` is logged if it differs.
    """
    nodes = list(nodes)
    if not nodes:
        return 0.0
    x, h = filter_matrices(model, filter_diag)
    if g is None:
        a = _inner(x, nodes, levels, _kappa(eta))
    else:
        a = x[np.ix_(nodes, nodes)] + np.asarray(g, dtype=float)
    hs = h[np.ix_(nodes, nodes)]
    try:
        val = float(np.trace(np.linalg.solve(a, hs)))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular sampled covariance") from exc
    if check:
        est = mmse_estimator(model)
        psi = filtered_sampler(model, filter_diag, nodes)
        from .signal_model import covariance

        cx = covariance(model)
        cross = est.gamma @ cx @ psi.T
        direct = float(np.trace(cross @ np.linalg.solve(a, cross.T)))
        if abs(direct - val) > 1e-6 * max(1.0, abs(direct)):
            log.warning("trace objective %.12g differs from direct %.12g", val, direct)
        f2 = np.asarray(filter_diag, dtype=float) ** 2
        u = model.sg.eigvecs
        h_sq = ((u * (f2 * model.spectrum**2)) @ u.T)[np.ix_(nodes, nodes)]
        alt = float(np.trace(np.linalg.solve(a, h_sq)))
        if abs(alt - direct) > 1e-6 * max(1.0, abs(direct)):
            log.debug("squared-spectrum trace form %.6g vs direct objective %.6g", alt, direct)
    return val


# ------------------------------------------------------- set and bit greedy


def greedy_set_and_bits(
    model: SignalModel,
    filter_diag,
    p: int,
    bits: float,
    eta: float = 2.0,
    *,
    rule: str = "argmax",
    fill: bool = False,
) -> tuple[list[int], np.ndarray]:
    """Jointly grow the sampling set and the level counts one level at a time.

    Every step scores ``q_j = f(M + e_j) - f(M)`` for the candidates (all
    nodes while fewer than ``p`` are sampled, the sampled ones afterwards)
    and takes the largest. ``rule="argmin"`` takes the smallest instead and
    ``rule="per_bit"`` ranks by gain per added bit. Stops before the first increment that
    overflows the budget. Returns the sampled nodes in activation order and
    the per-node level counts.
    """
    if p < 1:
        raise ValueError("need p >= 1")
    if rule not in ("argmax", "argmin", "per_bit"):
        raise ValueError(f"unknown rule {rule!r}")
    n = model.n
    budget = BitBudget(bits)
    kappa = _kappa(eta)
    x, h = filter_matrices(model, filter_diag)
    xd, hd = np.diag(x).copy(), np.diag(h).copy()
    levels = np.ones(n, dtype=object)
    nodes: list[int] = []
    prod = 1
    ainv = np.zeros((0, 0))
    retired = np.zeros(n, dtype=bool)
    while True:
        score = np.full(n, np.inf if rule == "argmin" else -np.inf)
        frozen = len(nodes) >= p
        if nodes:
            ss = np.array(nodes)
            lv = np.array([float(levels[j]) for j in nodes])
            hss = h[np.ix_(ss, ss)]
            w = ainv @ hss @ ainv
            delta = kappa * xd[ss] * (1.0 / (lv + 1.0) ** 2 - 1.0 / lv**2)
            denom = 1.0 + delta * np.diag(ainv)
            score[ss] = -delta * np.diag(w) / denom
        if not frozen:
            out = np.setdiff1d(np.arange(n), nodes)
            a_new = xd[out] * (1.0 + kappa / 4.0)
            if nodes:
                xsc = x[np.ix_(ss, out)]
                z = ainv @ xsc
                s = a_new - np.sum(xsc * z, axis=0)
                num = np.sum(z * (hss @ z), axis=0) - 2.0 * np.sum(h[np.ix_(ss, out)] * z, axis=0) + hd[out]
            else:
                s, num = a_new, hd[out]
            ok = s > 1e-14 * np.maximum(a_new, 1e-300)
            gain = np.where(ok, num / np.where(ok, s, 1.0), 0.0)
            score[out] = gain
        if rule == "per_bit":
            cur = np.array([float(v) for v in levels])
            score = score / np.log2((cur + 1.0) / cur)
        score[retired] = np.inf if rule == "argmin" else -np.inf
        if not np.any(np.isfinite(score)):
            break
        j = int(np.argmin(score) if rule == "argmin" else np.argmax(score))
        m = int(levels[j])
        # a zero-gain increment cannot lower the MSE
        if rule != "argmin" and score[j] <= 0 and m == 1:
            break
        new_prod = prod // m * (m + 1)
        if not budget.fits(new_prod):
            if fill:
                retired[j] = True
                continue
            break
        prod = new_prod
        levels[j] = m + 1
        if m == 1:
            nodes.append(j)
        ss = np.array(nodes)
        lv = np.array([float(levels[k]) for k in nodes])
        a = _inner(x, ss, lv, kappa)
        ainv = np.linalg.inv(a)
        ainv = 0.5 * (ainv + ainv.T)
    out_levels = np.array([int(v) for v in levels], dtype=np.int64) if all(int(v) < 2**62 for v in levels) else levels
    return nodes, out_levels


# ------------------------------------------------------ filter coordinates


def _coordinate_maps(model, filt, nodes, levels, eta, i):
    """Pieces of ``A(t) = C + t B`` and ``H(t) = H0 + t b b^T`` with ``t = f_i^2``."""
    kappa = _kappa(eta)
    f0 = np.array(filt, dtype=float)
    f0[i] = 0.0
    x0, h0 = filter_matrices(model, f0)
    ss = list(nodes)
    lv = np.asarray(levels, dtype=float)
    c = _inner(x0, ss, lv, kappa)
    us = model.sg.eigvecs[ss, i]
    lt = model.spectrum[i]
    b = lt * (np.outer(us, us) + np.diag(kappa * us**2 / lv**2))
    hs = h0[np.ix_(ss, ss)]
    hb = math.sqrt(model.task_spectrum[i]) * us
    return c, b, hs, hb


def _direct_value(c, b, hs, hb, t):
    a = c + t * b
    return float(np.trace(np.linalg.solve(a, hs + t * np.outer(hb, hb))))


def update_filter_coordinate(
    model: SignalModel,
    filter_diag,
    nodes,
    levels,
    i: int,
    eta: float = 2.0,
    *,
    grid: int = 2001,
    tol: float = 1e-10,
) -> float:
    """Best value of filter entry ``i`` with everything else fixed.

    The objective in ``t = f_i^2`` is ``sum_j (a_j + b_j t) / (t + mu_j)``
    from the generalized eigenvectors of ``(C, B)``; it is scanned on
    ``[0, 10 max f]`` and refined by golden-section search. The new value is
    kept only if the directly evaluated objective does not drop.
    """
    filt = np.asarray(filter_diag, dtype=float)
    nodes = list(nodes)
    if not nodes:
        return float(filt[i])
    c, b, hs, hb = _coordinate_maps(model, filt, nodes, levels, eta, i)
    if not np.any(hs) and not np.any(hb):
        return 0.0
    vmax = 10.0 * float(np.max(np.abs(filt))) if np.any(filt) else 10.0
    closed = None
    try:
        from scipy.linalg import eigh

        if np.min(np.linalg.eigvalsh(b)) > 1e-12 * max(1.0, np.max(np.abs(b))):
            mu, v = eigh(c, b)
            aj = np.einsum("ij,ik,kj->j", v, hs, v)
            bj = (v.T @ hb) ** 2
            closed = (mu, aj, bj)
    except (np.linalg.LinAlgError, ValueError):
        closed = None

    if closed is not None:
        mu, aj, bj = closed

        def value(vv):
            t = np.asarray(vv, dtype=float) ** 2
            return np.sum((aj + bj * t[..., None]) / (t[..., None] + mu), axis=-1)

    else:

        def value(vv):
            vv = np.atleast_1d(vv)
            out = np.array([_direct_value(c, b, hs, hb, q * q) for q in vv])
            return out if out.size > 1 else out[0]

    vs = np.linspace(0.0, vmax, grid if closed is not None else 201)
    vals = value(vs)
    k = int(np.argmax(vals))
    lo, hi = vs[max(k - 1, 0)], vs[min(k + 1, vs.size - 1)]
    # golden section on [lo, hi]
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = float(value(x1)), float(value(x2))
    while hi - lo > tol * max(1.0, hi):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = float(value(x2))
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = float(value(x1))
    best = 0.5 * (lo + hi)
    if float(value(best)) < float(vals[k]):
        best = float(vs[k])
    new_direct = _direct_value(c, b, hs, hb, best * best)
    old_direct = _direct_value(c, b, hs, hb, filt[i] ** 2)
    if closed is not None:
        cf = float(value(best))
        if abs(cf - new_direct) > 1e-6 * max(1.0, abs(new_direct)):
            log.warning("coordinate closed form %.10g vs direct %.10g", cf, new_direct)
    if new_direct < old_direct:
        return float(filt[i])
    return float(best)


def optimize_filter(
    model: SignalModel,
    nodes,
    levels,
    eta: float = 2.0,
    epsilon: float = 1e-8,
    t_max: int = 100,
    *,
    coords: str = "sampled",
    init=None,
    history: Optional[list] = None,
) -> np.ndarray:
    """Coordinate ascent over the filter diagonal for a fixed set and allocation.

    ``coords="sampled"`` sweeps the entries whose indices are in the sampled
    set; ``coords="all"`` sweeps all ``N``. The filter is
    rescaled to a unit maximum after each sweep, which leaves the objective
    unchanged. Stops when a sweep moves the filter by at most ``epsilon`` in
    squared norm or after ``t_max`` sweeps. Objective values after each
    coordinate update are appended to ``history`` if given.
    """
    nodes = list(nodes)
    lv = np.asarray(levels, dtype=float)
    if lv.size == model.n and len(nodes) != model.n:
        lv = lv[nodes]
    filt = np.ones(model.n) if init is None else np.array(init, dtype=float)
    if coords == "sampled":
        order = list(nodes)
    elif coords == "all":
        order = list(range(model.n))
    else:
        raise ValueError(f"unknown coords {coords!r}")
    if history is not None:
        history.append(p3_objective(model, filt, nodes, lv, eta, check=False))
    for _ in range(t_max):
        prev = filt.copy()
        for i in order:
            filt[i] = update_filter_coordinate(model, filt, nodes, lv, i, eta)
            if history is not None:
                history.append(p3_objective(model, filt, nodes, lv, eta, check=False))
        top = float(np.max(np.abs(filt)))
        if top > 0:
            filt /= top
            prev = prev / max(float(np.max(np.abs(prev))), 1e-300)
        if float(np.sum((filt - prev) ** 2)) <= epsilon:
            break
    return filt


# ---------------------------------------------------------------- designs


@dataclass(frozen=True, eq=False)
class PolyFit:
    coeffs: np.ndarray
    max_residual: float


@dataclass(frozen=True, eq=False)
class FreqFilterDesign:
    """Filter diagonal, sampled nodes, their levels and the resulting codec design."""

    filter_diag: np.ndarray
    sampling_set: list
    node_levels: np.ndarray
    objective: float
    design: CompressionDesign
    poly: Optional[PolyFit] = None
    trace: list = field(default_factory=list)

    @property
    def predicted_mse(self) -> float:
        return self.design.predicted_mse

    @property
    def phi(self) -> np.ndarray:
        return self.design.phi


def initial_filter(model: SignalModel, init="ones") -> np.ndarray:
    if isinstance(init, str):
        if init == "ones":
            return np.ones(model.n)
        band = np.zeros(model.n)
        band[: model.k] = 1.0
        if init == "band":
            return band
        if init == "whitened":
            band[: model.k] = 1.0 / np.sqrt(model.spectrum[: model.k])
            return band / band.max()
        raise ValueError(f"unknown filter initialization {init!r}")
    f = np.array(init, dtype=float).reshape(-1)
    if f.size != model.n or np.any(f < 0):
        raise ValueError("initial filter must be a nonnegative length-n vector")
    return f


def design_frequency_domain(
    model: SignalModel,
    p: int,
    bits: float,
    eta: float = 2.0,
    epsilon: float = 1e-6,
    t_outer: int = 20,
    *,
    inner_epsilon: float = 1e-8,
    t_inner: int = 100,
    coords: str = "sampled",
    rule: str = "argmax",
    poly_degree: Optional[int] = None,
    dither_seed: int = 0,
    init="ones",
) -> FreqFilterDesign:
    """Alternate set/level greedy and filter ascent, keeping the best iterate.

    ``init`` is the starting filter: ``"ones"`` (identity filter), ``"band"``
    (indicator of the signal band), ``"whitened"`` (band indicator scaled by
    ``Lambda~^{-1/2}``) or an explicit diagonal.
    """
    if not 1 <= p <= model.n:
        raise ValueError(f"p={p} outside [1, {model.n}]")
    filt = initial_filter(model, init)
    best = None
    trace = []

    def consider(f, nodes, lv):
        nonlocal best
        obj = p3_objective(model, f, nodes, lv[nodes] if nodes else [], eta, check=False)
        trace.append(obj)
        if best is None or obj > best[0] + 1e-12 * max(1.0, abs(best[0])):
            best = (obj, f.copy(), list(nodes), lv.copy())

    for _ in range(max(t_outer, 1)):
        nodes, lv = greedy_set_and_bits(model, filt, p, bits, eta, rule=rule)
        consider(filt, nodes, lv)
        if not nodes:
            break
        new = optimize_filter(model, nodes, lv[nodes], eta, inner_epsilon, t_inner, coords=coords, init=filt)
        consider(new, nodes, lv)
        moved = float(np.linalg.norm(new - filt))
        filt = new
        if moved <= epsilon:
            break
    obj, filt, nodes, lv = best
    poly = None
    if poly_degree is not None:
        poly = fit_polynomial_filter(model.sg, filt, poly_degree)
    if nodes:
        psi = filtered_sampler(model, filt, nodes)
        row_levels = np.asarray(lv[nodes], dtype=np.int64)
    else:
        psi = np.zeros((1, model.n))
        psi[0] = model.sg.eigvecs[:, 0]
        row_levels = np.ones(1, dtype=np.int64)
    est = mmse_estimator(model)
    excess = est.task_energy - obj
    design = finalize_design(
        "freq", model, psi, row_levels, eta,
        predicted_excess=excess,
        dither_seed=dither_seed,
        extras={
            "bits": float(bits),
            "filter_diag": filt,
            "sampling_set": list(nodes),
            "poly_coeffs": None if poly is None else poly.coeffs,
        },
    )
    direct = design.extras["model_mse_check"] - mmse_floor(model, check=False)
    if abs(direct - excess) > 1e-6 * max(1.0, abs(excess)):
        log.warning("frequency design excess %.10g vs direct %.10g", excess, direct)
    return FreqFilterDesign(filt, list(nodes), np.asarray(lv, dtype=np.int64), obj, design, poly, trace)


# ------------------------------------------------------------- polynomials


def fit_polynomial_filter(sg: SpectralGraph, filter_diag, k0: int) -> PolyFit:
    """Least-squares degree-``k0`` polynomial in the eigenvalues.

    Fitted in a Chebyshev basis on ``[0, 2]`` and converted to monomial
    coefficients ``beta`` with ``F(lam) = sum beta_k lam^k``; the residual
    is measured with the monomial coefficients.
    """
    if k0 < 0:
        raise ValueError("degree must be >= 0")
    lam = np.asarray(sg.eigvals, dtype=float)
    target = np.asarray(filter_diag, dtype=float)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", np.exceptions.RankWarning if hasattr(np, "exceptions") else Warning)
        cheb = np.polynomial.Chebyshev.fit(lam, target, k0, domain=[0.0, 2.0])
    coeffs = cheb.convert(kind=np.polynomial.Polynomial).coef
    coeffs = np.concatenate([coeffs, np.zeros(k0 + 1 - coeffs.size)])
    resid = np.polynomial.polynomial.polyval(lam, coeffs) - target
    return PolyFit(coeffs, float(np.max(np.abs(resid))) if resid.size else 0.0)


def apply_polynomial_filter(g: Graph, beta, x) -> np.ndarray:
    """``sum_k beta_k L^k x`` by Horner's rule, one product with ``L`` per degree."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if not np.all(np.isfinite(beta)):
        raise ValueError("coefficients must be finite")
    x = np.asarray(x, dtype=float)
    if x.shape[0] != g.n:
        raise ValueError("signal length does not match the graph")
    lap = normalized_laplacian(g)
    if beta.size == 0:
        return np.zeros_like(x)
    y = beta[-1] * x
    for bk in beta[-2::-1]:
        y = lap @ y + bk * x
    return y
