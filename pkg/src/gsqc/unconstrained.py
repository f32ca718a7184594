"""Joint sampling, bit allocation and recovery with an unconstrained sampling matrix."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .designs import CompressionDesign, finalize_design
from .signal_model import SignalModel, mmse_estimator

__all__ = [
    "BitAllocation",
    "BitBudget",
    "level_gradient",
    "greedy_bit_allocation",
    "waterfill_real_bits",
    "WaterfillResult",
    "achievable_excess_mse",
    "realized_excess_mse",
    "solve_alphas",
    "prescribed_diagonal_rotation",
    "construct_sampling_matrix",
    "check_identical_allocation",
    "identical_level",
    "IdenticalCheck",
    "activation_thresholds",
    "active_quantizer_count",
    "design_unconstrained",
    "design_from_allocation",
]

log = logging.getLogger(__name__)


# ------------------------------------------------------------------- budgets


class BitBudget:
    """Total budget ``log2 M`` in bits.

    Integral budgets are checked exactly on the integer product of level
    counts; fractional ones through ``sum log2 M_i <= bits + 1e-12``.
    """

    def __init__(self, bits: float):
        bits = float(bits)
        if not bits >= 0 or not math.isfinite(bits):
            raise ValueError("bit budget must be finite and >= 0")
        self.bits = bits
        self.integral = bits.is_integer()
        self.cap = (1 << int(bits)) if self.integral else None

    def fits(self, product: int) -> bool:
        if self.integral:
            return product <= self.cap
        return math.log2(product) <= self.bits + 1e-12

    def max_level(self, rest: int) -> int:
        """Largest ``m`` with ``rest * m`` within budget (0 if none)."""
        if self.integral:
            return self.cap // rest
        m = int(2.0 ** (self.bits - math.log2(rest)))
        while m > 1 and not self.fits(rest * m):
            m -= 1
        while self.fits(rest * (m + 1)):
            m += 1
        return m if self.fits(rest * max(m, 1)) else 0

    @property
    def levels(self) -> int | float:
        return self.cap if self.integral else 2.0**self.bits


@dataclass(frozen=True)
class BitAllocation:
    """Integer level counts, descending, with the budget they were fit to.

    ``order[i]`` is the sample position of the i-th entry; designs here keep
    the identity order.
    """

    levels: tuple
    bits: float
    order: tuple = ()

    def __post_init__(self):
        lv = tuple(int(m) for m in self.levels)
        if any(m < 1 for m in lv):
            raise ValueError("levels must be >= 1")
        object.__setattr__(self, "levels", lv)
        if not self.order:
            object.__setattr__(self, "order", tuple(range(len(lv))))

    @property
    def p(self) -> int:
        return len(self.levels)

    @property
    def used_bits(self) -> float:
        return float(sum(math.log2(m) for m in self.levels))

    @property
    def active(self) -> int:
        return sum(1 for m in self.levels if m > 1)

    @property
    def product(self) -> int:
        return math.prod(self.levels)

    def as_array(self) -> np.ndarray:
        return np.array(self.levels, dtype=float)


def _padded_sq(singular_vals, p: int) -> np.ndarray:
    lam = np.asarray(singular_vals, dtype=float).reshape(-1)
    if np.any(lam < 0):
        raise ValueError("singular values must be nonnegative")
    out = np.zeros(p)
    q = min(p, lam.size)
    out[:q] = lam[:q] ** 2
    return out


def level_gradient(m, lam_sq, eta: float):
    """Derivative of the per-sample distortion w.r.t. its level count.

    ``g(M) = -12 M eta^2 lam^2 / (3 M^2 + 2 eta^2)^2``.
    """
    e2 = eta * eta
    m = np.asarray(m, dtype=float)
    return -12.0 * m * e2 * lam_sq / (3.0 * m * m + 2.0 * e2) ** 2


def _gkey(m: int, lam_sq: float, e2: float) -> float:
    """Ordering key ``-log|g(m)|``: smaller key means a steeper gradient.

    Works in logs so that huge level counts never overflow.
    """
    return -(math.log(12.0 * e2 * lam_sq) + math.log(m) - 2.0 * (2.0 * math.log(m) + math.log(3.0 + 2.0 * e2 / m / m)))


# ------------------------------------------------------------ greedy levels


def _fast_forward(lam_sq: np.ndarray, e2: float, budget: BitBudget) -> list[int]:
    """A budget-feasible prefix of the greedy increment sequence.

    Greedy fires the increments in ascending order of their running-maximum
    keys, so the state after all increments with such a key <= tau is
    ``m_i = min{m : max_{m' <= m} key_i(m') > tau}``. Bisect tau to the largest
    feasible such state; the heap loop finishes the last few steps.
    """
    idx = np.flatnonzero(lam_sq > 0)

    def state(tau):
        lv = [1] * lam_sq.size
        for i in idx:
            lv[i] = _crossing_level(lam_sq[i], tau, e2)
        return lv

    lo = min(_gkey(1, lam_sq[i], e2) for i in idx) - 1.0
    step = 1.0
    hi = lo + step
    while budget.fits(math.prod(state(hi))):
        lo = hi
        step *= 2.0
        hi = lo + step
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if budget.fits(math.prod(state(mid))):
            lo = mid
        else:
            hi = mid
    return state(lo)


def greedy_bit_allocation(
    singular_vals: Sequence[float],
    p: int,
    bits: float,
    eta: float = 2.0,
    *,
    fill: bool = False,
) -> BitAllocation:
    """Greedy level allocation: add a level where the distortion gradient is steepest.

    Starts from one level everywhere and stops at the first increment that
    would overflow the budget, returning the state before it. With ``fill``,
    a quantizer whose increment overflows is retired and the others keep
    going. Ties go to the lowest index. Runs of consecutive increments of
    the same quantizer are taken in one step by bisection where the gradient
    is monotone.
    """
    if p < 1:
        raise ValueError("need p >= 1")
    budget = BitBudget(bits)
    lam_sq = _padded_sq(singular_vals, p)
    e2 = eta * eta
    m_mono = _mono_level(e2)
    levels = [1] * p
    if np.any(lam_sq > 0):
        levels = _fast_forward(lam_sq, e2, budget)
    prod = math.prod(levels)
    heap = [(_gkey(levels[i], lam_sq[i], e2), i) for i in range(p) if lam_sq[i] > 0]
    heapq.heapify(heap)
    while heap:
        val, i = heapq.heappop(heap)
        m = levels[i]
        rest = prod // m
        cap = budget.max_level(rest)
        if m + 1 > cap:
            if fill:
                continue
            break
        new = m + 1
        if not heap:
            new = cap
        elif new >= m_mono:
            w = heap[0]

            def leads(t):
                return (_gkey(t, lam_sq[i], e2), i) < w

            if leads(new):
                lo, hi = new, cap
                if leads(hi):
                    new = hi
                else:
                    # leads(lo) true, leads(hi) false
                    while hi - lo > 1:
                        mid = (lo + hi) // 2
                        if leads(mid):
                            lo = mid
                        else:
                            hi = mid
                    new = hi
        levels[i] = new
        prod = rest * new
        heapq.heappush(heap, (_gkey(new, lam_sq[i], e2), i))
    return BitAllocation(tuple(levels), bits)


# ------------------------------------------------------------- water-filling


@dataclass(frozen=True)
class WaterfillResult:
    levels: np.ndarray
    beta: float
    excess_mse: float
    used_bits: float


def achievable_excess_mse(singular_vals, levels, eta: float = 2.0) -> float:
    """Excess MSE of the eigen-aligned sampler with (possibly real) levels.

    ``sum_{i<=K} lam_i^2 - sum_{i<=min(P,K)} 3 M_i^2 lam_i^2 / (3 M_i^2 + 2 eta^2)``.
    Single-level samples are credited as in the additive-noise model.
    """
    lam_sq = np.asarray(singular_vals, dtype=float) ** 2
    m2 = np.asarray(levels, dtype=float) ** 2
    q = min(lam_sq.size, m2.size)
    e2 = eta * eta
    gain = np.sum(3.0 * m2[:q] * lam_sq[:q] / (3.0 * m2[:q] + 2.0 * e2))
    return float(max(np.sum(lam_sq) - gain, 0.0))


def realized_excess_mse(singular_vals, alphas) -> float:
    """``sum lam_i^2 - sum alpha_i lam_i^2 / (alpha_i + 1)`` over active samples."""
    lam_sq = np.asarray(singular_vals, dtype=float) ** 2
    a = np.asarray(alphas, dtype=float)
    q = min(lam_sq.size, a.size)
    return float(max(np.sum(lam_sq) - np.sum(a[:q] * lam_sq[:q] / (a[:q] + 1.0)), 0.0))


def _wf_levels_sq(beta: float, lam_sq: np.ndarray, e2: float) -> np.ndarray:
    m2 = np.ones_like(lam_sq)
    on = lam_sq >= 4.0 * beta
    if np.any(on):
        l2 = lam_sq[on]
        disc = np.sqrt(np.maximum(l2 * l2 - 4.0 * beta * l2, 0.0))
        m2[on] = np.maximum(e2 * (l2 - 2.0 * beta + disc) / (3.0 * beta), 1.0)
    return m2


def waterfill_real_bits(singular_vals, p: int, bits: float, eta: float = 2.0, *, tol: float = 1e-12) -> WaterfillResult:
    """Real-valued level counts from the stationarity conditions of the relaxation.

    ``M_i^2 = eta^2 (lam_i^2 - 2 beta + sqrt(lam_i^4 - 4 beta lam_i^2)) / (3 beta)``
    where ``beta <= lam_i^2 / 4``, else ``M_i = 1``; ``beta`` is bisected so
    that ``sum log2 M_i`` meets the budget. The budget function jumps where a
    sample switches on; the remainder of such a jump is given to that sample.
    """
    if p < 1:
        raise ValueError("need p >= 1")
    bits = float(bits)
    if bits < 0:
        raise ValueError("bit budget must be >= 0")
    lam_full = np.asarray(singular_vals, dtype=float)
    lam_sq = _padded_sq(lam_full, p)
    e2 = eta * eta

    def used(beta):
        return 0.5 * float(np.sum(np.log2(_wf_levels_sq(beta, lam_sq, e2))))

    if bits == 0 or not np.any(lam_sq > 0):
        lv = np.ones(p)
        return WaterfillResult(lv, math.inf, achievable_excess_mse(lam_full, lv, eta), 0.0)
    if p == 1:
        lv = np.array([2.0**bits])
        return WaterfillResult(lv, math.nan, achievable_excess_mse(lam_full, lv, eta), bits)

    hi = float(np.max(lam_sq)) / 4.0
    lo = min(1e-12, hi)
    while used(lo) < bits:
        lo *= 1e-3
        if lo < 1e-300:
            raise ArithmeticError("budget too large for the water-filling bracket")
    if used(hi) > bits:
        # even the first sample's switch-on overshoots
        hi = math.nextafter(hi, math.inf)
    # f decreasing: f(lo) >= bits >= f(hi)
    for _ in range(400):
        mid = math.sqrt(lo * hi)
        if used(mid) > bits:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1.0 < 1e-15:
            break
    beta = hi
    m2 = _wf_levels_sq(beta, lam_sq, e2)
    left = bits - 0.5 * float(np.sum(np.log2(m2)))
    if left > tol:
        # a sample toggles inside [lo, hi]; hand it the rest of the budget
        m2_lo = _wf_levels_sq(lo, lam_sq, e2)
        toggled = np.flatnonzero((m2_lo > 1.0) & (m2 <= 1.0))
        if toggled.size:
            j = toggled[0]
        else:
            j = int(np.argmax(m2_lo - m2))
        m2[j] *= 4.0**left
    lv = np.sqrt(m2)
    ub = float(np.sum(np.log2(lv)))
    return WaterfillResult(lv, beta, achievable_excess_mse(lam_full, lv, eta), ub)


# ------------------------------------------------------------------- alphas


def _alpha_objective(a, lam_sq):
    return float(np.sum(lam_sq / (a + 1.0)))


def solve_alphas(
    singular_vals,
    levels,
    eta: float = 2.0,
    *,
    gap_tol: float = 1e-9,
    max_newton: int = 100,
) -> np.ndarray:
    """Minimize ``sum lam_i^2 / (alpha_i + 1)`` over alphas majorizing ``3 M_i^2 / (2 eta^2)``.

    Constraints: ``sum alpha = sum d``, every prefix sum of ``alpha`` at least
    the prefix sum of ``d``, ``alpha >= 0``. Solved by a log-barrier interior
    point method with equality-constrained Newton steps, stopped at a
    relative duality gap ``gap_tol``. The prefix constraints that are tight
    at that point fix block sums, inside which the exact optimum is a
    water-filling; that polished point is returned when it is feasible and
    no worse. The result is in descending order, which never hurts
    feasibility or the objective for descending ``lam``.
    """
    lv = np.asarray(levels, dtype=float).reshape(-1)
    p = lv.size
    if p == 0:
        return np.zeros(0)
    if np.any(np.diff(lv) > 0):
        raise ValueError("levels must be sorted descending")
    lam_sq = _padded_sq(singular_vals, p)
    d = 3.0 * lv**2 / (2.0 * eta * eta)
    if p == 1 or not np.any(lam_sq > 0):
        return d.copy()
    s = float(d.sum())
    bound = np.cumsum(d)[:-1]
    ncons = 2 * p - 1

    # work in prefix sums S_1..S_{P-1}; alpha = D S + s e_P keeps the total exact
    dmat = np.zeros((p, p - 1))
    dmat[np.arange(p - 1), np.arange(p - 1)] = 1.0
    dmat[np.arange(1, p), np.arange(p - 1)] = -1.0
    tail = np.zeros(p)
    tail[-1] = s

    def alphas_of(sv):
        return dmat @ sv + tail

    # strictly feasible start: 0.9 d + 0.1 s e_1
    a0 = 0.9 * d
    a0[0] += 0.1 * s
    sv = np.cumsum(a0)[:-1]

    def barrier(x, t):
        c = x - bound
        a = alphas_of(x)
        if np.any(c <= 0) or np.any(a <= 0):
            return math.inf
        return t * _alpha_objective(a, lam_sq) - np.sum(np.log(c)) - np.sum(np.log(a))

    t = ncons / max(_alpha_objective(a0, lam_sq), 1e-300)
    while True:
        for _ in range(max_newton):
            a = alphas_of(sv)
            c = sv - bound
            ga = -t * lam_sq / (a + 1.0) ** 2 - 1.0 / a
            ha = 2.0 * t * lam_sq / (a + 1.0) ** 3 + 1.0 / a**2
            grad = dmat.T @ ga - 1.0 / c
            hess = dmat.T @ (ha[:, None] * dmat)
            hess[np.diag_indices_from(hess)] += 1.0 / c**2
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            dec = -float(grad @ step)
            if dec / 2.0 <= 1e-10:
                break
            phi0 = barrier(sv, t)
            # largest step keeping every slack positive, then backtrack
            da, dc = dmat @ step, step
            h = 1.0
            for slack, move in ((a, da), (c, dc)):
                neg = move < 0
                if np.any(neg):
                    h = min(h, 0.99 * float(np.min(-slack[neg] / move[neg])))
            while h > 1e-20:
                cand = sv + h * step
                if barrier(cand, t) <= phi0 - 0.25 * h * dec:
                    break
                h *= 0.5
            else:
                break
            sv = cand
        if ncons / t < gap_tol * max(_alpha_objective(alphas_of(sv), lam_sq), 1e-300):
            break
        t *= 10.0
    a_ipm = np.sort(alphas_of(sv))[::-1]
    a_pol = _polish_alphas(a_ipm, lam_sq, d)
    if a_pol is not None and _alpha_objective(a_pol, lam_sq) <= _alpha_objective(a_ipm, lam_sq) * (1 + 1e-12):
        return a_pol
    return a_ipm


def _block_waterfill(lam: np.ndarray, total: float) -> Optional[np.ndarray]:
    # argmin sum lam^2/(a+1) with sum a = total, a >= 0: a_i = max(c lam_i - 1, 0)
    if total <= 0:
        return np.zeros_like(lam)
    if not np.any(lam > 0):
        return None
    order = np.argsort(-lam, kind="stable")
    ls = lam[order]
    out = np.zeros_like(lam)
    for n_on in range(1, ls.size + 1):
        c = (total + n_on) / float(np.sum(ls[:n_on]))
        nxt = ls[n_on] if n_on < ls.size else 0.0
        if c * nxt <= 1.0:
            out[order[:n_on]] = c * ls[:n_on] - 1.0
            return np.maximum(out, 0.0)
    return None


def _polish_alphas(a: np.ndarray, lam_sq: np.ndarray, d: np.ndarray) -> Optional[np.ndarray]:
    """Exact KKT point on the active set guessed from an interior-point iterate.

    Prefix constraints with near-zero slack split the samples into blocks
    whose sums are fixed; inside a block the optimum is a water-filling.
    Returns ``None`` if the guess is not feasible.
    """
    s = float(d.sum())
    cs, bound = np.cumsum(a), np.cumsum(d)
    tight = np.flatnonzero(cs[:-1] - bound[:-1] <= 1e-6 * max(s, 1.0))
    cuts = [0] + [int(i) + 1 for i in tight] + [a.size]
    lam = np.sqrt(lam_sq)
    out = np.empty_like(a)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        total = float(bound[hi - 1] - (bound[lo - 1] if lo else 0.0))
        blk = _block_waterfill(lam[lo:hi], total)
        if blk is None:
            return None
        out[lo:hi] = blk
    ocs = np.cumsum(out)
    tol = 1e-12 * max(s, 1.0) * (1 + np.arange(a.size))
    if np.any(out < 0) or np.any(ocs < bound - tol) or abs(ocs[-1] - s) > tol[-1]:
        return None
    if np.any(np.diff(out) > tol[0]):
        return None
    return out


# -------------------------------------------------------------- Schur-Horn


def prescribed_diagonal_rotation(eigs, targets, *, tol: float = 1e-9) -> np.ndarray:
    """Orthogonal ``U`` with ``diag(U diag(eigs) U^T) = targets``.

    Needs ``eigs`` to majorize ``targets``. Built from at most ``P - 1``
    Givens rotations: the largest open target is placed by rotating the
    smallest open diagonal entry above it against the largest one below it.
    """
    lam = np.asarray(eigs, dtype=float).reshape(-1)
    tg = np.asarray(targets, dtype=float).reshape(-1)
    p = lam.size
    if tg.size != p:
        raise ValueError("eigs and targets differ in length")
    scale = max(1.0, float(np.max(np.abs(lam))) if p else 1.0)
    if p and abs(lam.sum() - tg.sum()) > tol * scale * p:
        raise ValueError("eigenvalue and target sums differ")
    ls, ts = np.sort(lam)[::-1], np.sort(tg)[::-1]
    if np.any(np.cumsum(ls) < np.cumsum(ts) - tol * scale * (1 + np.arange(p))):
        raise ValueError("eigenvalues do not majorize the prescribed diagonal")

    u = np.eye(p)
    diag = lam.copy()
    open_pos = list(range(p))
    placed = {}
    for k in np.argsort(-tg, kind="stable"):
        t = tg[k]
        if len(open_pos) == 1:
            placed[open_pos[0]] = k
            break
        above = [q for q in open_pos if diag[q] >= t]
        if above:
            i = min(above, key=lambda q: diag[q])
        else:
            # only round-off puts every open entry below the largest target
            i = max(open_pos, key=lambda q: diag[q])
        below = [q for q in open_pos if q != i and diag[q] < t]
        if below and abs(diag[i] - t) > 1e-15 * scale:
            j = max(below, key=lambda q: diag[q])
            ai, aj = diag[i], diag[j]
            c2 = min(max((t - aj) / (ai - aj), 0.0), 1.0) if ai > aj else 1.0
            c, s = math.sqrt(c2), math.sqrt(1.0 - c2)
            rot = np.eye(p)
            rot[i, i], rot[i, j], rot[j, i], rot[j, j] = c, s, -s, c
            u = rot @ u
            diag[i] = t
            diag[j] = ai + aj - t
        placed[i] = k
        open_pos.remove(i)
    perm = np.empty(p, dtype=int)
    for pos, k in placed.items():
        perm[k] = pos
    u = u[perm]
    got = np.einsum("ij,j,ij->i", u, lam, u)
    if p and np.max(np.abs(got - tg)) > tol * scale:
        raise ArithmeticError(f"prescribed diagonal residual {np.max(np.abs(got - tg)):.3e}")
    return u


def construct_sampling_matrix(
    model: SignalModel,
    allocation: BitAllocation,
    eta: float = 2.0,
    alphas: Optional[np.ndarray] = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Sampling matrix ``U_psi Xi Lambda~^{-1/2} U^T`` for the given allocation.

    Rows align with ``allocation.levels``; the sample covariance has the
    diagonal ``3 M_i^2 / (2 eta^2)``, so supports calibrated with ``eta``
    make the quantization noise covariance the identity. Returns
    ``(psi, alphas, excess_mse)``.
    """
    est = mmse_estimator(model)
    lv = np.asarray(allocation.levels, dtype=float)
    p = lv.size
    if p > est.order.size:
        raise ValueError("more shaped samples than spectral components")
    if alphas is None:
        alphas = solve_alphas(est.singular_vals, lv, eta)
    d = 3.0 * lv**2 / (2.0 * eta * eta)
    u_psi = prescribed_diagonal_rotation(alphas, d)
    cols = est.order[:p]
    spec = model.spectrum[cols]
    vecs = model.sg.eigvecs[:, cols]
    psi = u_psi @ (np.sqrt(alphas / spec)[:, None] * vecs.T)
    excess = realized_excess_mse(est.singular_vals, alphas)
    return psi, alphas, excess


# -------------------------------------------------------------- corollaries


@dataclass(frozen=True)
class IdenticalCheck:
    holds: bool
    m_a: int
    budget_condition: bool
    gradient_condition: bool
    reason: str


def identical_level(bits: float, p: int) -> int:
    """``floor(M ** (1/p))`` for ``M = 2**bits``."""
    budget = BitBudget(bits)
    m = int(2.0 ** (bits / p))
    m = max(m, 1)
    while m > 1 and not budget.fits(m**p):
        m -= 1
    while budget.fits((m + 1) ** p):
        m += 1
    return m


def check_identical_allocation(singular_vals, p: int, bits: float, eta: float = 2.0) -> IdenticalCheck:
    """Sufficient conditions for the greedy allocation to give every sample ``M_a`` levels.

    ``M_a = floor(M^(1/P))``; the conditions are
    ``M_a^P <= M < M_a^P + M_a^(P-1)`` and ``g_P(M_a - 1) < g_1(M_a)``:
    the weakest sample reaches ``M_a`` before the strongest goes past it.
    """
    lam = np.asarray(singular_vals, dtype=float)
    if p > lam.size:
        raise ValueError("needs p <= number of singular values")
    m_a = identical_level(bits, p)
    budget = BitBudget(bits)
    cond1 = budget.fits(m_a**p) and not budget.fits(m_a**p + m_a ** (p - 1))
    if m_a == 1:
        return IdenticalCheck(False, 1, cond1, False, "M_a = 1: gradient condition undefined")
    e2 = eta * eta
    cond2 = _gkey(m_a - 1, lam[p - 1] ** 2, e2) < _gkey(m_a, lam[0] ** 2, e2)
    if cond1 and cond2:
        reason = "both conditions hold"
    elif not cond1:
        reason = "budget condition fails"
    else:
        reason = "gradient condition fails"
    return IdenticalCheck(cond1 and cond2, m_a, cond1, cond2, reason)


def _mono_level(e2: float) -> int:
    # g(m) is increasing in m from this level on
    return int(math.floor(math.sqrt(2.0 * e2 / 9.0))) + 1


def _crossing_level(lam_sq_j: float, target: float, e2: float) -> int:
    """Smallest ``m >= 1`` whose greedy firing key exceeds ``target``.

    The increment out of level ``m`` fires once the sweep reaches the running
    maximum of the keys up to ``m``; past the monotone level that is the key
    itself, so the tail is found by integer doubling and bisection.
    """
    m0 = _mono_level(e2)
    run = -math.inf
    for m in range(1, m0):
        run = max(run, _gkey(m, lam_sq_j, e2))
        if run > target:
            return m
    if _gkey(m0, lam_sq_j, e2) > target:
        return m0
    lo, hi = m0, 2 * m0
    while _gkey(hi, lam_sq_j, e2) <= target:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _gkey(mid, lam_sq_j, e2) <= target:
            lo = mid
        else:
            hi = mid
    return hi


def activation_thresholds(singular_vals, eta: float = 2.0) -> list[float]:
    """Bits needed before the greedy allocation activates sample ``i``.

    ``l_i = 1 + sum_{j<i} log2 m_{j,i}`` where ``m_{j,i}`` is the level of
    sample ``j`` once its gradient has risen above ``g_i(1)``. Samples with a
    zero singular value are never activated.
    """
    lam_sq = np.asarray(singular_vals, dtype=float) ** 2
    e2 = eta * eta
    out = []
    for i, li in enumerate(lam_sq):
        if li <= 0:
            out.append(math.inf)
            continue
        gi = _gkey(1, li, e2)
        prod = 2
        for j in range(i):
            prod *= _crossing_level(lam_sq[j], gi, e2)
        out.append(math.log2(prod))
    return out


def active_quantizer_count(singular_vals, bits: float, eta: float = 2.0) -> int:
    """Number of samples the greedy allocation activates with ``P = K``."""
    lam_sq = np.asarray(singular_vals, dtype=float) ** 2
    e2 = eta * eta
    budget = BitBudget(bits)
    count = 0
    for i, li in enumerate(lam_sq):
        if li <= 0:
            break
        gi = _gkey(1, li, e2)
        prod = 2
        for j in range(i):
            prod *= _crossing_level(lam_sq[j], gi, e2)
        if not budget.fits(prod):
            break
        count = i + 1
    return count


# ---------------------------------------------------------------- pipeline


def design_from_allocation(
    model: SignalModel,
    allocation: BitAllocation,
    eta: float = 2.0,
    *,
    method: str = "unconstrained",
    dither_seed: int = 0,
) -> CompressionDesign:
    """Shaped sampler for the active part of ``allocation``; inactive rows are idle."""
    est = mmse_estimator(model)
    lv = np.asarray(allocation.levels, dtype=np.int64)
    p = lv.size
    if p > model.n:
        raise ValueError("more samples than nodes")
    act = np.flatnonzero(lv > 1)
    if np.any(np.diff(act) != 1) or (act.size and act[0] != 0):
        raise ValueError("active levels must form a leading block")
    pa = act.size
    psi = np.zeros((p, model.n))
    alphas = np.zeros(p)
    excess = float(np.sum(est.singular_vals**2))
    if pa:
        sub = BitAllocation(tuple(int(m) for m in lv[:pa]), allocation.bits)
        psi[:pa], alphas[:pa], excess = construct_sampling_matrix(model, sub, eta)
    if pa < p:
        # idle rows: leftover eigen-directions, preferring ones with signal
        rest = [int(j) for j in est.order[pa:]] + [j for j in range(model.k, model.n)]
        rest = [j for j in rest if model.spectrum[j] > 0] + [j for j in rest if model.spectrum[j] <= 0]
        for r, j in zip(range(pa, p), rest):
            psi[r] = model.sg.eigvecs[:, j]
    design = finalize_design(
        method, model, psi, lv, eta,
        predicted_excess=excess,
        alphas=alphas,
        dither_seed=dither_seed,
        extras={"bits": allocation.bits, "active": pa},
    )
    check = design.extras["model_mse_check"] - (design.predicted_mse - design.predicted_excess_mse)
    if abs(check - excess) > 1e-6 * max(1.0, excess):
        log.warning("excess mse mismatch: closed form %.10g, direct %.10g", excess, check)
    return design


def design_unconstrained(
    model: SignalModel,
    p: int,
    bits: float,
    eta: float = 2.0,
    *,
    dither_seed: int = 0,
    fill: bool = False,
) -> CompressionDesign:
    """Greedy allocation, shaped sampling matrix, calibrated quantizers, optimal recovery."""
    if not 1 <= p <= model.n:
        raise ValueError(f"p={p} outside [1, {model.n}]")
    est = mmse_estimator(model)
    alloc = greedy_bit_allocation(est.singular_vals, p, bits, eta, fill=fill)
    return design_from_allocation(model, alloc, eta, dither_seed=dither_seed)
