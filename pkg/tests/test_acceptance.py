"""Acceptance checks with pinned tolerances; each prints one PASS/FAIL line.

Run directly (``python tests/test_acceptance.py``) or through pytest, where the
lines are also collected into the terminal summary.
"""

import itertools
import math
import sys
import time

import numpy as np
import pytest

from gsqc.bench.baselines import baseline_identical, baseline_separate
from gsqc.bench.experiment import evaluate, evaluate_mmse, fig2_study
from gsqc.codec import CompressedSignal, compress, decompress, pack_indices, payload_bits, unpack_indices
from gsqc.freq_filter import design_frequency_domain, greedy_set_and_bits, p3_objective, update_filter_coordinate
from gsqc.graph import eigendecompose, random_geometric_graph
from gsqc.quantization import QuantizerBank, index_to_value, quantize_vector_dithered
from gsqc.signal_model import SignalModel, db_to_power, inverse_eigenvalue_variances, mmse_floor, sample_signal
from gsqc.unconstrained import (
    active_quantizer_count,
    design_unconstrained,
    greedy_bit_allocation,
    prescribed_diagonal_rotation,
    solve_alphas,
)

RESULTS = {}
TRIALS = 1000
SEED = 0


def report(num, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}"
    RESULTS[num] = line
    print(line, flush=True)
    return ok


def make_model(n, radius, k, noise_db=-30.0, seed=0):
    sg = eigendecompose(random_geometric_graph(n, radius, seed))
    return SignalModel(sg, k, inverse_eigenvalue_variances(sg, k), db_to_power(noise_db))


_BENCH = {}


def bench_model():
    if "model" not in _BENCH:
        _BENCH["model"] = make_model(100, 0.2, 20)
    return _BENCH["model"]


def joint_row(bits):
    key = ("joint", bits)
    if key not in _BENCH:
        m = bench_model()
        _BENCH[key] = evaluate(design_unconstrained(m, m.k, bits), m, TRIALS, SEED)
    return _BENCH[key]


def paired_se(a, b):
    return float(np.std(a.errors - b.errors, ddof=1) / math.sqrt(a.trials))


def check_1():
    m = bench_model()
    t0 = time.perf_counter()
    r = joint_row(40)
    gap = r.mse_empirical - mmse_floor(m)
    return report(
        1, gap < 0.05,
        f"joint MSE - MMSE at log2M=40 = {gap:.4f} (need < 0.05; predicted gap {r.mse_predicted - mmse_floor(m):.4f}, "
        f"{time.perf_counter() - t0:.1f}s)",
    )


def check_2():
    m = bench_model()
    joint = joint_row(60)
    mmse = evaluate_mmse(m, TRIALS, SEED)
    ident = evaluate(baseline_identical(m, m.k, 60), m, TRIALS, SEED)
    sep = evaluate(baseline_separate(m, m.k, 60), m, TRIALS, SEED)
    ok1 = mmse.mse_empirical <= joint.mse_empirical + 3 * paired_se(joint, mmse)
    ok2 = joint.mse_empirical <= ident.mse_empirical + 3 * paired_se(ident, joint)
    ok3 = joint.mse_empirical <= sep.mse_empirical + 3 * paired_se(sep, joint)
    return report(
        2, ok1 and ok2 and ok3,
        f"MMSE {mmse.mse_empirical:.4f} <= joint {joint.mse_empirical:.4f} <= identical {ident.mse_empirical:.4f}; "
        f"joint <= separate {sep.mse_empirical:.4f} (3 SE slack)",
    )


def check_3():
    m = make_model(50, 0.3, 10)
    parts, ok = [], True
    for bits in (40, 60):
        f = design_frequency_domain(m, m.k, bits)
        u = design_unconstrained(m, m.k, bits)
        rf = evaluate(f.design, m, TRIALS, SEED)
        ru = evaluate(u, m, TRIALS, SEED)
        rel = (rf.mse_empirical - ru.mse_empirical) / ru.mse_empirical
        ok &= abs(rel) <= 0.10
        parts.append(f"log2M={bits}: freq {rf.mse_empirical:.4f} vs unconstrained {ru.mse_empirical:.4f} ({100 * rel:+.1f}%)")
    return report(3, ok, "; ".join(parts) + " (need within 10%)")


def check_4():
    res = fig2_study(instances=30, k=10, budgets=(10, 20), eta=2.0, seed=SEED)
    med = {b: float(np.median([r["relative_gap"] for r in res if r["log2M"] == b])) for b in (10.0, 20.0)}
    ok = med[10.0] < 0.15 and med[20.0] < 0.05
    return report(4, ok, f"median relative gap {med[10.0]:.4f} at log2M=10 (need < 0.15), {med[20.0]:.4f} at log2M=20 (need < 0.05)")


def check_5():
    # 1000 channels x 1000 trials through the codec's dither stream
    channels, trials = 1000, 1000
    m, g = 8, 2.0
    bank = QuantizerBank(np.full(channels, m), np.full(channels, g), 2.0, dither_seed=7)
    d = 2 * g / m
    rng = np.random.default_rng(5)
    err = np.empty((trials, channels))
    for t in range(trials):
        y = rng.uniform(-g + d / 2, g - d / 2, channels)
        idx = quantize_vector_dithered(y, bank, t)
        err[t] = index_to_value(idx, bank.levels, bank.supports) - y
    n = err.size
    var, mean = float(err.var()), float(err.mean())
    sigma = math.sqrt(d * d / 6)
    ok = abs(var / (d * d / 6) - 1) <= 0.02 and abs(mean) < 4 * sigma / math.sqrt(n)
    return report(5, ok, f"variance/(d^2/6) = {var / (d * d / 6):.4f} (need within 2%), |mean| = {abs(mean):.2e} (need < {4 * sigma / math.sqrt(n):.2e}), n = {n}")


def _alpha_obj(a, lam):
    return np.sum(lam**2 / (a + 1.0), axis=-1)


def check_6():
    rng = np.random.default_rng(4)
    gap_a = -math.inf
    for _ in range(10):
        lam = np.sort(rng.uniform(0.05, 3.0, 2))[::-1]
        lv = np.sort(rng.integers(2, 12, 2))[::-1].astype(float)
        dd = 3 * lv**2 / 8
        a = solve_alphas(lam, lv, 2.0)
        a1 = np.linspace(dd[0], dd.sum(), 2_000_001)
        best = _alpha_obj(np.stack([a1, dd.sum() - a1], axis=1), lam).min()
        gap_a = max(gap_a, float(_alpha_obj(a, lam) - best))

    m = make_model(8, 0.7, 3, noise_db=-20, seed=3)
    f = np.ones(m.n)
    nodes, lv = greedy_set_and_bits(m, f, 2, 4.0)
    got = p3_objective(m, f, nodes, lv[nodes], check=False)
    opt = 0.0
    for size in (1, 2):
        for s in itertools.combinations(range(m.n), size):
            for ms in itertools.product(range(2, 17), repeat=size):
                if math.prod(ms) <= 16:
                    opt = max(opt, p3_objective(m, f, s, ms, check=False))
    ratio = got / opt

    fr = np.random.default_rng(1).uniform(0.2, 1.0, m.n)
    s, ls = [0, 3, 6], [4, 2, 3]
    gap_c = -math.inf
    for i in (0, 2, 5):
        new = update_filter_coordinate(m, fr, s, ls, i)
        trial = fr.copy()
        vals = []
        for v in np.linspace(0.0, 10.0 * fr.max(), 100_001):
            trial[i] = v
            vals.append(p3_objective(m, trial, s, ls, check=False))
        trial[i] = new
        gap_c = max(gap_c, max(vals) - p3_objective(m, trial, s, ls, check=False))
    ok = gap_a < 1e-6 and (opt - got < 1e-9 or ratio >= 0.9) and gap_c < 1e-6
    return report(
        6, ok,
        f"solve_alphas minus grid optimum {gap_a:.2e}; set/bit greedy ratio {ratio:.4f} (gap {opt - got:.2e}); "
        f"grid optimum minus filter coordinate {gap_c:.2e} (negative = better than grid)",
    )


def check_7():
    rng = np.random.default_rng(8)
    diag_err = unit_err = 0.0
    for _ in range(200):
        p = int(rng.integers(1, 20))
        lam = np.sort(rng.uniform(0.05, 3.0, p))[::-1]
        lv = np.sort(rng.integers(1, 30, p))[::-1].astype(float)
        dd = 3 * lv**2 / 8
        a = solve_alphas(lam, lv, 2.0)
        u = prescribed_diagonal_rotation(a, dd)
        diag_err = max(diag_err, float(np.max(np.abs(np.einsum("ij,j,ij->i", u, a, u) - dd))))
        unit_err = max(unit_err, float(np.max(np.abs(u @ u.T - np.eye(p)))))
    return report(7, diag_err < 1e-9 and unit_err < 1e-10, f"max diagonal residual {diag_err:.2e}, max unitarity error {unit_err:.2e} over 200 pairs")


def check_8():
    rng = np.random.default_rng(11)
    mismatches = 0
    for _ in range(100):
        k = int(rng.integers(2, 11))
        lam = np.sort(np.abs(rng.standard_normal(k)))[::-1] + 1e-3
        bits = int(rng.integers(1, 40))
        mismatches += active_quantizer_count(lam, bits) != greedy_bit_allocation(lam, k, bits).active
    return report(8, mismatches == 0, f"{mismatches} mismatches between P* and the greedy active count on 100 instances")


def check_9():
    budgets = (20, 40, 60, 80, 100, 120)
    rows = [joint_row(b) for b in budgets]
    bad = []
    for (b0, r0), (b1, r1) in zip(zip(budgets, rows), zip(budgets[1:], rows[1:])):
        if r1.mse_empirical > r0.mse_empirical + 2 * paired_se(r1, r0):
            bad.append(f"{b0}->{b1}")
    vals = ", ".join(f"{r.mse_empirical:.4f}" for r in rows)
    return report(9, not bad, f"joint MSE over log2M {budgets}: {vals}" + (f"; increases at {bad}" if bad else ""))


def check_10():
    m = make_model(40, 0.35, 8, noise_db=-30)
    over = mismatch = 0
    for bits in (0.0, 3.5, 12.0, 25.0, 60.0, 97.3):
        d = design_unconstrained(m, m.k, bits)
        for t in range(20):
            x, _ = sample_signal(m, 1000 * t + 1)
            cs = compress(d, x, t)
            raw = cs.to_bytes()
            over += math.prod(cs.levels) > 2.0**bits * (1 + 1e-12) or cs.payload_bitlen > math.ceil(bits)
            back = CompressedSignal.from_bytes(raw)
            mismatch += back.to_bytes() != raw or compress(d, x, t).to_bytes() != raw
            mismatch += not np.array_equal(decompress(d, back)[1], decompress(d, cs)[1])
    rng = np.random.default_rng(3)
    pack_bad = 0
    for _ in range(10_000):
        levels = [int(v) for v in rng.integers(1, 5000, int(rng.integers(1, 10)))]
        idx = [int(rng.integers(lv)) for lv in levels]
        v = pack_indices(idx, levels)
        pack_bad += unpack_indices(v, levels) != idx or v.bit_length() > payload_bits(levels)
    ok = over == 0 and mismatch == 0 and pack_bad == 0
    return report(10, ok, f"{over} budget overruns, {mismatch} round-trip mismatches, {pack_bad} pack/unpack failures")


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9, check_10]


@pytest.mark.parametrize("check", CHECKS, ids=[f"criterion_{i}" for i in range(1, 11)])
def test_criterion(check):
    assert check()


if __name__ == "__main__":
    ok = [c() for c in CHECKS]
    sys.exit(0 if all(ok) else 1)
