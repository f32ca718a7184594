import itertools

import numpy as np
import pytest

from gsqc.bench.baselines import _node_gain
from gsqc.freq_filter import (
    apply_polynomial_filter,
    design_frequency_domain,
    filter_matrices,
    filtered_sampler,
    fit_polynomial_filter,
    greedy_set_and_bits,
    optimize_filter,
    p3_objective,
    update_filter_coordinate,
)
from gsqc.graph import eigendecompose, normalized_laplacian
from gsqc.signal_model import SignalModel, covariance, mmse_estimator, mmse_floor
from gsqc.unconstrained import BitAllocation, BitBudget, design_from_allocation

from conftest import geometric_model, ring_graph


@pytest.fixture(scope="module")
def tiny():
    return geometric_model(n=8, radius=0.7, seed=3, k=3, noise_db=-20)


def brute_force_objective(model, p, bits, eta=2.0):
    """Best ``(S, M)`` with ``|S| <= p`` and ``prod M <= 2**bits`` by enumeration."""
    cap = int(2**bits)
    f = np.ones(model.n)
    best = (0.0, None)
    for size in range(1, p + 1):
        for nodes in itertools.combinations(range(model.n), size):
            for lv in itertools.product(range(2, cap + 1), repeat=size):
                if np.prod(lv) > cap:
                    continue
                val = p3_objective(model, f, nodes, lv, eta, check=False)
                if val > best[0]:
                    best = (val, (nodes, lv))
    return best


class TestObjective:
    def test_identity_filter_all_nodes_no_noise_recovers_task_energy(self, small_model):
        # with G = 0 and S = all nodes the samples are the full observation
        n = small_model.n
        val = p3_objective(small_model, np.ones(n), range(n), np.ones(n), g=np.zeros((n, n)))
        assert val == pytest.approx(mmse_estimator(small_model).task_energy, rel=1e-9)
        mse = mmse_floor(small_model) + mmse_estimator(small_model).task_energy - val
        assert mse == pytest.approx(mmse_floor(small_model), rel=1e-8)

    def test_huge_quantization_noise_gives_zero(self, small_model):
        n = small_model.n
        val = p3_objective(small_model, np.ones(n), range(n), np.ones(n), g=1e12 * np.eye(n))
        assert abs(val) < 1e-9

    def test_matches_node_subset_gain(self, small_model):
        x = covariance(small_model)
        u = small_model.sg.eigvecs
        h = (u * small_model.task_spectrum) @ u.T
        nodes = [0, 4, 9, 17]
        val = p3_objective(small_model, np.ones(small_model.n), nodes, [2] * 4, g=np.zeros((4, 4)))
        assert val == pytest.approx(_node_gain(h, x, nodes), rel=1e-9)

    def test_trace_form_equals_direct_product(self, small_model, rng):
        f = rng.uniform(0.1, 1.0, small_model.n)
        nodes = [1, 5, 7]
        lv = [3, 2, 5]
        val = p3_objective(small_model, f, nodes, lv, check=False)
        est = mmse_estimator(small_model)
        psi = filtered_sampler(small_model, f, nodes)
        cross = est.gamma @ covariance(small_model) @ psi.T
        x, _ = filter_matrices(small_model, f)
        a = x[np.ix_(nodes, nodes)] + np.diag((8 / 3) * np.diag(x)[nodes] / np.array(lv, float) ** 2)
        direct = np.trace(cross @ np.linalg.solve(a, cross.T))
        assert val == pytest.approx(direct, rel=1e-9)

    def test_empty_set(self, small_model):
        assert p3_objective(small_model, np.ones(small_model.n), [], []) == 0.0

    def test_filter_length_checked(self, small_model):
        with pytest.raises(ValueError):
            filter_matrices(small_model, np.ones(3))


class TestGreedySetAndBits:
    def test_one_bit_picks_best_single_node(self, tiny):
        f = np.ones(tiny.n)
        nodes, lv = greedy_set_and_bits(tiny, f, 3, 1.0)
        scores = [p3_objective(tiny, f, [j], [2], check=False) for j in range(tiny.n)]
        assert nodes == [int(np.argmax(scores))]
        assert lv[nodes[0]] == 2
        assert np.sum(lv > 1) == 1

    def test_close_to_brute_force(self, tiny):
        f = np.ones(tiny.n)
        nodes, lv = greedy_set_and_bits(tiny, f, 2, 4.0)
        got = p3_objective(tiny, f, nodes, lv[nodes], check=False)
        opt, arg = brute_force_objective(tiny, 2, 4.0)
        ratio = got / opt
        print(f"greedy/brute-force objective ratio {ratio:.4f} (greedy {nodes} {lv[nodes]}, best {arg})")
        assert got <= opt + 1e-9
        assert opt - got < 1e-9 or ratio >= 0.9

    @pytest.mark.parametrize("p,bits", [(1, 3.0), (2, 5.5), (3, 7.0), (8, 20.0)])
    def test_limits(self, tiny, p, bits):
        nodes, lv = greedy_set_and_bits(tiny, np.ones(tiny.n), p, bits)
        assert len(nodes) <= p
        assert len(set(nodes)) == len(nodes)
        assert BitBudget(bits).fits(int(np.prod([int(v) for v in lv])))
        assert set(np.flatnonzero(lv > 1)) == set(nodes)

    def test_isotropic_samples_every_node(self):
        sg = eigendecompose(ring_graph(6))
        model = SignalModel(sg, 6, np.ones(6), 1e-3)
        nodes, lv = greedy_set_and_bits(model, np.ones(6), 6, 40.0)
        assert sorted(nodes) == list(range(6))

    def test_argmin_rule_runs(self, tiny):
        nodes, lv = greedy_set_and_bits(tiny, np.ones(tiny.n), 2, 3.0, rule="argmin")
        assert len(nodes) <= 2

    def test_bad_arguments(self, tiny):
        with pytest.raises(ValueError):
            greedy_set_and_bits(tiny, np.ones(tiny.n), 0, 3.0)
        with pytest.raises(ValueError):
            greedy_set_and_bits(tiny, np.ones(tiny.n), 2, 3.0, rule="median")


class TestFilterCoordinate:
    @pytest.mark.parametrize("i", [0, 2, 5])
    def test_against_dense_grid(self, tiny, rng, i):
        f = rng.uniform(0.2, 1.0, tiny.n)
        nodes = [0, 3, 6]
        lv = [4, 2, 3]
        new = update_filter_coordinate(tiny, f, nodes, lv, i)
        grid = np.linspace(0.0, 10.0 * f.max(), 100_001)
        trial = f.copy()
        vals = np.empty(grid.size)
        for q, v in enumerate(grid):
            trial[i] = v
            vals[q] = p3_objective(tiny, trial, nodes, lv, check=False)
        trial[i] = new
        got = p3_objective(tiny, trial, nodes, lv, check=False)
        assert got >= vals.max() - 1e-6 * max(1.0, abs(vals.max()))

    def test_never_decreases(self, tiny, rng):
        for _ in range(10):
            f = rng.uniform(0.0, 1.0, tiny.n)
            nodes = list(rng.choice(tiny.n, 3, replace=False))
            lv = list(rng.integers(2, 6, 3))
            i = int(rng.integers(tiny.n))
            before = p3_objective(tiny, f, nodes, lv, check=False)
            f2 = f.copy()
            f2[i] = update_filter_coordinate(tiny, f, nodes, lv, i)
            assert p3_objective(tiny, f2, nodes, lv, check=False) >= before - 1e-12

    def test_empty_set_keeps_value(self, tiny):
        f = np.full(tiny.n, 0.3)
        assert update_filter_coordinate(tiny, f, [], [], 2) == 0.3


class TestOptimizeFilter:
    def test_zero_sweeps_returns_init(self, tiny):
        init = np.linspace(0.1, 1.0, tiny.n)
        out = optimize_filter(tiny, [0, 1], [2, 2], t_max=0, init=init)
        np.testing.assert_array_equal(out, init)

    @pytest.mark.parametrize("coords", ["sampled", "all"])
    def test_history_monotone(self, tiny, coords):
        hist = []
        optimize_filter(tiny, [1, 4, 6], [3, 2, 2], t_max=5, coords=coords, history=hist)
        assert len(hist) > 1
        assert np.all(np.diff(hist) >= -1e-10 * max(1.0, max(hist)))

    def test_improves_on_identity(self):
        m = geometric_model(n=6, radius=0.8, seed=1, k=3, noise_db=-20)
        nodes, lv = [0, 2], [3, 2]
        out = optimize_filter(m, nodes, lv, coords="all")
        base = p3_objective(m, np.ones(6), nodes, lv, check=False)
        got = p3_objective(m, out, nodes, lv, check=False)
        assert got >= base - 1e-12
        assert np.max(np.abs(out)) == pytest.approx(1.0)

    def test_unknown_coords(self, tiny):
        with pytest.raises(ValueError):
            optimize_filter(tiny, [0], [2], coords="some")


class TestDesign:
    def test_terminates_small(self):
        m = geometric_model(n=6, radius=0.8, seed=2, k=3, noise_db=-20)
        d = design_frequency_domain(m, 2, 3.0, t_outer=3, t_inner=10)
        assert len(d.sampling_set) <= 2
        assert d.trace and d.objective == pytest.approx(max(d.trace))
        one_shot = greedy_set_and_bits(m, np.ones(6), 2, 3.0)
        base = p3_objective(m, np.ones(6), one_shot[0], one_shot[1][one_shot[0]], check=False)
        assert d.objective >= base - 1e-12

    def test_prediction_matches_model_check(self, tiny):
        d = design_frequency_domain(tiny, 3, 6.0, t_outer=3, t_inner=10)
        assert d.predicted_mse == pytest.approx(d.design.extras["model_mse_check"], rel=1e-6)
        assert d.predicted_mse >= mmse_floor(tiny) - 1e-12

    def test_zero_budget(self, tiny):
        d = design_frequency_domain(tiny, 2, 0.5, t_outer=2, t_inner=5)
        assert d.sampling_set == []
        assert d.predicted_mse == pytest.approx(mmse_floor(tiny) + mmse_estimator(tiny).task_energy, rel=1e-9)

    @pytest.mark.slow
    def test_class_inclusion_same_allocation(self):
        # the unconstrained sampler given the same level counts does at least as well
        for s in range(50):
            rng = np.random.default_rng(s)
            m = geometric_model(n=8, radius=0.7, seed=s, k=3, noise_db=-20)
            p, b = int(rng.integers(1, 4)), int(rng.integers(2, 12))
            f = design_frequency_domain(m, p, b, t_outer=5, t_inner=20)
            lv = sorted((int(v) for v in f.node_levels[f.sampling_set]), reverse=True)
            if not lv:
                continue
            u = design_from_allocation(m, BitAllocation(tuple(lv), b))
            assert u.predicted_mse <= f.predicted_mse + 1e-9

    def test_bad_p(self, tiny):
        with pytest.raises(ValueError):
            design_frequency_domain(tiny, 0, 3.0)

    @pytest.mark.parametrize("init", ["band", "whitened"])
    def test_other_inits(self, tiny, init):
        d = design_frequency_domain(tiny, 2, 4.0, t_outer=2, t_inner=5, init=init)
        assert np.isfinite(d.predicted_mse)

    def test_bad_init(self, tiny):
        with pytest.raises(ValueError):
            design_frequency_domain(tiny, 2, 4.0, init="flat")
        with pytest.raises(ValueError):
            design_frequency_domain(tiny, 2, 4.0, init=-np.ones(tiny.n))


class TestPolynomial:
    def test_constant(self, tiny):
        fit = fit_polynomial_filter(tiny.sg, np.full(tiny.n, 0.7), 0)
        np.testing.assert_allclose(fit.coeffs, [0.7], atol=1e-12)
        assert fit.max_residual < 1e-12

    def test_identity_in_eigenvalues(self, tiny):
        fit = fit_polynomial_filter(tiny.sg, tiny.sg.eigvals, 1)
        np.testing.assert_allclose(fit.coeffs, [0.0, 1.0], atol=1e-10)

    def test_interpolates_at_full_degree(self, rng):
        m = geometric_model(n=6, radius=0.8, seed=19, k=3)
        lam = m.sg.eigvals
        assert np.min(np.diff(lam)) > 1e-3
        target = rng.uniform(0, 1, 6)
        fit = fit_polynomial_filter(m.sg, target, 5)
        assert fit.max_residual < 1e-6

    def test_negative_degree(self, tiny):
        with pytest.raises(ValueError):
            fit_polynomial_filter(tiny.sg, np.ones(tiny.n), -1)

    def test_apply_matches_dense(self, tiny, rng):
        beta = rng.standard_normal(4)
        x = rng.standard_normal(tiny.n)
        lap = normalized_laplacian(tiny.sg.graph)
        dense = sum(b * np.linalg.matrix_power(lap, k) for k, b in enumerate(beta))
        np.testing.assert_allclose(apply_polynomial_filter(tiny.sg.graph, beta, x), dense @ x, atol=1e-10)
        lam = tiny.sg.eigvals
        u = tiny.sg.eigvecs
        spectral = u @ (np.polynomial.polynomial.polyval(lam, beta) * (u.T @ x))
        np.testing.assert_allclose(apply_polynomial_filter(tiny.sg.graph, beta, x), spectral, atol=1e-9)

    def test_apply_trivial_and_errors(self, tiny):
        x = np.arange(tiny.n, dtype=float)
        np.testing.assert_allclose(apply_polynomial_filter(tiny.sg.graph, [1.0], x), x)
        lap = normalized_laplacian(tiny.sg.graph)
        np.testing.assert_allclose(apply_polynomial_filter(tiny.sg.graph, [0.0, 1.0], x), lap @ x)
        with pytest.raises(ValueError):
            apply_polynomial_filter(tiny.sg.graph, [np.nan], x)
        with pytest.raises(ValueError):
            apply_polynomial_filter(tiny.sg.graph, [1.0], np.ones(3))
