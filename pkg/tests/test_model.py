import numpy as np
import pytest

from spectralcf import graph, model
from spectralcf.errors import DimensionError, NumericError

from conftest import random_interactions


def toy_kernel(ds):
    return graph.conv_kernel(graph.build_graph(ds), None, graph.KERNEL_CLOSED_SPARSE)


class TestConfig:
    def test_factor_width(self):
        cfg = model.ModelConfig(K=3, C=16, F=16)
        assert cfg.factor_width == 16 + 3 * 16

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            model.ModelConfig(K=0, C=4, F=4)
        with pytest.raises(ValueError):
            model.ModelConfig(K=2, C=0, F=4)


class TestInit:
    def test_shapes(self):
        cfg = model.ModelConfig(K=3, C=5, F=4, seed=0)
        params = model.init_params(cfg, n_users=7, n_items=9)
        assert params.X_u0.shape == (7, 5)
        assert params.X_i0.shape == (9, 5)
        assert params.thetas[0].shape == (5, 4)
        for theta in params.thetas[1:]:
            assert theta.shape == (4, 4)
        params.validate_shapes(cfg)

    def test_distribution(self):
        # Large sample so the first two moments are tight.
        cfg = model.ModelConfig(K=1, C=400, F=4, seed=1)
        params = model.init_params(cfg, n_users=400, n_items=4)
        draws = params.X_u0.ravel()
        assert abs(draws.mean() - 0.01) < 2e-4
        assert abs(draws.std() - 0.02) < 2e-4

    def test_deterministic(self):
        cfg = model.ModelConfig(K=2, C=4, F=4, seed=5)
        a = model.init_params(cfg, 3, 4)
        b = model.init_params(cfg, 3, 4)
        assert np.array_equal(a.X_u0, b.X_u0)
        assert np.array_equal(a.X_i0, b.X_i0)
        assert all(np.array_equal(x, y) for x, y in zip(a.thetas, b.thetas))

    def test_seed_changes_draws(self):
        cfg_a = model.ModelConfig(K=2, C=4, F=4, seed=5)
        cfg_b = model.ModelConfig(K=2, C=4, F=4, seed=6)
        assert not np.array_equal(
            model.init_params(cfg_a, 3, 4).X_u0, model.init_params(cfg_b, 3, 4).X_u0
        )


class TestForward:
    def test_output_widths(self):
        rng = np.random.default_rng(0)
        ds = random_interactions(rng)
        cfg = model.ModelConfig(K=3, C=4, F=5, seed=0)
        params = model.init_params(cfg, ds.n_users, ds.n_items)
        factors, trace = model.forward(params, toy_kernel(ds), cfg)
        width = cfg.factor_width
        assert factors.V_u.shape == (ds.n_users, width)
        assert factors.V_i.shape == (ds.n_items, width)
        assert len(trace.xs) == cfg.K + 1

    def test_layers_are_sigmoid_bounded(self):
        rng = np.random.default_rng(1)
        ds = random_interactions(rng)
        cfg = model.ModelConfig(K=2, C=4, F=4, seed=2)
        params = model.init_params(cfg, ds.n_users, ds.n_items)
        _, trace = model.forward(params, toy_kernel(ds), cfg)
        for x in trace.xs[1:]:
            assert (x > 0).all() and (x < 1).all()

    def test_concatenation_order(self):
        rng = np.random.default_rng(2)
        ds = random_interactions(rng)
        cfg = model.ModelConfig(K=2, C=3, F=4, seed=3)
        params = model.init_params(cfg, ds.n_users, ds.n_items)
        factors, trace = model.forward(params, toy_kernel(ds), cfg)
        nu = ds.n_users
        stacked = np.hstack(trace.xs)
        assert np.array_equal(factors.V_u, stacked[:nu])
        assert np.array_equal(factors.V_i, stacked[nu:])
        assert np.array_equal(trace.xs[0][:nu], params.X_u0)

    def test_manual_one_layer(self):
        # Hand-rolled single layer: X1 = sigmoid(kernel @ X0 @ theta).
        rng = np.random.default_rng(3)
        ds = random_interactions(rng)
        kernel = toy_kernel(ds)
        cfg = model.ModelConfig(K=1, C=4, F=4, seed=4)
        params = model.init_params(cfg, ds.n_users, ds.n_items)
        factors, _ = model.forward(params, kernel, cfg)
        x0 = np.vstack([params.X_u0, params.X_i0])
        x1 = model.sigmoid(kernel.matrix @ x0 @ params.thetas[0])
        assert np.allclose(factors.V_u, np.hstack([x0, x1])[: ds.n_users])

    def test_kernel_mismatch(self):
        rng = np.random.default_rng(4)
        ds_a = random_interactions(rng, max_users=4, max_items=4)
        ds_b = random_interactions(rng, max_users=7, max_items=8, min_users=5, min_items=5)
        cfg = model.ModelConfig(K=1, C=3, F=3, seed=0)
        params = model.init_params(cfg, ds_a.n_users, ds_a.n_items)
        with pytest.raises(DimensionError):
            model.forward(params, toy_kernel(ds_b), cfg)

    def test_nonfinite_input_raises(self):
        rng = np.random.default_rng(5)
        ds = random_interactions(rng)
        cfg = model.ModelConfig(K=1, C=3, F=3, seed=0)
        params = model.init_params(cfg, ds.n_users, ds.n_items)
        params.X_u0[0, 0] = np.nan
        with pytest.raises(NumericError):
            model.forward(params, toy_kernel(ds), cfg)


class TestScoring:
    def _factors(self, seed=0):
        rng = np.random.default_rng(seed)
        V_u = rng.standard_normal((4, 6))
        V_i = rng.standard_normal((5, 6))
        return model.FactorTable(V_u=V_u, V_i=V_i)

    def test_score_is_dot_product(self):
        f = self._factors()
        assert f.V_u[2] @ f.V_i[3] == pytest.approx(model.score(f, 2, 3))

    def test_score_index_bounds(self):
        f = self._factors()
        with pytest.raises(DimensionError):
            model.score(f, 4, 0)
        with pytest.raises(DimensionError):
            model.score(f, 0, 5)

    def test_rank_items_excludes_and_orders(self):
        f = self._factors(1)
        exclude = [1, 3]
        ranked = model.rank_items(f, 0, exclude, M=5)
        assert not set(ranked) & set(exclude)
        scores = [model.score(f, 0, i) for i in ranked]
        assert scores == sorted(scores, reverse=True)

    def test_rank_items_tie_break_ascending_index(self):
        V_u = np.ones((1, 2))
        V_i = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])  # all score 1.0
        f = model.FactorTable(V_u=V_u, V_i=V_i)
        assert list(model.rank_items(f, 0, [], M=3)) == [0, 1, 2]

    def test_rank_items_truncates(self):
        f = self._factors(2)
        assert len(model.rank_items(f, 0, [], M=2)) == 2
        assert len(model.rank_items(f, 0, [0, 1, 2, 3], M=10)) == 1


class TestSigmoid:
    def test_extreme_inputs_stay_finite(self):
        out = model.sigmoid(np.array([-1e9, -710.0, 0.0, 710.0, 1e9]))
        assert np.isfinite(out).all()
        assert out[0] == 0.0 or out[0] < 1e-200
        assert out[-1] == 1.0
        assert out[2] == 0.5
