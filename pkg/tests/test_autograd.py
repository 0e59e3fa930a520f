import math

import numpy as np
import pytest

from graph2text import autograd as ag
from graph2text.autograd import ParamStore, Tensor, backward, grad_check, no_grad
from graph2text.errors import EmptyPoolError, ShapeError, UsageError


def check_scalar_fn(build, arrays, tol=1e-6, eps=1e-6):
    """Finite-difference oracle for a scalar function of named arrays."""
    store = ParamStore()
    for name, value in arrays.items():
        store.add(name, np.array(value, dtype=np.float64))
    report = grad_check(lambda: build(store), store, eps=eps, tol=tol)
    assert report.passed, report.format()


class TestBasicOps:
    def test_matmul_identity(self):
        m = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        out = ag.matmul(Tensor(np.eye(2)), m)
        assert np.array_equal(out.data, m.data)

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_scale_zero_kills_gradient(self):
        store = ParamStore()
        x = store.add("x", np.array([1.0, -2.0]))
        store.zero_grads()
        loss = ag.reduce_sum(ag.scale(x, 0.0))
        backward(loss)
        assert np.array_equal(x.grad, np.zeros(2))

    def test_concat_shapes(self):
        a = Tensor(np.ones((2, 3)))
        b = Tensor(np.ones((2, 4)))
        assert ag.concat([a, b], axis=1).shape == (2, 7)

    def test_slice_backward_scatters(self):
        store = ParamStore()
        x = store.add("x", np.arange(6.0).reshape(3, 2))
        store.zero_grads()
        backward(ag.reduce_sum(x[1:3]))
        assert np.array_equal(x.grad, np.array([[0, 0], [1, 1], [1, 1.0]]))


class TestSoftmax:
    def test_symmetric(self):
        out = ag.softmax(Tensor(np.array([0.0, 0.0])))
        assert np.allclose(out.data, [0.5, 0.5], atol=1e-15)

    def test_large_inputs_stable(self):
        out = ag.softmax(Tensor(np.array([1000.0, 0.0])))
        assert np.isfinite(out.data).all()
        assert out.data[0] > 1 - 1e-12

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        out = ag.softmax(Tensor(rng.normal(size=(5, 7))), axis=-1)
        assert out.data.min() >= 0
        assert np.abs(out.data.sum(axis=-1) - 1.0).max() < 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        readout = rng.normal(size=4)
        check_scalar_fn(
            lambda s: ag.reduce_sum(ag.mul(ag.softmax(s["x"]), Tensor(readout))),
            {"x": rng.normal(size=4)},
        )


class TestFixedPointExamples:
    def test_layer_norm_constant_vector(self):
        gain = Tensor(np.full(4, 2.0))
        bias = Tensor(np.array([1.0, 2.0, 3.0, 4.0]))
        out = ag.layer_norm(Tensor(np.full((1, 4), 7.0)), gain, bias)
        assert np.allclose(out.data, bias.data, atol=1e-3)

    def test_cross_entropy_confident_model(self):
        logits = np.full((1, 4), -30.0)
        logits[0, 2] = 30.0
        loss = ag.cross_entropy(Tensor(logits), [2])
        assert loss.item() < 1e-12

    def test_cross_entropy_all_ignored(self):
        store = ParamStore()
        logits = store.add("logits", np.zeros((3, 5)))
        store.zero_grads()
        loss = ag.cross_entropy(logits, [7, 7, 7], ignore_id=7)
        assert loss.item() == 0.0
        backward(loss)
        assert np.array_equal(logits.grad, np.zeros((3, 5)))

    def test_cross_entropy_out_of_range(self):
        with pytest.raises(IndexError):
            ag.cross_entropy(Tensor(np.zeros((1, 4))), [9])

    def test_embedding_out_of_range(self):
        with pytest.raises(IndexError):
            ag.embedding_lookup(Tensor(np.zeros((4, 2))), np.array([5]))

    def test_uniform_logits_entropy(self):
        loss = ag.cross_entropy(Tensor(np.zeros((2, 16))), [3, 9])
        assert abs(loss.item() - math.log(16)) < 1e-12


class TestIndexMeanPool:
    def test_single_position_exact_copy(self):
        h = Tensor(np.arange(12.0).reshape(4, 3))
        out = ag.index_mean_pool(h, [2])
        assert np.array_equal(out.data, h.data[2])

    def test_two_equal_rows(self):
        h = Tensor(np.array([[1.0, 2.0], [1.0, 2.0], [9.0, 9.0]]))
        out = ag.index_mean_pool(h, [0, 1])
        assert np.array_equal(out.data, np.array([1.0, 2.0]))

    def test_empty_positions(self):
        with pytest.raises(EmptyPoolError):
            ag.index_mean_pool(Tensor(np.zeros((2, 2))), [])

    def test_gradient(self):
        rng = np.random.default_rng(5)
        w = rng.normal(size=3)
        check_scalar_fn(
            lambda s: ag.reduce_sum(ag.mul(ag.index_mean_pool(s["h"], [0, 2]), Tensor(w))),
            {"h": rng.normal(size=(4, 3))},
        )


class TestCosineCost:
    def test_identical_rows_cost_zero(self):
        a = np.array([[1.0, 2.0, 3.0]])
        out = ag.cosine_cost(Tensor(a), Tensor(a))
        assert abs(out.data[0, 0]) < 1e-12

    def test_opposite_rows_cost_two(self):
        a = np.array([[1.0, -2.0]])
        out = ag.cosine_cost(Tensor(a), Tensor(-a))
        assert abs(out.data[0, 0] - 2.0) < 1e-12

    def test_matches_hand_formula(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=(3, 2))
        b = rng.normal(size=(2, 2))
        out = ag.cosine_cost(Tensor(a), Tensor(b)).data
        for i in range(3):
            for j in range(2):
                expected = 1.0 - a[i] @ b[j] / (
                    np.linalg.norm(a[i]) * np.linalg.norm(b[j]) + 1e-12
                )
                assert abs(out[i, j] - expected) < 1e-12


class TestBackwardContract:
    def test_non_scalar_loss_rejected(self):
        with pytest.raises(ShapeError):
            backward(Tensor(np.zeros(3)))

    def test_double_backward_raises(self):
        store = ParamStore()
        x = store.add("x", np.ones(2))
        store.zero_grads()
        loss = ag.reduce_sum(ag.mul(x, x))
        backward(loss)
        with pytest.raises(UsageError):
            backward(loss)

    def test_sum_of_squares_gradient(self):
        store = ParamStore()
        x = store.add("x", np.array([1.0, -2.0, 3.0]))
        report = grad_check(lambda: ag.reduce_sum(ag.mul(store["x"], store["x"])), store)
        assert report.max_rel_err < 1e-8
        store.zero_grads()
        backward(ag.reduce_sum(ag.mul(x, x)))
        assert np.allclose(x.grad, 2 * x.data)

    def test_constant_function_zero_gradient(self):
        store = ParamStore()
        store.add("x", np.ones(3))
        report = grad_check(lambda: Tensor(5.0), store)
        assert report.max_rel_err == 0.0

    def test_shared_subgraph_accumulates(self):
        store = ParamStore()
        x = store.add("x", np.array([3.0]))
        store.zero_grads()
        y = ag.mul(x, x)                  # x^2
        loss = ag.reduce_sum(ag.add(y, y))  # 2 x^2
        backward(loss)
        assert np.allclose(x.grad, [12.0])

    def test_no_grad_builds_no_graph(self):
        store = ParamStore()
        x = store.add("x", np.ones(2))
        with no_grad():
            out = ag.mul(x, x)
        assert out._backward_fn is None


def _random_op_case(seed: int):
    """One randomly shaped composition exercising broadcast paths."""
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(2, 5)), int(rng.integers(2, 5))
    arrays = {
        "a": rng.normal(size=(n, d)),
        "b": rng.normal(size=(d, n)),
        "bias": rng.normal(size=d),
        "gain": rng.normal(size=d) + 1.5,
    }
    mask = rng.random((n, d)) < 0.3
    w = rng.normal(size=(n, d))

    def build(s):
        x = ag.add(s["a"], s["bias"])           # row broadcast
        x = ag.layer_norm(x, s["gain"], s["bias"])
        x = ag.gelu(x)
        x = ag.masked_fill(x, mask, 0.5)
        y = ag.matmul(x, s["b"])                # (n, n)
        y = ag.softmax(y, axis=-1)
        z = ag.matmul(y, ag.transpose(s["b"]))  # (n, d)
        z = ag.div(z, ag.add(ag.sqrt(ag.reduce_sum(ag.mul(z, z), axis=-1, keepdims=True)), Tensor(1.0)))
        z = ag.mul(z, Tensor(w))
        return ag.reduce_sum(ag.log_softmax(ag.reshape(z, (n * d,)), axis=-1))

    return build, arrays


class TestOpGradientsProperty:
    @pytest.mark.parametrize("seed", range(20))
    def test_random_compositions(self, seed):
        build, arrays = _random_op_case(seed)
        check_scalar_fn(build, arrays, tol=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_attention_op(self, seed):
        rng = np.random.default_rng(seed)
        lq, lk, d = 3, 4, 4
        arrays = {
            "xq": rng.normal(size=(lq, d)),
            "xkv": rng.normal(size=(lk, d)),
            "wq": rng.normal(size=(d, d)) * 0.5,
            "wk": rng.normal(size=(d, d)) * 0.5,
            "wv": rng.normal(size=(d, d)) * 0.5,
            "wo": rng.normal(size=(d, d)) * 0.5,
        }
        readout = rng.normal(size=(lq, d))
        blocked = np.zeros((1, lq, lk), dtype=bool)
        blocked[0, :, -1] = True

        def build(s):
            out = ag.multihead_attention_op(
                s["xq"], s["xkv"], s["wq"], s["wk"], s["wv"], s["wo"], 2, blocked
            )
            return ag.reduce_sum(ag.mul(out, Tensor(readout)))

        check_scalar_fn(build, arrays, tol=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_self_attention_shared_input(self, seed):
        rng = np.random.default_rng(100 + seed)
        n, d = 4, 4
        arrays = {
            "x": rng.normal(size=(n, d)),
            "wq": rng.normal(size=(d, d)) * 0.5,
            "wk": rng.normal(size=(d, d)) * 0.5,
            "wv": rng.normal(size=(d, d)) * 0.5,
            "wo": rng.normal(size=(d, d)) * 0.5,
        }
        readout = rng.normal(size=(n, d))

        def build(s):
            out = ag.multihead_attention_op(
                s["x"], s["x"], s["wq"], s["wk"], s["wv"], s["wo"], 2, None
            )
            return ag.reduce_sum(ag.mul(out, Tensor(readout)))

        check_scalar_fn(build, arrays, tol=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_relation_biased_attention_op(self, seed):
        rng = np.random.default_rng(200 + seed)
        nv, d = 3, 4
        arrays = {"z": rng.normal(size=(nv, d)), "q": rng.normal(size=(nv * nv, d))}
        for name in ("wqs", "wks", "wvs", "wkr", "wvr"):
            arrays[name] = rng.normal(size=(d, d)) * 0.5
        readout = rng.normal(size=(nv, d))

        def build(s):
            out = ag.relation_biased_attention_op(
                s["z"], s["q"], s["wqs"], s["wks"], s["wvs"], s["wkr"], s["wvr"], 2
            )
            return ag.reduce_sum(ag.mul(out, Tensor(readout)))

        check_scalar_fn(build, arrays, tol=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_ffn_op(self, seed):
        rng = np.random.default_rng(300 + seed)
        n, d, h = 3, 4, 5
        arrays = {
            "x": rng.normal(size=(n, d)),
            "w1": rng.normal(size=(d, h)) * 0.5,
            "b1": rng.normal(size=h) * 0.1,
            "w2": rng.normal(size=(h, d)) * 0.5,
            "b2": rng.normal(size=d) * 0.1,
        }
        readout = rng.normal(size=(n, d))

        def build(s):
            out = ag.ffn_op(s["x"], s["w1"], s["b1"], s["w2"], s["b2"])
            return ag.reduce_sum(ag.mul(out, Tensor(readout)))

        check_scalar_fn(build, arrays, tol=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_embedding_and_cross_entropy(self, seed):
        rng = np.random.default_rng(400 + seed)
        ids = rng.integers(0, 5, size=6)
        targets = rng.integers(0, 5, size=6)
        arrays = {"table": rng.normal(size=(5, 4)), "proj": rng.normal(size=(4, 5))}

        def build(s):
            rows = ag.embedding_lookup(s["table"], ids)
            return ag.cross_entropy(ag.matmul(rows, s["proj"]), targets)

        check_scalar_fn(build, arrays, tol=1e-5)

    @pytest.mark.parametrize("seed", range(5))
    def test_cosine_cost_gradients(self, seed):
        rng = np.random.default_rng(500 + seed)
        arrays = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(2, 4))}
        w = rng.normal(size=(3, 2))

        def build(s):
            return ag.reduce_sum(ag.mul(ag.cosine_cost(s["a"], s["b"]), Tensor(w)))

        check_scalar_fn(build, arrays, tol=1e-5)
