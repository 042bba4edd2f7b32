import math

import numpy as np
import pytest

from trifuse.tensor import (
    DegenerateInputError,
    NonFiniteError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    add,
    add_const,
    backward,
    concat_last,
    dropout,
    embedding_lookup,
    gelu,
    grad_check,
    hadamard,
    layer_norm,
    masked_mean_pool,
    matmul,
    mean,
    mul_const,
    nll_from_probs,
    pick,
    relu,
    scalar_mul,
    scale,
    softmax_rows,
    sub,
    transpose_last2,
    tsum,
)


def matmul_oracle(a, b):
    """Naive triple loop, independent of the library path."""
    m, k = len(a), len(a[0])
    n = len(b[0])
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            for t in range(k):
                out[i][j] += a[i][t] * b[t][j]
    return out


class TestTensorInvariants:
    def test_shape_matches_data(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.shape == (2, 2)
        assert t.size == 4

    def test_rank_cap(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 2, 2, 2)))

    def test_zero_extent_rejected(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((0, 3)))

    def test_nonfinite_input_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([1.0, np.inf])

    def test_grad_absent_before_backward(self):
        t = Tensor([1.0, 2.0], requires_grad=True)
        assert t.grad is None


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[3.0, 4.0], [5.0, 6.0]])
        assert np.array_equal(matmul(a, b).data, [[3.0, 4.0], [5.0, 6.0]])

    def test_zeros(self, rng):
        a = Tensor(np.zeros((2, 3)))
        b = Tensor(rng.standard_normal((3, 2)))
        assert np.array_equal(matmul(a, b).data, np.zeros((2, 2)))

    def test_known_product(self):
        a = [[1.0, 2.0], [3.0, 4.0]]
        b = [[5.0, 6.0], [7.0, 8.0]]
        got = matmul(Tensor(a), Tensor(b)).data
        assert got.tolist() == [[19.0, 22.0], [43.0, 50.0]]
        assert got.tolist() == matmul_oracle(a, b)

    def test_matches_triple_loop_exactly_for_integer_inputs(self, rng):
        for _ in range(20):
            m, k, n = rng.integers(1, 9, size=3)
            a = rng.integers(-5, 6, size=(m, k)).astype(float)
            b = rng.integers(-5, 6, size=(k, n)).astype(float)
            got = matmul(Tensor(a), Tensor(b)).data
            assert got.tolist() == matmul_oracle(a.tolist(), b.tolist())

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_backward_rules(self, rng):
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        with Tape() as tape:
            loss = tsum(matmul(a, b))
        backward(loss, tape)
        dc = np.ones((3, 2))
        assert np.allclose(a.grad, dc @ b.data.T)
        assert np.allclose(b.grad, a.data.T @ dc)

    def test_batched_variants(self, rng):
        a = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        out = matmul(a, w)
        assert out.shape == (2, 3, 5)
        b3 = Tensor(rng.standard_normal((2, 5, 3)), requires_grad=True)
        out2 = matmul(out, b3)
        assert out2.shape == (2, 3, 3)


class TestSoftmaxRows:
    def test_constant_row_uniform(self):
        for c in (-7.0, 0.0, 3.5):
            out = softmax_rows(Tensor([[c, c, c]])).data
            assert np.allclose(out, 1.0 / 3.0, atol=1e-12)

    def test_single_column_is_one(self):
        out = softmax_rows(Tensor([[5.0], [-2.0]])).data
        assert np.allclose(out, 1.0)

    def test_large_values_no_overflow(self):
        out = softmax_rows(Tensor([[1000.0, 0.0]])).data
        assert abs(out[0, 0] - 1.0) < 1e-12
        assert abs(out[0, 1]) < 1e-12

    def test_shift_invariance(self, rng):
        x = rng.standard_normal((4, 6))
        a = softmax_rows(Tensor(x)).data
        b = softmax_rows(Tensor(x + 3.7)).data
        assert np.allclose(a, b, atol=1e-12)

    def test_rows_sum_to_one_and_nonnegative_sweep(self, rng):
        for _ in range(100):
            r = int(rng.integers(1, 7))
            c = int(rng.integers(1, 9))
            x = rng.standard_normal((r, c)) * float(rng.uniform(0.1, 50))
            out = softmax_rows(Tensor(x)).data
            assert (out >= 0).all()
            assert np.allclose(out.sum(axis=1), 1.0, atol=1e-6)


class TestElementwise:
    def test_relu(self):
        assert relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]

    def test_mean_of_ones(self):
        assert mean(Tensor(np.ones((3, 4)))).item() == 1.0

    def test_gelu_zero(self):
        assert gelu(Tensor([0.0])).data[0] == 0.0

    def test_add_sub_hadamard_scale(self, rng):
        x = rng.standard_normal((2, 3))
        y = rng.standard_normal((2, 3))
        assert np.allclose(add(Tensor(x), Tensor(y)).data, x + y)
        assert np.allclose(sub(Tensor(x), Tensor(y)).data, x - y)
        assert np.allclose(hadamard(Tensor(x), Tensor(y)).data, x * y)
        assert np.allclose(scale(Tensor(x), -2.5).data, -2.5 * x)

    def test_binary_shape_mismatch(self):
        with pytest.raises(ShapeError):
            add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_bias_broadcast_add_gradient(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal(4), requires_grad=True)
        with Tape() as tape:
            loss = tsum(add(x, b))
        backward(loss, tape)
        assert np.allclose(b.grad, np.full(4, 6.0))

    def test_overflow_raises_instead_of_propagating(self):
        big = Tensor([1e308])
        with np.errstate(over="ignore"):
            with pytest.raises(NonFiniteError):
                hadamard(big, big)


class TestLayerNorm:
    def test_constant_row_maps_to_zero(self):
        x = Tensor([[4.2, 4.2, 4.2, 4.2]])
        out = layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        assert np.allclose(out.data, 0.0)

    def test_row_statistics(self, rng):
        x = Tensor(rng.standard_normal((5, 8)) * 3 + 1)
        out = layer_norm(x, Tensor(np.ones(8)), Tensor(np.zeros(8))).data
        assert np.allclose(out.mean(axis=1), 0.0, atol=1e-6)
        assert np.allclose(out.var(axis=1), 1.0, atol=1e-4)

    def test_against_two_pass_oracle(self, rng):
        x = rng.standard_normal((4, 8))
        gain = rng.standard_normal(8)
        bias = rng.standard_normal(8)
        eps = 1e-5
        expected = np.empty_like(x)
        for i in range(4):
            mu = sum(x[i]) / 8.0
            var = sum((v - mu) ** 2 for v in x[i]) / 8.0
            expected[i] = gain * (x[i] - mu) / math.sqrt(var + eps) + bias
        got = layer_norm(Tensor(x), Tensor(gain), Tensor(bias), eps).data
        assert np.allclose(got, expected, atol=1e-12)

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            layer_norm(Tensor(np.ones((2, 3))), Tensor(np.ones(3)),
                       Tensor(np.zeros(3)), eps=0.0)


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        x = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
        with Tape() as tape:
            loss = tsum(x)
        backward(loss, tape)
        assert np.array_equal(x.grad, np.ones((3, 2)))

    def test_hadamard_product_rule(self, rng):
        x = Tensor(rng.standard_normal(5), requires_grad=True)
        y = Tensor(rng.standard_normal(5), requires_grad=True)
        with Tape() as tape:
            loss = tsum(hadamard(x, y))
        backward(loss, tape)
        assert np.allclose(x.grad, y.data)
        assert np.allclose(y.grad, x.data)

    def test_accumulation_matches_two_single_use_graphs(self, rng):
        vals = rng.standard_normal(4)
        x = Tensor(vals, requires_grad=True)
        with Tape() as tape:
            loss = add(tsum(hadamard(x, x)), tsum(scale(x, 3.0)))
        backward(loss, tape)
        combined = x.grad.copy()

        x1 = Tensor(vals, requires_grad=True)
        with Tape() as t1:
            l1 = tsum(hadamard(x1, x1))
        backward(l1, t1)
        x2 = Tensor(vals, requires_grad=True)
        with Tape() as t2:
            l2 = tsum(scale(x2, 3.0))
        backward(l2, t2)
        assert np.allclose(combined, x1.grad + x2.grad)

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = scale(x, 2.0)
        with pytest.raises(TapeError):
            backward(y, tape)

    def test_double_backward_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            loss = tsum(x)
        backward(loss, tape)
        with pytest.raises(TapeError):
            backward(loss, tape)

    def test_topological_order_on_tape(self, rng):
        x = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
        with Tape() as tape:
            a = scale(x, 2.0)
            b = hadamard(a, a)
            tsum(b)
        seen = set()
        for entry in tape._entries:
            for inp in entry.inputs:
                assert id(inp) != id(entry.out)
                assert id(inp) in seen or inp is x
            seen.add(id(entry.out))


class TestSmallOps:
    def test_transpose_roundtrip(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
        assert transpose_last2(x).shape == (2, 4, 3)

    def test_concat_and_split_gradient(self, rng):
        a = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal((2, 2)), requires_grad=True)
        with Tape() as tape:
            merged = concat_last([a, b])
            loss = tsum(hadamard(merged, merged))
        assert merged.shape == (2, 5)
        backward(loss, tape)
        assert np.allclose(a.grad, 2 * a.data)
        assert np.allclose(b.grad, 2 * b.data)

    def test_pick_scalar_and_gradient(self):
        x = Tensor([1.0, 5.0, -2.0], requires_grad=True)
        with Tape() as tape:
            loss = scale(pick(x, 1), 3.0)
        backward(loss, tape)
        assert loss.item() == 15.0
        assert x.grad.tolist() == [0.0, 3.0, 0.0]

    def test_scalar_mul_both_gradients(self, rng):
        x = Tensor(rng.standard_normal(4), requires_grad=True)
        s = Tensor(np.asarray(2.0), requires_grad=True)
        with Tape() as tape:
            loss = tsum(scalar_mul(x, s))
        backward(loss, tape)
        assert np.allclose(x.grad, 2.0)
        assert np.allclose(s.grad, x.data.sum())

    def test_mul_const_and_add_const(self, rng):
        x = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        c = np.array([1.0, 0.0, 2.0])
        with Tape() as tape:
            loss = tsum(mul_const(add_const(x, c), c))
        backward(loss, tape)
        assert np.allclose(x.grad, np.broadcast_to(c, (2, 3)))

    def test_masked_mean_pool_cases(self, rng):
        h = rng.standard_normal((3, 4))
        single = masked_mean_pool(Tensor(h), np.array([False, True, False]))
        assert np.allclose(single.data, h[1])
        allv = masked_mean_pool(Tensor(np.tile(h[0], (3, 1))),
                                np.array([True, True, True]))
        assert np.allclose(allv.data, h[0])
        two = masked_mean_pool(Tensor(h), np.array([True, False, True]))
        assert np.allclose(two.data, (h[0] + h[2]) / 2.0)

    def test_masked_mean_pool_all_masked(self, rng):
        with pytest.raises(DegenerateInputError):
            masked_mean_pool(Tensor(rng.standard_normal((2, 3))),
                             np.array([False, False]))

    def test_embedding_lookup_and_scatter_grad(self, rng):
        table = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
        ids = np.array([1, 1, 4])
        with Tape() as tape:
            loss = tsum(embedding_lookup(table, ids))
        backward(loss, tape)
        expected = np.zeros((5, 3))
        expected[1] = 2.0
        expected[4] = 1.0
        assert np.allclose(table.grad, expected)

    def test_embedding_out_of_range(self, rng):
        table = Tensor(rng.standard_normal((5, 3)))
        with pytest.raises(IndexError):
            embedding_lookup(table, np.array([5]))

    def test_dropout_off_is_identity(self, rng):
        x = Tensor(rng.standard_normal((3, 3)))
        assert dropout(x, 0.0, rng, True) is x
        assert dropout(x, 0.5, rng, False) is x

    def test_dropout_scaling_preserves_expectation(self):
        rng = np.random.default_rng(0)
        x = Tensor(np.ones((200, 50)))
        out = dropout(x, 0.25, rng, True).data
        assert abs(out.mean() - 1.0) < 0.02
        assert set(np.round(np.unique(out), 6)) <= {0.0, round(1 / 0.75, 6)}

    def test_nll_floor_and_gradient(self):
        probs = Tensor([0.5, 0.25, 0.25], requires_grad=True)
        with Tape() as tape:
            loss = nll_from_probs(probs, 0)
        backward(loss, tape)
        assert abs(loss.item() - math.log(2.0)) < 1e-9
        assert abs(probs.grad[0] + 1.0 / (0.5 + 1e-12)) < 1e-6
        assert probs.grad[1] == 0.0


class TestGradCheck:
    def test_linear_function_is_exact(self, rng):
        w = Tensor(rng.standard_normal(6), requires_grad=True)
        x = Tensor(rng.standard_normal(6))
        err = grad_check(lambda: tsum(hadamard(w, x)), [("w", w)])
        assert err < 1e-10

    def test_softmax_cross_entropy_composite(self, rng):
        logits = Tensor(rng.standard_normal((3, 5)), requires_grad=True)

        def loss_fn():
            return mean(nll_from_probs(softmax_rows(logits), np.array([1, 0, 4])))

        err = grad_check(loss_fn, [("logits", logits)])
        assert err < 1e-6

    def test_every_op_gradient_sweep(self, rng):
        """Finite-difference verification for each differentiable op."""
        cases = []

        def case(name, builder):
            cases.append((name, builder))

        x34 = rng.standard_normal((3, 4))
        y34 = rng.standard_normal((3, 4))
        w45 = rng.standard_normal((4, 5))

        case("matmul", lambda p: tsum(matmul(p, Tensor(w45))))
        case("add", lambda p: tsum(add(p, Tensor(y34))))
        case("sub", lambda p: tsum(sub(p, Tensor(y34))))
        case("scale", lambda p: tsum(scale(p, -1.7)))
        case("hadamard", lambda p: tsum(hadamard(p, Tensor(y34))))
        case("relu", lambda p: tsum(relu(p)))
        case("gelu", lambda p: tsum(gelu(p)))
        case("mean", lambda p: mean(p))
        case("softmax", lambda p: tsum(hadamard(softmax_rows(p), Tensor(y34))))
        case("layer_norm", lambda p: tsum(layer_norm(
            p, Tensor(np.ones(4)), Tensor(np.zeros(4)))))
        case("pool", lambda p: tsum(masked_mean_pool(
            p, np.array([True, False, True]))))
        case("transpose", lambda p: tsum(matmul(transpose_last2(p), Tensor(y34))))

        for name, builder in cases:
            p = Tensor(x34.copy(), requires_grad=True)
            err = grad_check(lambda: builder(p), [(name, p)])
            assert err < 1e-4, f"{name}: rel err {err}"
