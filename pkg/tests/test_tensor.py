import numpy as np
import pytest

from camocount import tensor as T
from camocount.tensor import GraphError, ShapeError, Tensor

from gradcheck import check_gradients


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(a, Tensor(np.eye(2)))
        np.testing.assert_array_equal(out.data, a.data)

    def test_hand_product(self):
        out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[5.0], [6.0]])
        np.testing.assert_array_equal(out.data, [[17.0], [39.0]])

    def test_shape_mismatch_names_both(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_grad_matches_fd(self, rng):
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        check_gradients(lambda: T.tsum(a @ b), [a, b], rtol=1e-6)


class TestConv2d:
    def test_identity_kernel(self, rng):
        x = Tensor(rng.random((5, 4, 1)))
        out = T.conv2d(x, Tensor(np.ones((1, 1, 1, 1))))
        np.testing.assert_array_equal(out.data, x.data)

    def test_ones_kernel_counts_neighbors(self):
        x = Tensor(np.ones((3, 3, 1)))
        out = T.conv2d(x, Tensor(np.ones((3, 3, 1, 1))))
        assert out.data[1, 1, 0] == 9.0
        assert out.data[0, 0, 0] == 4.0

    def test_output_shape(self, rng):
        x = Tensor(rng.random((8, 8, 3)))
        w = Tensor(rng.random((3, 3, 3, 16)))
        assert T.conv2d(x, w).shape == (8, 8, 16)

    def test_strided_shape(self, rng):
        out = T.conv2d(Tensor(rng.random((8, 8, 2))),
                       Tensor(rng.random((3, 3, 2, 4))), stride=2)
        assert out.shape == (4, 4, 4)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError, match="channels"):
            T.conv2d(Tensor(rng.random((4, 4, 2))),
                     Tensor(rng.random((3, 3, 3, 4))))

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ShapeError, match="odd"):
            T.conv2d(Tensor(rng.random((4, 4, 2))),
                     Tensor(rng.random((2, 2, 2, 4))))

    @pytest.mark.parametrize("stride", [1, 2])
    def test_grads_match_fd(self, rng, stride):
        x = Tensor(rng.normal(size=(5, 6, 2)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 3, 2, 3)), requires_grad=True)
        check_gradients(
            lambda: T.tsum(T.mul(T.conv2d(x, w, stride), 0.5)), [x, w])


class TestAttention:
    def test_single_key_returns_value(self):
        q = Tensor([[1.0, 0.0]])
        out = T.attention(q, Tensor([[1.0, 0.0]]), Tensor([[5.0, 7.0]]))
        np.testing.assert_allclose(out.data, [[5.0, 7.0]])

    def test_equidistant_keys_average_values(self):
        q = Tensor([[1.0, 0.0]])
        k = Tensor([[0.0, 1.0], [0.0, -1.0]])
        v = Tensor([[2.0, 0.0], [4.0, 6.0]])
        np.testing.assert_allclose(T.attention(q, k, v).data, [[3.0, 3.0]])

    def test_weight_rows_sum_to_one(self, rng):
        for _ in range(5):
            q = Tensor(rng.normal(size=(6, 8)))
            k = Tensor(rng.normal(size=(9, 8)))
            w = T.attention_weights(q, k)
            assert (w.data >= 0).all()
            np.testing.assert_allclose(w.data.sum(axis=1), 1.0, atol=1e-9)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            T.attention(Tensor(rng.random((2, 4))),
                        Tensor(rng.random((3, 5))),
                        Tensor(rng.random((3, 5))))


class TestBackward:
    def test_sum_of_squares(self, rng):
        x = Tensor(rng.normal(size=(5,)), requires_grad=True)
        T.tsum(T.mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, 2.0 * x.data)

    def test_relu_flat_region(self):
        x = Tensor([-1.0, -2.5, -0.3], requires_grad=True)
        T.tsum(T.relu(x)).backward()
        np.testing.assert_array_equal(x.grad, np.zeros(3))

    def test_three_layer_composite(self, rng):
        x = Tensor(rng.normal(size=(2, 4)))
        w1 = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        w2 = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        w3 = Tensor(rng.normal(size=(3, 1)), requires_grad=True)

        def loss():
            h = T.relu(x @ w1)
            h = T.sigmoid(h @ w2)
            return T.tsum(h @ w3)

        check_gradients(loss, [w1, w2, w3])

    def test_non_scalar_loss_rejected(self, rng):
        x = Tensor(rng.normal(size=(3,)), requires_grad=True)
        with pytest.raises(GraphError, match="scalar"):
            T.mul(x, 2.0).backward()

    def test_repeated_backward_accumulates(self, rng):
        x = Tensor(rng.normal(size=(4,)), requires_grad=True)
        first = None
        for i in range(1, 4):
            T.tsum(T.mul(x, x)).backward()
            if first is None:
                first = x.grad.copy()
            np.testing.assert_allclose(x.grad, i * first)

    def test_each_op_visited_once(self, rng):
        # diamond graph: y = a + a reuses a; gradient of sum w.r.t. x is 4x
        x = Tensor(rng.normal(size=(3,)), requires_grad=True)
        a = T.mul(x, x)
        T.tsum(a + a).backward()
        np.testing.assert_allclose(x.grad, 4.0 * x.data)


class TestRowOps:
    def test_softmax_rows(self, rng):
        out = T.softmax(Tensor(rng.normal(size=(5, 9)) * 10.0))
        assert (out.data >= 0).all()
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-9)

    def test_softmax_extreme_inputs_finite(self):
        out = T.softmax(Tensor([[1000.0, -1000.0, 0.0]]))
        assert np.isfinite(out.data).all()

    def test_layer_norm_statistics(self, rng):
        x = Tensor(rng.normal(size=(6, 16)) * 3.0 + 2.0)
        out = T.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)))
        assert np.abs(out.data.mean(axis=1)).max() < 1e-7
        assert np.abs(out.data.var(axis=1) - 1.0).max() < 1e-6

    def test_gather_scatter_roundtrip(self, rng):
        x = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        idx = [0, 2, 2]
        out = T.gather_rows(x, idx)
        np.testing.assert_array_equal(out.data, x.data[idx])
        T.tsum(out).backward()
        expected = np.zeros((5, 3))
        for i in idx:
            expected[i] += 1.0
        np.testing.assert_array_equal(x.grad, expected)


def test_forward_determinism(rng):
    x = rng.normal(size=(4, 6))
    w = rng.normal(size=(6, 2))
    a = (Tensor(x) @ Tensor(w)).data
    b = (Tensor(x) @ Tensor(w)).data
    np.testing.assert_array_equal(a, b)


def test_finite_outputs_on_finite_inputs(rng):
    ops = [
        lambda x: T.relu(x),
        lambda x: T.sigmoid(x),
        lambda x: T.softmax(x),
        lambda x: T.layer_norm(x, Tensor(np.ones(x.shape[1])),
                               Tensor(np.zeros(x.shape[1]))),
        lambda x: T.tabs(x),
        lambda x: T.clip(x, -2.0, 2.0),
    ]
    x = Tensor(np.zeros((3, 4)))
    for op in ops:
        assert np.isfinite(op(x).data).all()


def test_tensor_invariants(rng):
    t = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    assert t.size == np.prod(t.shape)
    T.tsum(t).backward()
    assert t.grad.shape == t.data.shape
