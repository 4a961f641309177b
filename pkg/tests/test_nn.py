"""Gradient checks and forward contracts for the autodiff engine."""

import numpy as np
import pytest

from itosde.nn import (
    Chunk2,
    Conv1d,
    Dense,
    Embedding,
    GaussianFourierProjection,
    Tensor,
    TransposedConv1d,
    load_checkpoint,
    save_checkpoint,
    tensor as T,
)
from itosde.nn.gradcheck import check_gradients, rel_error
from itosde.rng import RandomSource

GRAD_TOL = 1e-6


def naive_conv1d(X, W, b, dilation):
    """O(B C^2 L k) nested-loop reference for same-padded dilated conv."""
    B, Cin, L = X.shape
    Cout, _, k = W.shape
    pad = dilation * (k - 1) // 2
    out = np.zeros((B, Cout, L))
    for bi in range(B):
        for o in range(Cout):
            for pos in range(L):
                acc = b[o]
                for c in range(Cin):
                    for j in range(k):
                        src = pos + j * dilation - pad
                        if 0 <= src < L:
                            acc += X[bi, c, src] * W[o, c, j]
                out[bi, o, pos] = acc
    return out


def naive_conv_transpose1d(X, W, b, stride):
    B, Cin, L = X.shape
    _, Cout, k = W.shape
    pad = stride // 2
    out = np.zeros((B, Cout, L * stride))
    for bi in range(B):
        for c in range(Cin):
            for pos in range(L):
                for o in range(Cout):
                    for j in range(k):
                        dst = pos * stride + j - pad
                        if 0 <= dst < L * stride:
                            out[bi, o, dst] += X[bi, c, pos] * W[c, o, j]
    return out + b[None, :, None]


class TestForwardContracts:
    def test_silu_zero(self):
        y = T.silu(Tensor(np.zeros(3)))
        np.testing.assert_array_equal(y.data, 0.0)

    def test_silu_gradient_at_zero(self):
        x = Tensor(np.zeros(1), requires_grad=True)
        T.silu(x).backward(np.ones(1))
        np.testing.assert_allclose(x.grad, 0.5)

    def test_dense_identity(self):
        rng = RandomSource(0)
        layer = Dense(4, 4, rng)
        layer.weight.data = np.eye(4)
        x = rng.normal((3, 4))
        np.testing.assert_array_equal(layer(Tensor(x)).data, x)

    def test_conv_same_length(self):
        rng = RandomSource(1)
        conv = Conv1d(3, 5, kernel=3, rng=rng, dilation=2)
        y = conv(Tensor(rng.normal((2, 3, 8))))
        assert y.data.shape == (2, 5, 8)

    def test_conv_matches_naive(self):
        rng = RandomSource(2)
        for dilation in (1, 2, 4):
            conv = Conv1d(3, 4, kernel=3, rng=rng, dilation=dilation)
            x = rng.normal((2, 3, 16))
            got = conv(Tensor(x)).data
            want = naive_conv1d(x, conv.weight.data, conv.bias.data, dilation)
            assert rel_error(got, want) < 1e-12

    def test_transposed_conv_length_and_values(self):
        rng = RandomSource(3)
        for stride in (2, 4, 8):
            up = TransposedConv1d(3, 2, stride=stride, rng=rng)
            x = rng.normal((2, 3, 6))
            got = up(Tensor(x)).data
            assert got.shape == (2, 2, 6 * stride)
            want = naive_conv_transpose1d(x, up.weight.data, up.bias.data, stride)
            assert rel_error(got, want) < 1e-12

    def test_forward_deterministic(self):
        rng = RandomSource(4)
        conv = Conv1d(4, 4, kernel=3, rng=rng)
        x = rng.normal((2, 4, 10))
        a = conv(Tensor(x)).data
        b = conv(Tensor(x)).data
        np.testing.assert_array_equal(a, b)

    def test_shape_errors_report_both_shapes(self):
        rng = RandomSource(5)
        conv = Conv1d(3, 4, kernel=3, rng=rng)
        with pytest.raises(ValueError, match="3"):
            conv(Tensor(np.zeros((2, 5, 8))))
        with pytest.raises(ValueError, match=r"\(3, 5\)"):
            T.dense(Tensor(np.zeros((2, 4))), Tensor(np.zeros((3, 5))), None)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            Conv1d(2, 2, kernel=4, rng=RandomSource(0))

    def test_chunk2_splits_evenly(self):
        x = Tensor(np.arange(12.0).reshape(1, 4, 3))
        a, b = Chunk2()(x)
        np.testing.assert_array_equal(a.data, x.data[:, :2])
        np.testing.assert_array_equal(b.data, x.data[:, 2:])

    def test_chunk2_odd_channels_rejected(self):
        with pytest.raises(ValueError):
            Chunk2()(Tensor(np.zeros((1, 3, 2))))

    def test_chunk2_backward_concatenates(self):
        x = Tensor(np.zeros((1, 4, 2)), requires_grad=True)
        a, b = T.chunk2(x)
        out = T.concat([a, b], axis=1)
        ga = np.arange(8.0).reshape(1, 4, 2)
        out.backward(ga)
        np.testing.assert_array_equal(x.grad, ga)

    def test_embedding_overflow_rejected(self):
        emb = Embedding(5, 3, RandomSource(0))
        with pytest.raises(ValueError):
            emb(np.array([[0, 5]]))
        with pytest.raises(ValueError):
            emb(np.array([[-1, 2]]))

    def test_backward_rejects_bad_seed_shape(self):
        x = Tensor(np.zeros((2, 2)), requires_grad=True)
        y = T.silu(x)
        with pytest.raises(ValueError):
            y.backward(np.ones(3))


class TestGfp:
    def test_zero_time(self):
        gfp = GaussianFourierProjection(8, RandomSource(0))
        out = gfp(np.zeros(3)).data
        np.testing.assert_array_equal(out[:, :4], 0.0)
        np.testing.assert_array_equal(out[:, 4:], 1.0)

    def test_norm_is_half_dim(self):
        gfp = GaussianFourierProjection(16, RandomSource(1))
        t = np.array([0.0, 0.3, 0.77, 1.0])
        norms = np.sum(gfp(t).data ** 2, axis=1)
        np.testing.assert_allclose(norms, 8.0, rtol=1e-12)

    def test_distinct_times_distinct_embeddings(self):
        gfp = GaussianFourierProjection(32, RandomSource(2))
        e = gfp(np.array([0.25, 0.75])).data
        assert np.linalg.norm(e[0] - e[1]) > 1e-3

    def test_odd_dim_rejected(self):
        with pytest.raises(ValueError):
            GaussianFourierProjection(7, RandomSource(0))

    def test_weights_are_frozen(self):
        gfp = GaussianFourierProjection(8, RandomSource(3))
        assert gfp.parameters() == []
        assert [n for n, _ in gfp.named_buffers()] == ["frozen_weights"]


def _sq_loss(y):
    return T.sum_over(T.mul(y, y))


class TestGradients:
    """Every layer kind against central finite differences at 64-bit."""

    def test_dense(self):
        rng = RandomSource(10)
        layer = Dense(5, 4, rng)
        x = Tensor(rng.normal((3, 5)), requires_grad=True)
        errs = check_gradients(
            lambda: _sq_loss(T.silu(layer(x))),
            {"x": x, "w": layer.weight, "b": layer.bias},
        )
        assert max(errs.values()) < GRAD_TOL

    @pytest.mark.parametrize("dilation", [1, 2, 4])
    def test_conv1d(self, dilation):
        rng = RandomSource(11 + dilation)
        conv = Conv1d(3, 4, kernel=3, rng=rng, dilation=dilation)
        x = Tensor(rng.normal((2, 3, 12)), requires_grad=True)
        errs = check_gradients(
            lambda: _sq_loss(conv(x)),
            {"x": x, "w": conv.weight, "b": conv.bias},
        )
        assert max(errs.values()) < GRAD_TOL

    @pytest.mark.parametrize("stride", [2, 4, 8])
    def test_transposed_conv1d(self, stride):
        rng = RandomSource(20 + stride)
        up = TransposedConv1d(2, 3, stride=stride, rng=rng)
        x = Tensor(rng.normal((2, 2, 6)), requires_grad=True)
        errs = check_gradients(
            lambda: _sq_loss(up(x)),
            {"x": x, "w": up.weight, "b": up.bias},
        )
        assert max(errs.values()) < GRAD_TOL

    def test_embedding(self):
        rng = RandomSource(30)
        emb = Embedding(6, 4, rng)
        ids = np.array([[0, 2, 5, 2], [1, 1, 3, 4]])
        errs = check_gradients(
            lambda: _sq_loss(T.tanh(emb(ids))),
            {"table": emb.weight},
        )
        assert max(errs.values()) < GRAD_TOL

    def test_activations_and_gate(self):
        rng = RandomSource(31)
        x = Tensor(rng.normal((2, 4, 5)), requires_grad=True)

        def loss():
            a, b = T.chunk2(x)
            return T.sum_over(T.mul(T.tanh(a), T.sigmoid(b)))

        errs = check_gradients(loss, {"x": x})
        assert max(errs.values()) < GRAD_TOL

    def test_silu_chain(self):
        rng = RandomSource(32)
        x = Tensor(rng.normal((3, 7)), requires_grad=True)
        errs = check_gradients(lambda: _sq_loss(T.silu(x)), {"x": x})
        assert max(errs.values()) < GRAD_TOL

    def test_broadcast_add_mul(self):
        rng = RandomSource(33)
        x = Tensor(rng.normal((2, 3, 4)), requires_grad=True)
        y = Tensor(rng.normal((3, 1)), requires_grad=True)
        z = Tensor(rng.normal((2, 1, 4)), requires_grad=True)
        errs = check_gradients(
            lambda: T.sum_over(T.mul(T.add(x, y), z)),
            {"x": x, "y": y, "z": z},
        )
        assert max(errs.values()) < GRAD_TOL

    def test_sum_mean_axes(self):
        rng = RandomSource(34)
        x = Tensor(rng.normal((3, 4, 5)), requires_grad=True)

        def loss():
            s = T.sum_over(T.mul(x, x), axis=(1, 2))  # (3,)
            return T.mean_over(s)

        errs = check_gradients(loss, {"x": x})
        assert max(errs.values()) < GRAD_TOL

    def test_concat_and_reshape(self):
        rng = RandomSource(35)
        a = Tensor(rng.normal((2, 2, 3)), requires_grad=True)
        b = Tensor(rng.normal((2, 3, 3)), requires_grad=True)

        def loss():
            c = T.concat([a, b], axis=1)
            return _sq_loss(T.reshape(c, (2, 15)))

        errs = check_gradients(loss, {"a": a, "b": b})
        assert max(errs.values()) < GRAD_TOL

    def test_abs_l1(self):
        rng = RandomSource(36)
        # keep coordinates away from the kink at 0
        x = Tensor(rng.normal((4, 4)) + np.sign(rng.normal((4, 4))) * 2.0, requires_grad=True)
        errs = check_gradients(lambda: T.sum_over(T.abs_(x)), {"x": x})
        assert max(errs.values()) < GRAD_TOL

    def test_grad_accumulates_over_reuse(self):
        # x used twice: d/dx (x*x + x) = 2x + 1
        x = Tensor(np.array([3.0]), requires_grad=True)
        y = T.add(T.mul(x, x), x)
        y.backward(np.ones(1))
        np.testing.assert_allclose(x.grad, 7.0)


class TestCheckpoint:
    def _net(self, seed):
        from itosde.nn.layers import Module

        rng = RandomSource(seed)

        class Small(Module):
            def __init__(self):
                super().__init__()
                self.fc1 = Dense(3, 4, rng)
                self.gfp = GaussianFourierProjection(8, rng)
                self.fc2 = Dense(4, 2, rng)

            def forward(self, x, t):
                h = T.silu(self.fc1(Tensor(x)))
                e = self.gfp(t)
                return self.fc2(h).data, e.data

        return Small()

    def test_roundtrip_stable(self, tmp_path):
        net = self._net(7)
        x = RandomSource(8).normal((2, 3))
        t = np.array([0.1, 0.5])
        p = tmp_path / "ckpt_1.bin"
        save_checkpoint(p, net, meta={"step": 1})
        load_checkpoint(p, net)
        y1, e1 = net.forward(x, t)
        # a second save/load cycle must be bit-identical (f32 fixed point)
        p2 = tmp_path / "ckpt_2.bin"
        save_checkpoint(p2, net, meta={"step": 1})
        assert p.read_bytes() == p2.read_bytes()
        load_checkpoint(p2, net)
        y2, e2 = net.forward(x, t)
        np.testing.assert_array_equal(y1, y2)
        np.testing.assert_array_equal(e1, e2)

    def test_header_contents(self, tmp_path):
        net = self._net(9)
        p = tmp_path / "ckpt.bin"
        save_checkpoint(p, net, meta={"note": "x"})
        from itosde.nn import read_header

        h = read_header(p)
        names = [e["name"] for e in h["params"]]
        assert names == ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias", "gfp.frozen_weights"]
        offs = [e["offset_bytes"] for e in h["params"]]
        assert offs == sorted(offs) and offs[0] == 0
        assert h["meta"]["note"] == "x"

    def test_mismatch_rejected(self, tmp_path):
        net = self._net(10)
        p = tmp_path / "ckpt.bin"
        save_checkpoint(p, net)
        other_rng = RandomSource(11)
        other = Dense(3, 4, other_rng)
        with pytest.raises(ValueError):
            load_checkpoint(p, other)

    def test_gfp_buffer_restored(self, tmp_path):
        net = self._net(12)
        p = tmp_path / "ckpt.bin"
        save_checkpoint(p, net)
        w_before = net.gfp.frozen_weights.copy()
        net.gfp.frozen_weights[:] = 0.0
        load_checkpoint(p, net)
        np.testing.assert_allclose(net.gfp.frozen_weights, w_before.astype(np.float32), rtol=0)
