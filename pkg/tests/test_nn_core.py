import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wearecg.nn import functional as F
from wearecg.nn.gradcheck import grad_check
from wearecg.nn.modules import AttnBlock, Conv1d, GroupNorm, Linear, ResBlock, default_groups
from wearecg.nn.optim import (AdamW, LrSchedule, NonFiniteGradientError, OptimizerState, adamw_step,
                              onecycle_lr)
from wearecg.nn.tensor import FrozenParameterError, Tensor, concat, exp, log, no_grad, sigmoid


def leaf(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


def probe(y: Tensor, seed=0):
    """Random linear functional of ``y``; keeps gradient checks away from symmetric zeros."""
    r = np.random.default_rng(seed).normal(size=y.shape)
    return (y * Tensor(r)).sum()


class TestTensorBackward:
    def test_sum_gives_ones(self):
        x = leaf(np.arange(6.0).reshape(2, 3))
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_square_gives_2x(self):
        x = leaf([1.0, -2.0, 3.5])
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_repeated_backward_accumulates(self):
        x = leaf([1.0, 2.0])
        (x * 3.0).sum().backward()
        (x * 3.0).sum().backward()
        np.testing.assert_array_equal(x.grad, [6.0, 6.0])

    def test_non_scalar_rejected(self):
        x = leaf([1.0, 2.0])
        with pytest.raises(ValueError):
            (x * 2.0).backward()

    def test_shared_subexpression(self):
        x = leaf([2.0])
        y = x * x
        (y + y * x).sum().backward()  # 2x^2... d/dx (x^2 + x^3) = 2x + 3x^2
        np.testing.assert_allclose(x.grad, [2 * 2 + 3 * 4])

    def test_broadcast_unbroadcasts(self):
        a = leaf(np.ones((3, 4)))
        b = leaf(np.ones(4))
        (a * b).sum().backward()
        np.testing.assert_array_equal(b.grad, np.full(4, 3.0))

    def test_frozen_leaf_raises(self):
        w = leaf([1.0, 2.0])
        w.freeze()
        w.requires_grad = True  # simulate a wiring bug
        with pytest.raises(FrozenParameterError):
            (w * 2.0).sum().backward()

    def test_no_grad_builds_no_graph(self):
        x = leaf([1.0])
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad

    def test_elementwise_ops_gradcheck(self):
        rng = np.random.default_rng(1)
        x = leaf(rng.uniform(0.5, 2.0, size=(3, 4)))
        y = leaf(rng.normal(size=(3, 4)))

        def f():
            z = exp(x * 0.3) / (x + 1.0) + log(x) * sigmoid(y) - y ** 3
            z = concat([z, z[1:] * 2.0], axis=0)
            return probe(z.transpose(1, 0).reshape(-1) @ Tensor(np.ones(20)).reshape(20, 1))

        rep = grad_check(f, [x, y], h=1e-6, n_coords=100)
        assert rep.passed, rep.max_rel_error


class TestConv1d:
    def test_hand_example(self):
        x = Tensor(np.array([[[1.0, 2.0, 3.0, 4.0]]]))
        w = Tensor(np.ones((1, 1, 3)))
        y = F.conv1d(x, w, Tensor(np.zeros(1)))
        np.testing.assert_array_equal(y.data[0, 0], [3.0, 6.0, 9.0, 7.0])

    def test_identity_kernel(self):
        x = np.random.default_rng(0).normal(size=(2, 5, 9))
        w = np.eye(5)[:, :, None]
        np.testing.assert_allclose(F.conv1d(Tensor(x), Tensor(w)).data, x)

    @given(st.integers(1, 64), st.sampled_from([1, 3, 5]), st.sampled_from([1, 2]))
    @settings(max_examples=60, deadline=None)
    def test_same_length(self, t, k, stride):
        x = Tensor(np.ones((1, 2, t)))
        w = Tensor(np.ones((3, 2, k)))
        assert F.conv1d(x, w, stride=stride).shape == (1, 3, math.ceil(t / stride))

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            F.conv1d(Tensor(np.ones((1, 1, 4))), Tensor(np.ones((1, 1, 2))))

    def test_channel_mismatch(self):
        with pytest.raises(ValueError):
            F.conv1d(Tensor(np.ones((1, 2, 4))), Tensor(np.ones((1, 3, 3))))

    def test_matches_direct_loop(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 3, 11))
        w = rng.normal(size=(4, 3, 5))
        for stride in (1, 2):
            t_out, pl, _ = F.same_padding(11, 5, stride)
            xp = np.pad(x, ((0, 0), (0, 0), (pl, 5)))
            ref = np.zeros((2, 4, t_out))
            for t in range(t_out):
                ref[:, :, t] = np.einsum("bck,ock->bo", xp[:, :, t * stride:t * stride + 5], w)
            np.testing.assert_allclose(F.conv1d(Tensor(x), Tensor(w), stride=stride).data, ref, atol=1e-12)

    @pytest.mark.parametrize("k,stride,t", [(3, 1, 9), (1, 1, 8), (3, 2, 9), (3, 2, 8), (5, 1, 7)])
    def test_gradcheck(self, k, stride, t):
        rng = np.random.default_rng(k * 10 + stride + t)
        x = leaf(rng.normal(size=(2, 3, t)))
        w = leaf(rng.normal(size=(4, 3, k)))
        b = leaf(rng.normal(size=4))
        rep = grad_check(lambda: probe(F.conv1d(x, w, b, stride)), [x, w, b], n_coords=500)
        assert rep.passed and rep.max_rel_error < 1e-4, rep.max_rel_error


class TestGroupNorm:
    def test_moments(self):
        x = np.random.default_rng(0).normal(3.0, 5.0, size=(2, 8, 10))
        y = F.group_norm(Tensor(x), 4, Tensor(np.ones(8)), Tensor(np.zeros(8)), eps=0.0).data
        g = y.reshape(2, 4, -1)
        assert np.abs(g.mean(-1)).max() < 1e-6
        np.testing.assert_allclose(g.var(-1), 1.0, atol=1e-4)

    def test_constant_input_is_zero(self):
        y = F.group_norm(Tensor(np.full((1, 4, 6), 2.5)), 2, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        np.testing.assert_array_equal(y.data, 0.0)

    def test_affine_collapse(self):
        x = np.random.default_rng(1).normal(size=(2, 4, 5))
        y = F.group_norm(Tensor(x), 2, Tensor(np.zeros(4)), Tensor(np.full(4, 0.7)))
        np.testing.assert_allclose(y.data, 0.7)

    def test_indivisible(self):
        with pytest.raises(ValueError):
            F.group_norm(Tensor(np.ones((1, 6, 3))), 4, Tensor(np.ones(6)), Tensor(np.zeros(6)))

    @given(st.floats(0.1, 10.0), st.floats(-5.0, 5.0), st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_invariant_to_group_affine(self, a, b, seed):
        x = np.random.default_rng(seed).normal(size=(2, 8, 7))
        one, zero = Tensor(np.ones(8)), Tensor(np.zeros(8))
        y1 = F.group_norm(Tensor(x), 4, one, zero, eps=1e-12).data
        y2 = F.group_norm(Tensor(a * x + b), 4, one, zero, eps=1e-12).data
        np.testing.assert_allclose(y1, y2, atol=1e-5)

    def test_gradcheck(self):
        rng = np.random.default_rng(2)
        x = leaf(rng.normal(size=(2, 6, 5)))
        g = leaf(rng.normal(size=6))
        b = leaf(rng.normal(size=6))
        rep = grad_check(lambda: probe(F.group_norm(x, 3, g, b)), [x, g, b], n_coords=200)
        assert rep.passed, rep.max_rel_error

    def test_default_groups(self):
        assert default_groups(128) == 32
        assert default_groups(16) == 4
        assert default_groups(12) == 3


class TestSilu:
    def test_values(self):
        y = F.silu(Tensor(np.array([0.0, 30.0, 1.0]))).data
        assert y[0] == 0.0
        assert abs(y[1] - 30.0) < 1e-9
        assert abs(y[2] - 0.7310585786) < 1e-9

    def test_derivative_closed_form(self):
        x = leaf(np.linspace(-6, 6, 25))
        F.silu(x).sum().backward()
        s = 1 / (1 + np.exp(-x.data))
        np.testing.assert_allclose(x.grad, s * (1 + x.data * (1 - s)), rtol=1e-12)

    def test_extreme_inputs_finite(self):
        y = F.silu(Tensor(np.array([-1e4, 1e4], dtype=np.float32))).data
        assert np.all(np.isfinite(y))


class TestMhsa:
    def _weights(self, c, seed=0, scale=0.5):
        rng = np.random.default_rng(seed)
        return [leaf(rng.normal(scale=scale, size=(c, c))) for _ in range(4)]

    def test_single_token(self):
        wq, wk, wv, wo = self._weights(4)
        x = np.random.default_rng(1).normal(size=(2, 4, 1))
        y, attn = F.mhsa(Tensor(x), 2, wq, wk, wv, wo, return_attn=True)
        np.testing.assert_allclose(attn, 1.0)
        np.testing.assert_allclose(y.data, wo.data @ wv.data @ x, atol=1e-12)

    def test_rows_sum_to_one(self):
        ws = self._weights(8, scale=2.0)
        _, attn = F.mhsa(Tensor(np.random.default_rng(2).normal(size=(3, 8, 6))), 4, *ws, return_attn=True)
        np.testing.assert_allclose(attn.sum(-1), 1.0, atol=1e-6)

    @given(st.permutations(range(4)), st.integers(0, 100))
    @settings(max_examples=25, deadline=None)
    def test_permutation_equivariant(self, perm, seed):
        ws = self._weights(4, seed)
        x = np.random.default_rng(seed).normal(size=(1, 4, 4))
        perm = list(perm)
        y = F.mhsa(Tensor(x), 2, *ws).data
        yp = F.mhsa(Tensor(x[:, :, perm]), 2, *ws).data
        np.testing.assert_allclose(yp, y[:, :, perm], atol=1e-10)

    def test_indivisible_heads(self):
        with pytest.raises(ValueError):
            F.mhsa(Tensor(np.ones((1, 6, 2))), 4, *self._weights(6))

    def test_gradcheck(self):
        ws = self._weights(4, 3)
        x = leaf(np.random.default_rng(4).normal(size=(2, 4, 5)))
        rep = grad_check(lambda: probe(F.mhsa(x, 2, *ws)), [x, *ws], n_coords=300)
        assert rep.passed, rep.max_rel_error


class TestOtherKernels:
    def test_upsample_gradcheck(self):
        x = leaf(np.random.default_rng(0).normal(size=(2, 3, 4)))
        assert F.upsample_nearest(x).shape == (2, 3, 8)
        assert grad_check(lambda: probe(F.upsample_nearest(x)), [x]).passed

    def test_linear_and_pool_gradcheck(self):
        rng = np.random.default_rng(1)
        x = leaf(rng.normal(size=(2, 5, 7)))
        w = leaf(rng.normal(size=(5, 3)))
        b = leaf(rng.normal(size=3))
        rep = grad_check(lambda: probe(F.linear(F.global_avg_pool(x), w, b)), [x, w, b], n_coords=100)
        assert rep.passed, rep.max_rel_error


class TestModules:
    def test_composite_gradcheck(self):
        # conv -> norm -> attention composite at h=1e-3 on 64-bit
        rng = np.random.default_rng(7)
        blocks = [ResBlock(4, 8, rng=rng, dtype=np.float64), AttnBlock(8, 2, rng=rng, dtype=np.float64),
                  Conv1d(8, 8, 3, stride=2, rng=rng, dtype=np.float64)]
        x = Tensor(rng.normal(size=(2, 4, 6)))

        def f():
            h = x
            for blk in blocks:
                h = blk(h)
            return probe(h)

        params = [p for blk in blocks for p in blk.parameters()]
        rep = grad_check(f, params, h=1e-3, tol=1e-4, n_coords=200)
        assert rep.passed, rep.max_rel_error

    def test_state_dict_roundtrip(self):
        a = ResBlock(4, 8, rng=np.random.default_rng(0), dtype=np.float64)
        b = ResBlock(4, 8, rng=np.random.default_rng(1), dtype=np.float64)
        b.load_state_dict(a.state_dict())
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_load_state_rejects_mismatch(self):
        a = GroupNorm(8, dtype=np.float64)
        with pytest.raises(KeyError):
            a.load_state_dict({"gamma": np.ones(8)})
        with pytest.raises(ValueError):
            a.load_state_dict({"gamma": np.ones(4), "beta": np.zeros(8)})

    def test_freeze(self):
        lin = Linear(3, 2, rng=np.random.default_rng(0)).freeze()
        assert all(p.frozen and not p.requires_grad for p in lin.parameters())


class TestAdamW:
    def test_hand_step(self):
        st_ = OptimizerState(lr=0.1, weight_decay=0.0)
        (p,) = adamw_step([np.array([0.0])], [np.array([1.0])], st_)
        assert p[0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-12)
        assert st_.step == 1

    def test_zero_grad_no_decay_unchanged(self):
        st_ = OptimizerState(lr=0.1, weight_decay=0.0)
        (p,) = adamw_step([np.array([1.5, -2.0])], [np.zeros(2)], st_)
        np.testing.assert_array_equal(p, [1.5, -2.0])

    def test_decoupled_decay(self):
        st_ = OptimizerState(lr=0.1, weight_decay=0.5)
        (p,) = adamw_step([np.array([2.0, -4.0])], [np.zeros(2)], st_)
        np.testing.assert_array_equal(p, np.array([2.0, -4.0]) * 0.95)

    def test_non_finite_gradient(self):
        with pytest.raises(NonFiniteGradientError):
            adamw_step([np.zeros(2)], [np.array([1.0, np.nan])], OptimizerState())

    def test_bitwise_deterministic(self):
        rng = np.random.default_rng(0)
        p0 = [rng.normal(size=(3, 3)), rng.normal(size=3)]
        grads = [[rng.normal(size=(3, 3)), rng.normal(size=3)] for _ in range(5)]

        def run():
            s, ps = OptimizerState(lr=1e-2), [a.copy() for a in p0]
            for g in grads:
                ps = adamw_step(ps, g, s)
            return ps

        for a, b in zip(run(), run()):
            assert a.tobytes() == b.tobytes()

    def test_wrapper_descends(self):
        w = leaf([3.0, -2.0])
        opt = AdamW([w], lr=0.1, weight_decay=0.0)
        for _ in range(200):
            opt.zero_grad()
            (w * w).sum().backward()
            opt.step()
        assert np.abs(w.data).max() < 0.1


class TestOneCycle:
    sched = LrSchedule(total_steps=100, lr_max=5e-5, pct_warmup=0.2, lr_initial=1e-5)

    def test_endpoints(self):
        assert onecycle_lr(0, self.sched) == pytest.approx(1e-5)
        assert onecycle_lr(20, self.sched) == pytest.approx(5e-5)
        assert onecycle_lr(100, self.sched) == pytest.approx(1e-6)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            onecycle_lr(101, self.sched)
        with pytest.raises(ValueError):
            onecycle_lr(-1, self.sched)

    def test_shape(self):
        lrs = [onecycle_lr(s, self.sched) for s in range(101)]
        assert all(b >= a for a, b in zip(lrs[:20], lrs[1:21]))
        assert all(b <= a for a, b in zip(lrs[20:], lrs[21:]))
        assert max(lrs) == pytest.approx(5e-5)

    def test_invalid(self):
        with pytest.raises(ValueError):
            LrSchedule(10, pct_warmup=1.0)
        with pytest.raises(ValueError):
            LrSchedule(0)


class TestGradCheck:
    def test_quadratic(self):
        p = leaf([3.0])
        rep = grad_check(lambda: (p * p).sum(), [p])
        assert rep.passed
        assert rep.max_rel_error < 1e-8

    def test_detects_corruption(self):
        p = leaf(np.random.default_rng(0).normal(size=10))
        f = lambda: (p * p * p).sum()  # noqa: E731
        f().backward()
        rep = grad_check(f, [p], analytic=[p.grad * 2.0])
        assert not rep.passed

    def test_samples_subset(self):
        p = leaf(np.random.default_rng(0).normal(size=500))
        rep = grad_check(lambda: (p * p).sum(), [p], n_coords=60)
        assert rep.n_checked == 60
