import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wearecg.leads import LeadId
from wearecg.nn.gradcheck import grad_check
from wearecg.nn.tensor import Tensor
from wearecg.vae import (LOGVAR_RANGE, ArchConfig, LatentGaussian, MaskSpec, WearEcgVae, kl_divergence,
                         mask_leads, recon_loss, reparameterize, total_loss)

TINY = ArchConfig(channel_plan=(8, 16, 16), heads=2)


def latent(mu, logvar):
    return LatentGaussian(Tensor(np.asarray(mu, dtype=np.float64)), Tensor(np.asarray(logvar, dtype=np.float64)))


class TestMask:
    def test_default(self):
        spec = MaskSpec()
        x = np.random.default_rng(0).normal(size=(12, 20))
        y = mask_leads(x, spec)
        np.testing.assert_array_equal(y[[1, 6, 10]], x[[1, 6, 10]])
        assert not y[[0, 2, 3, 4, 5, 7, 8, 9, 11]].any()
        assert [l.name for l in spec.generated_leads()] == ["I", "III", "aVR", "aVL", "aVF",
                                                            "V2", "V3", "V4", "V6"]

    def test_keep_all_identity(self):
        x = np.random.default_rng(1).normal(size=(2, 12, 5))
        np.testing.assert_array_equal(mask_leads(x, MaskSpec(tuple(LeadId))), x)

    def test_single_lead(self):
        x = np.random.default_rng(2).normal(size=(12, 5))
        y = mask_leads(x, MaskSpec((LeadId.II,)))
        np.testing.assert_array_equal(y[1], x[1])
        assert np.count_nonzero(np.abs(y).sum(axis=1)) == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            MaskSpec(())

    def test_matrix(self):
        m = MaskSpec().matrix(4)
        assert m.shape == (12, 4)
        assert m[[1, 6, 10]].sum() == 0 and m.sum() == 9 * 4

    def test_parse_and_str(self):
        spec = MaskSpec.parse("V5, II ,v1")
        assert str(spec) == "II,V1,V5"
        assert spec == MaskSpec()

    @given(st.sets(st.sampled_from(list(LeadId)), min_size=1), st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_idempotent_and_exact(self, keep, seed):
        spec = MaskSpec(tuple(keep))
        x = np.random.default_rng(seed).normal(size=(3, 12, 8))
        y = mask_leads(x, spec)
        np.testing.assert_array_equal(mask_leads(y, spec), y)
        rows = spec.keep_rows()
        np.testing.assert_array_equal(y[:, rows], x[:, rows])
        assert not y[:, ~rows].any()

    def test_wrong_axis(self):
        with pytest.raises(ValueError):
            mask_leads(np.zeros((11, 4)), MaskSpec())


class TestShapes:
    def test_default_arch_t1000(self):
        arch = ArchConfig()
        assert arch.channel_plan == (128, 256, 512)
        assert arch.downsample_factor == 8 and arch.latent_dim == 4

    def test_encode_shape_and_zero_heads(self):
        m = WearEcgVae(TINY, seed=0, dtype=np.float64)
        q = m.encode(np.zeros((2, 12, 1000)))
        assert q.mu.shape == (2, 4, 125)
        assert not q.mu.data.any() and not q.logvar.data.any()

    def test_batch_independence(self):
        m = WearEcgVae(TINY, seed=0, dtype=np.float64)
        x = np.random.default_rng(0).normal(size=(1, 12, 64))
        q = m.encode(np.concatenate([x, x]))
        np.testing.assert_array_equal(q.mu.data[0], q.mu.data[1])
        np.testing.assert_array_equal(q.logvar.data[0], q.logvar.data[1])

    @given(st.integers(1, 256))
    @settings(max_examples=20, deadline=None)
    def test_decode_shape_inverse(self, t_prime):
        m = WearEcgVae(TINY, seed=0)
        z = np.random.default_rng(t_prime).uniform(-3, 3, size=(1, 4, t_prime))
        out = m.decode(z)
        assert out.shape == (1, 12, 8 * t_prime)
        assert np.all(np.isfinite(out.data))

    def test_decode_deterministic(self):
        m = WearEcgVae(TINY, seed=1)
        z = np.random.default_rng(0).normal(size=(2, 4, 10))
        assert m.decode(z).data.tobytes() == m.decode(z).data.tobytes()

    def test_indivisible_t(self):
        with pytest.raises(ValueError, match="divisible"):
            WearEcgVae(TINY).encode(np.zeros((1, 12, 1001)))

    def test_decode_shape_mismatch(self):
        with pytest.raises(ValueError):
            WearEcgVae(TINY).decode(np.zeros((1, 5, 10)))

    def test_arch_validation(self):
        with pytest.raises(ValueError):
            ArchConfig(channel_plan=())
        with pytest.raises(ValueError):
            ArchConfig(channel_plan=(8, 16, 18), heads=4)

    def test_parameter_shapes(self):
        m = WearEcgVae(TINY)
        params = dict(m.named_parameters())
        assert params["enc_stem.weight"].shape == (8, 12, 3)
        assert params["out_conv.weight"].shape == (12, 8, 3)
        assert params["mu_head.weight"].shape == (4, 16, 3)

    def test_seeded_init(self):
        assert WearEcgVae(TINY, seed=3).digest() == WearEcgVae(TINY, seed=3).digest()
        assert WearEcgVae(TINY, seed=3).digest() != WearEcgVae(TINY, seed=4).digest()


class TestReparameterize:
    def test_vanishing_sigma(self):
        q = latent(np.full((1, 4, 3), 0.7), np.full((1, 4, 3), LOGVAR_RANGE[0]))
        z = reparameterize(q, np.random.default_rng(0))
        assert np.abs(z.data - 0.7).max() < 1e-6

    def test_moments(self):
        q = latent(np.zeros((1, 1, 100_000)), np.zeros((1, 1, 100_000)))
        z = reparameterize(q, np.random.default_rng(0)).data
        assert abs(z.mean()) < 0.02
        assert abs(z.var() - 1) < 0.05

    def test_seeded(self):
        q = latent(np.zeros((2, 4, 5)), np.zeros((2, 4, 5)))
        a = reparameterize(q, np.random.default_rng(5)).data
        b = reparameterize(q, np.random.default_rng(5)).data
        assert a.tobytes() == b.tobytes()

    def test_gradient_to_mu_and_logvar(self):
        mu = Tensor(np.array([0.5]), requires_grad=True)
        lv = Tensor(np.array([0.2]), requires_grad=True)
        eps = np.array([1.3])
        reparameterize(LatentGaussian(mu, lv), eps=eps).sum().backward()
        assert mu.grad[0] == pytest.approx(1.0)
        assert lv.grad[0] == pytest.approx(0.5 * math.exp(0.1) * 1.3)

    def test_logvar_clamped(self):
        m = WearEcgVae(TINY, seed=0, dtype=np.float64)
        m.logvar_head.bias.data[:] = 1e3
        q = m.encode(np.zeros((1, 12, 16)))
        assert q.logvar.data.max() == LOGVAR_RANGE[1]


class TestLosses:
    def test_kl_oracles(self):
        assert float(kl_divergence(latent(np.zeros((1, 4, 5)), np.zeros((1, 4, 5)))).data) == 0.0
        assert float(kl_divergence(latent([[[1.0]]], [[[0.0]]])).data) == pytest.approx(0.5, abs=1e-12)
        assert float(kl_divergence(latent([[[0.0]]], [[[math.log(2)]]])).data) == pytest.approx(
            (1 - math.log(2)) / 2, abs=1e-12)

    def test_kl_batch_mean(self):
        mu = np.zeros((2, 1, 1))
        mu[0] = 1.0
        assert float(kl_divergence(latent(mu, np.zeros_like(mu))).data) == pytest.approx(0.25)

    @given(st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_kl_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        mu = rng.normal(0, 3, size=(2, 4, 6))
        lv = rng.uniform(*LOGVAR_RANGE, size=(2, 4, 6))
        assert float(kl_divergence(latent(mu, lv)).data) >= -1e-9

    def test_recon_oracles(self):
        x = np.random.default_rng(0).normal(size=(2, 12, 8))
        assert float(recon_loss(Tensor(x), x).data) == 0.0
        assert float(recon_loss(Tensor(x + 1), x).data) == pytest.approx(1.0)
        assert float(recon_loss(Tensor(np.array([1.0, -1.0])), np.zeros(2)).data) == 1.0
        with pytest.raises(ValueError):
            recon_loss(Tensor(np.zeros(3)), np.zeros(4))

    def test_total_combination(self):
        q = latent([[[1.0]]], [[[0.0]]])  # KL 0.5
        x = np.zeros(4)
        xh = Tensor(np.ones(4))  # recon 1
        assert float(total_loss(xh, x, q, 1e-4).total.data) == pytest.approx(1.00005, abs=1e-12)
        parts = total_loss(xh, x, q, 0.0)
        assert float(parts.total.data) == float(parts.recon.data)

    def test_total_monotone_in_kl(self):
        x = np.zeros(3)
        xh = Tensor(np.full(3, 0.5))
        vals = [float(total_loss(xh, x, latent([[[m]]], [[[0.0]]]), 1e-4).total.data) for m in (0, 1, 2, 3)]
        assert vals == sorted(vals)

    def test_extra_terms(self):
        q = latent([[[0.0]]], [[[0.0]]])
        parts = total_loss(Tensor(np.zeros(2)), np.zeros(2), q, extra_terms={"perc": Tensor(np.array(2.0))})
        assert float(parts.total.data) == 2.0


class TestFullLossGradient:
    def test_gradcheck_float64(self):
        rng = np.random.default_rng(0)
        arch = ArchConfig(channel_plan=(4, 8), heads=2, enc_attn_blocks=1, dec_attn_blocks=1)
        m = WearEcgVae(arch, seed=0, dtype=np.float64)
        # leave the zero-initialised heads: perturb so the latent path is exercised
        for p in m.parameters():
            p.data += rng.normal(0, 0.05, p.shape)
        x = rng.normal(size=(2, 12, 8))
        xm = mask_leads(x, MaskSpec())
        eps = rng.normal(size=(2, 4, 2))

        def f():
            q = m.encode(xm)
            return total_loss(m.decode(reparameterize(q, eps=eps)), x, q, beta_kl=0.1).total

        rep = grad_check(f, m.parameters(), h=1e-5, tol=1e-3, n_coords=400, seed=1)
        assert rep.passed, rep.max_rel_error
