import numpy as np
import pytest

from priorforge.architectures import (BILINEAR_TAPS, L100_TAPS, NEAREST_TAPS,
                                      ArchError, ArchSpec, FixedUpsampler,
                                      TransposedConvUpsampler, build_network,
                                      count_params, make_noise_input,
                                      make_upsampler, parse_arch_name)
from priorforge.autodiff import Tensor
from priorforge.rng import SplitMix64


class TestArchSpec:
    def test_name_encoder_decoder(self):
        s = ArchSpec("encoder-decoder", 5, "half", 128, 5)
        assert s.name == "A_5_half_128_5"

    def test_name_decoder_families(self):
        assert ArchSpec("conv-decoder", 7, "zero", 256, 3).name == "cd_256"
        assert ArchSpec("deep-decoder", 7, "zero", 256, 1).name == "dd_256"

    def test_parse_round_trip(self):
        s = parse_arch_name("A_2_full_64_3")
        assert (s.family, s.depth, s.skip_policy, s.width, s.kernel) == \
            ("encoder-decoder", 2, "full", 64, 3)
        assert s.name == "A_2_full_64_3"

    def test_parse_decoder_names(self):
        assert parse_arch_name("cd_128").family == "conv-decoder"
        assert parse_arch_name("dd_64").kernel == 1

    def test_parse_rejects_garbage(self):
        for bad in ("B_2_full_64_3", "A_2_full_64", "A_x_full_64_3", "cd"):
            with pytest.raises(ArchError, match="parse"):
                parse_arch_name(bad)

    def test_validation(self):
        with pytest.raises(ArchError, match="family"):
            ArchSpec(family="mlp")
        with pytest.raises(ArchError, match="skip"):
            ArchSpec(skip_policy="alternate")
        with pytest.raises(ArchError, match="upsampler"):
            ArchSpec(upsampler="lanczos")
        with pytest.raises(ArchError, match="odd"):
            ArchSpec(kernel=4)


class TestFixedUpsamplers:
    def test_nearest_is_exact_replication(self, rng):
        x = rng.normal(size=(1, 2, 5, 5))
        out = make_upsampler("nearest")(Tensor(x)).data
        expect = x.repeat(2, axis=2).repeat(2, axis=3)
        assert np.array_equal(out, expect)

    def test_bilinear_impulse_response(self):
        x = np.zeros((1, 1, 8, 8))
        x[0, 0, 3, 3] = 1.0
        out = make_upsampler("bilinear")(Tensor(x)).data[0, 0]
        t = np.array([0.25, 0.5, 0.25])
        expect = 4.0 * np.outer(t, t)
        assert np.allclose(out[5:8, 5:8], expect)
        patch = out.copy()
        patch[5:8, 5:8] = 0.0
        assert np.abs(patch).max() == 0.0

    def test_gain_preserves_mean(self, rng):
        # interior energy: a constant image stays constant after upsampling
        x = np.full((1, 1, 8, 8), 3.0)
        for kind in ("nearest", "bilinear"):
            out = make_upsampler(kind)(Tensor(x)).data
            assert np.allclose(out[0, 0, 4:12, 4:12], 3.0)

    def test_l100_taps_sum_to_one(self):
        assert abs(sum(L100_TAPS) - 1.0) < 1e-5

    def test_tap_constants(self):
        assert NEAREST_TAPS == (0.5, 0.5)
        assert BILINEAR_TAPS == (0.25, 0.5, 0.25)
        assert len(L100_TAPS) == 17

    def test_fixed_upsamplers_have_no_params(self):
        assert FixedUpsampler(BILINEAR_TAPS).params() == []


class TestTransposedUpsampler:
    def test_init_matches_bilinear(self, rng):
        x = rng.normal(size=(1, 3, 6, 6))
        fixed = make_upsampler("bilinear")(Tensor(x)).data
        up = make_upsampler("transposed", channels=3, rng=SplitMix64(0))
        learned = up(Tensor(x)).data
        assert np.allclose(learned, fixed, atol=1e-12)

    def test_doubles_extent(self, rng):
        up = make_upsampler("transposed", channels=2, rng=SplitMix64(0))
        out = up(Tensor(rng.normal(size=(1, 2, 5, 5))))
        assert out.data.shape == (1, 2, 10, 10)

    def test_rejects_even_kernel(self):
        with pytest.raises(ArchError, match="odd"):
            TransposedConvUpsampler(SplitMix64(0), "up", 2, kernel=4)

    def test_unknown_kind(self):
        with pytest.raises(ArchError, match="upsampler"):
            make_upsampler("box")


class TestNoiseInput:
    def test_deterministic(self):
        a = make_noise_input(4, 8, 8, seed=3)
        b = make_noise_input(4, 8, 8, seed=3)
        assert np.array_equal(a.data, b.data)

    def test_uniform_range(self):
        z = make_noise_input(8, 16, 16, seed=0)
        assert z.data.min() >= 0.0
        assert z.data.max() < 1.0

    def test_seed_sensitivity(self):
        a = make_noise_input(4, 8, 8, seed=0)
        b = make_noise_input(4, 8, 8, seed=1)
        assert not np.array_equal(a.data, b.data)

    def test_rejects_bad_extents(self):
        with pytest.raises(ArchError, match="positive"):
            make_noise_input(0, 8, 8, seed=0)


class TestEncoderDecoder:
    def test_output_shape(self):
        net = build_network(parse_arch_name("A_2_full_32_3", output_size=32))
        assert net.forward().data.shape == (1, 2, 32, 32)

    def test_param_counts_match_reference_scale(self):
        # published totals for the 256x256 configurations, within 30%
        targets = {
            "A_2_full_64_3": 0.24e6,
            "A_5_full_64_3": 0.59e6,
            "A_2_full_256_3": 3.7e6,
            "A_5_full_256_3": 9.3e6,
        }
        for name, target in targets.items():
            net = build_network(parse_arch_name(name, output_size=256))
            c = count_params(net)
            assert 0.7 * target <= c <= 1.3 * target, (name, c)

    def test_decoder_family_param_counts(self):
        for name, target in (("dd_256", 0.47e6), ("cd_256", 4.1e6)):
            net = build_network(parse_arch_name(name, output_size=256))
            c = count_params(net)
            assert 0.7 * target <= c <= 1.3 * target, (name, c)

    def test_skip_policy_concats(self):
        full = build_network(parse_arch_name("A_2_full_32_3", output_size=32))
        zero = build_network(ArchSpec("encoder-decoder", 2, "zero", 32, 3,
                                      output_size=32))
        half = build_network(ArchSpec("encoder-decoder", 3, "half", 32, 3,
                                      output_size=32))
        assert full.concat_count == 2
        assert zero.concat_count == 0
        assert half.concat_count == 2

    def test_divisibility_check(self):
        with pytest.raises(ArchError, match="divisible"):
            build_network(parse_arch_name("A_5_full_32_3", output_size=48))

    def test_rejects_missing_upsampler(self):
        spec = ArchSpec("encoder-decoder", 2, "full", 32, 3, upsampler="none",
                        output_size=32)
        with pytest.raises(ArchError, match="upsampler"):
            build_network(spec)

    def test_deterministic_in_seed(self):
        a = build_network(parse_arch_name("A_2_full_32_3", output_size=32, seed=5))
        b = build_network(parse_arch_name("A_2_full_32_3", output_size=32, seed=5))
        assert np.array_equal(a.forward().data, b.forward().data)

    def test_upsampler_changes_output(self):
        a = build_network(parse_arch_name("A_2_full_32_3", output_size=32))
        b = build_network(parse_arch_name("A_2_full_32_3", output_size=32,
                                          upsampler="bilinear"))
        assert not np.array_equal(a.forward().data, b.forward().data)


class TestDecoderOnly:
    @pytest.mark.parametrize("name", ["cd_32", "dd_32"])
    def test_output_shape(self, name):
        net = build_network(parse_arch_name(name, output_size=64))
        assert net.forward().data.shape == (1, 2, 64, 64)

    def test_none_upsampler_allowed(self):
        net = build_network(parse_arch_name("dd_16", output_size=32,
                                            upsampler="none"))
        assert net.forward().data.shape == (1, 2, 32, 32)

    def test_deep_decoder_uses_1x1(self):
        net = build_network(parse_arch_name("dd_16", output_size=32))
        assert all(l.weight.data.shape[2:] == (1, 1)
                   for l in net.conv_layers[:-1])


class TestNetworkInstance:
    def test_snapshot_restore(self):
        net = build_network(parse_arch_name("A_2_full_32_3", output_size=32))
        before = net.forward().data.copy()
        snap = net.snapshot()
        for p in net.params():
            p.data += 0.1
        assert not np.array_equal(net.forward().data, before)
        net.restore(snap)
        assert np.array_equal(net.forward().data, before)

    def test_enable_lipschitz_adds_params(self):
        net = build_network(parse_arch_name("A_2_full_32_3", output_size=32))
        n0 = len(net.params())
        ks = net.enable_lipschitz()
        assert len(ks) == len(net.conv_layers)
        assert len(net.params()) == n0 + len(ks)

    def test_param_names_unique(self):
        net = build_network(parse_arch_name("A_2_full_32_3", output_size=32))
        names = [p.name for p in net.params()]
        assert len(names) == len(set(names))
