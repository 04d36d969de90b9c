import math

import numpy as np
import pytest

from priorforge.metrics import (MetricReport, filter_frequency_response,
                                masked_region_psnr, psnr, ssim)
from priorforge.mri import GeometryError, SamplingMask, _dft2c


def column_mask(cols, n):
    v = np.zeros(n, dtype=np.uint8)
    v[list(cols)] = 1
    return SamplingMask(np.repeat(v[None], n, axis=0))


class TestPSNR:
    def test_known_value(self):
        # MSE 0.01 against a unit-range reference is exactly 20 dB
        ref = np.zeros((10, 10))
        ref[0, 0] = 1.0
        x = ref + 0.1
        assert abs(psnr(x, ref) - 20.0) < 1e-9

    def test_identical_is_inf(self):
        x = np.ones((4, 4))
        assert psnr(x, x) == math.inf

    def test_range_from_reference(self):
        ref = np.full((4, 4), 2.0)
        x = ref + 0.2
        assert np.isclose(psnr(x, ref), 10 * math.log10(4.0 / 0.04))

    def test_shape_mismatch(self):
        with pytest.raises(GeometryError, match="extent mismatch"):
            psnr(np.zeros((3, 3)), np.zeros((4, 4)))


class TestSSIM:
    def test_identical_images(self, rng):
        x = rng.uniform(size=(32, 32))
        assert np.isclose(ssim(x, x), 1.0)

    def test_symmetric_in_structure(self, rng):
        ref = rng.uniform(size=(32, 32))
        noisy = ref + rng.normal(size=(32, 32)) * 0.2
        assert ssim(noisy, ref) < 0.9

    def test_matches_reference_implementation(self, rng):
        from skimage.metrics import structural_similarity
        for _ in range(10):
            ref = rng.uniform(size=(24, 24))
            x = ref + rng.normal(size=(24, 24)) * rng.uniform(0.01, 0.3)
            expect = structural_similarity(
                x, ref, win_size=11, gaussian_weights=True, sigma=1.5,
                use_sample_covariance=False, data_range=ref.max())
            assert abs(ssim(x, ref) - expect) < 1e-6

    def test_rejects_small_images(self):
        with pytest.raises(GeometryError, match="window"):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestMaskedRegionPSNR:
    def test_error_in_acquired_columns_ignored(self, rng):
        n = 16
        ref = rng.uniform(size=(n, n))
        M = column_mask([0, 1, 8], n)
        # perturb only acquired k-space columns of the error spectrum
        err_spec = np.zeros((n, n), dtype=complex)
        err_spec[:, 8] = rng.normal(size=n)
        from priorforge.mri import _idft2c
        x = ref + _idft2c(err_spec).real
        # the imaginary leakage is zero here because the error is confined
        assert masked_region_psnr(x, ref, M) > 100.0

    def test_error_in_masked_columns_counted(self, rng):
        n = 16
        ref = rng.uniform(size=(n, n))
        M = column_mask([0, 8], n)
        from priorforge.mri import _idft2c
        err_spec = np.zeros((n, n), dtype=complex)
        err_spec[:, 3] = 1.0
        x = ref + _idft2c(err_spec).real
        assert masked_region_psnr(x, ref, M) < psnr(ref + 1e-6, ref)

    def test_identical_is_inf(self):
        x = np.ones((8, 8))
        assert masked_region_psnr(x, x, column_mask([0], 8)) == math.inf

    def test_rejects_full_mask(self):
        with pytest.raises(GeometryError, match="every column"):
            masked_region_psnr(np.ones((8, 8)), np.ones((8, 8)),
                               column_mask(range(8), 8))

    def test_bounded_by_full_psnr_scale(self, rng):
        # with all error energy outside acquired columns, masked and full
        # PSNR agree by Parseval
        n = 16
        ref = rng.uniform(size=(n, n)) + 1.0
        M = column_mask([0], n)
        from priorforge.mri import _idft2c
        err_spec = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        err_spec[:, 0] = 0.0
        err = _idft2c(err_spec)
        x = ref + err.real
        full_mse = np.mean((x - ref) ** 2)
        spec = _dft2c((x - ref).astype(complex))
        masked_mse = (np.abs(spec[:, 1:]) ** 2).sum() / (n * n)
        assert np.isclose(
            masked_region_psnr(x, ref, M),
            10 * math.log10(ref.max() ** 2 / masked_mse))
        assert masked_mse <= full_mse + 1e-12


class TestFrequencyResponse:
    def test_dc_equals_tap_sum(self):
        taps = [0.25, 0.5, 0.25]
        assert np.isclose(filter_frequency_response(taps, [0.0])[0], 1.0)

    def test_nyquist_of_bilinear_is_zero(self):
        resp = filter_frequency_response([0.25, 0.5, 0.25], [np.pi])
        assert resp[0] < 1e-12

    def test_known_two_tap(self):
        # |0.5 + 0.5 e^{-iw}| = |cos(w/2)|
        w = np.linspace(0, np.pi, 64)
        resp = filter_frequency_response([0.5, 0.5], w)
        assert np.allclose(resp, np.abs(np.cos(w / 2)))

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="non-empty"):
            filter_frequency_response([], [0.0])


def test_metric_report_fields():
    r = MetricReport(psnr=30.0, ssim=0.9, data_range=1.0, masked_psnr=25.0)
    assert r.psnr == 30.0
    assert r.masked_psnr == 25.0
