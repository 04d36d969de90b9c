import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priorforge.mri import SamplingMask
from priorforge.phantoms import (Ellipse, FileFormatError, MaskSpec, NoiseSpec,
                                 PhantomSpec, generate_cartesian_mask,
                                 generate_csm, generate_phantom, read_cplx,
                                 read_mask, simulate_kspace, write_cplx,
                                 write_mask)


class TestPhantom:
    def test_deterministic(self):
        a = generate_phantom(PhantomSpec(size=32, seed=7))
        b = generate_phantom(PhantomSpec(size=32, seed=7))
        assert np.array_equal(a.data, b.data)

    def test_seed_changes_phase_not_magnitude(self):
        a = generate_phantom(PhantomSpec(size=32, seed=0))
        b = generate_phantom(PhantomSpec(size=32, seed=1))
        assert np.allclose(np.abs(a.data), np.abs(b.data))
        assert not np.allclose(a.data, b.data)

    def test_magnitude_range(self):
        x = generate_phantom(PhantomSpec(size=64))
        mag = np.abs(x.data)
        assert mag.min() >= 0.0
        assert mag.max() <= 1.0 + 1e-12
        assert mag.max() > 0.5  # skull rim present

    def test_background_empty(self):
        x = generate_phantom(PhantomSpec(size=64))
        assert np.abs(x.data[0, 0]) == 0.0

    def test_size_validation(self):
        with pytest.raises(ValueError, match=">= 16"):
            PhantomSpec(size=8)

    def test_degenerate_ellipse(self):
        spec = PhantomSpec(size=16, ellipses=(Ellipse(1.0, 0.0, 0.5, 0, 0),))
        with pytest.raises(ValueError, match="degenerate"):
            generate_phantom(spec)


class TestCSM:
    def test_normalization(self):
        S = generate_csm(4, 32)
        assert np.allclose((np.abs(S.data) ** 2).sum(axis=0), 1.0)

    def test_coil_count(self):
        assert generate_csm(6, 16).coils == 6
        with pytest.raises(ValueError, match=">= 1"):
            generate_csm(0, 16)

    def test_profiles_differ_between_coils(self):
        S = generate_csm(4, 32)
        assert not np.allclose(np.abs(S.data[0]), np.abs(S.data[1]))


class TestMask:
    def test_line_budget(self):
        m = generate_cartesian_mask(MaskSpec(64, 4, 5))
        assert int(m.columns.sum()) == 16

    def test_center_block_contiguous(self):
        m = generate_cartesian_mask(MaskSpec(64, 4, 5))
        assert m.center_cols == (30, 31, 32, 33, 34)
        assert m.columns[list(m.center_cols)].all()

    def test_column_structure(self):
        m = generate_cartesian_mask(MaskSpec(32, 2, 4))
        assert (m.data == m.data[0:1, :]).all()

    def test_full_sampling(self):
        m = generate_cartesian_mask(MaskSpec(16, 1, 4))
        assert m.columns.all()

    def test_budget_validation(self):
        with pytest.raises(ValueError, match="exceed the sampling budget"):
            MaskSpec(32, 8, 25)

    @given(width=st.sampled_from([32, 48, 64]),
           accel=st.sampled_from([2.0, 4.0, 8.0]),
           center=st.integers(min_value=1, max_value=4))
    @settings(max_examples=25, deadline=None)
    def test_budget_always_met(self, width, accel, center):
        spec = MaskSpec(width, accel, center)
        m = generate_cartesian_mask(spec)
        assert int(m.columns.sum()) == spec.total_lines


class TestSimulation:
    def test_noiseless_matches_forward(self, rng):
        x = generate_phantom(PhantomSpec(size=32))
        S = generate_csm(4, 32)
        M = generate_cartesian_mask(MaskSpec(32, 4, 3))
        y = simulate_kspace(x, S, M)
        assert np.abs(y.data[:, :, M.columns == 0]).max() == 0.0

    def test_noise_only_on_sampled_entries(self):
        x = generate_phantom(PhantomSpec(size=32))
        S = generate_csm(4, 32)
        M = generate_cartesian_mask(MaskSpec(32, 4, 3))
        y = simulate_kspace(x, S, M, NoiseSpec(sigma=0.1, seed=5))
        assert np.abs(y.data[:, :, M.columns == 0]).max() == 0.0
        clean = simulate_kspace(x, S, M)
        assert not np.allclose(y.data, clean.data)

    def test_noise_deterministic_in_seed(self):
        x = generate_phantom(PhantomSpec(size=32))
        S = generate_csm(4, 32)
        M = generate_cartesian_mask(MaskSpec(32, 4, 3))
        a = simulate_kspace(x, S, M, NoiseSpec(0.05, seed=1))
        b = simulate_kspace(x, S, M, NoiseSpec(0.05, seed=1))
        c = simulate_kspace(x, S, M, NoiseSpec(0.05, seed=2))
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)

    def test_sigma_validation(self):
        with pytest.raises(ValueError, match=">= 0"):
            NoiseSpec(sigma=-0.1)


class TestFileFormats:
    def test_cplx_round_trip_rank2(self, rng, tmp_path):
        arr = (rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
               ).astype(np.complex64).astype(np.complex128)
        p = tmp_path / "x.cplx"
        write_cplx(p, arr)
        assert np.array_equal(read_cplx(p), arr)

    def test_cplx_round_trip_rank3(self, rng, tmp_path):
        arr = (rng.normal(size=(3, 4, 4)).astype(np.float32).astype(np.float64)
               + 0j)
        p = tmp_path / "y.cplx"
        write_cplx(p, arr)
        assert np.array_equal(read_cplx(p), arr)

    def test_cplx_bad_magic(self, tmp_path):
        p = tmp_path / "bad.cplx"
        p.write_bytes(b"NOPE!\x00" + b"\x00" * 32)
        with pytest.raises(FileFormatError, match="bad magic"):
            read_cplx(p)

    def test_cplx_truncated(self, rng, tmp_path):
        p = tmp_path / "t.cplx"
        write_cplx(p, rng.normal(size=(8, 8)) + 0j)
        p.write_bytes(p.read_bytes()[:-10])
        with pytest.raises(FileFormatError, match="truncated"):
            read_cplx(p)

    def test_cplx_corrupt_payload(self, rng, tmp_path):
        p = tmp_path / "c.cplx"
        write_cplx(p, rng.normal(size=(8, 8)) + 0j)
        blob = bytearray(p.read_bytes())
        blob[40] ^= 0xFF
        p.write_bytes(bytes(blob))
        with pytest.raises(FileFormatError, match="checksum"):
            read_cplx(p)

    def test_cplx_dimension_overflow(self, tmp_path):
        import struct
        p = tmp_path / "o.cplx"
        p.write_bytes(b"CPLX1\x00" + struct.pack("<I", 2)
                      + struct.pack("<2I", 1 << 30, 4) + b"\x00" * 8)
        with pytest.raises(FileFormatError, match="dimension overflow"):
            read_cplx(p)

    def test_cplx_zero_extent(self, tmp_path):
        import struct
        p = tmp_path / "z.cplx"
        p.write_bytes(b"CPLX1\x00" + struct.pack("<I", 2)
                      + struct.pack("<2I", 0, 4) + b"\x00" * 8)
        with pytest.raises(FileFormatError, match="extent"):
            read_cplx(p)

    def test_cplx_rejects_rank(self, rng, tmp_path):
        with pytest.raises(FileFormatError, match="rank"):
            write_cplx(tmp_path / "r.cplx", rng.normal(size=(2, 2, 2, 2)) + 0j)

    def test_mask_round_trip(self, tmp_path):
        m = generate_cartesian_mask(MaskSpec(32, 4, 3))
        p = tmp_path / "m.mask"
        write_mask(p, m)
        back = read_mask(p)
        assert isinstance(back, SamplingMask)
        assert np.array_equal(back.data, m.data)

    def test_mask_bad_magic(self, tmp_path):
        p = tmp_path / "bad.mask"
        p.write_bytes(b"CPLX1\x00" + b"\x00" * 16)
        with pytest.raises(FileFormatError, match="bad magic"):
            read_mask(p)

    def test_mask_rejects_non_binary(self, tmp_path):
        import struct, zlib
        payload = bytes([0, 1, 2, 1])
        blob = (b"MASK1\x00" + struct.pack("<I", 2) + struct.pack("<2I", 2, 2)
                + payload + struct.pack("<I", zlib.crc32(payload)))
        p = tmp_path / "nb.mask"
        p.write_bytes(blob)
        with pytest.raises(FileFormatError, match="outside"):
            read_mask(p)
