"""Synthetic phantoms, coil profiles, sampling masks, noisy k-space, file I/O.

All generators are pure functions of their spec (seed included). The on-disk
formats are the little-endian ``.cplx`` / ``.mask`` containers described in
the README.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .mri import (ComplexImage, CoilSensitivities, GeometryError, KSpace,
                  SamplingMask, _forward_arrays)
from .rng import SplitMix64, derive_seed


class FileFormatError(ValueError):
    """Raised on malformed .cplx / .mask files."""


@dataclass(frozen=True)
class Ellipse:
    """Ellipse in normalized [-1, 1] coordinates; angle in degrees."""

    intensity: float
    ax: float
    ay: float
    cx: float
    cy: float
    angle: float = 0.0


# Modified Shepp-Logan head phantom (intensities keep magnitudes in [0, 1]).
HEAD_ELLIPSES = (
    Ellipse(1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    Ellipse(-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    Ellipse(-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    Ellipse(-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    Ellipse(0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    Ellipse(0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    Ellipse(0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    Ellipse(0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    Ellipse(0.10, 0.0230, 0.0230, 0.00, -0.6050, 0.0),
    Ellipse(0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 64
    ellipses: tuple = HEAD_ELLIPSES
    seed: int = 0

    def __post_init__(self):
        if self.size < 16:
            raise ValueError(f"phantom size must be >= 16, got {self.size}")
        object.__setattr__(self, "ellipses", tuple(self.ellipses))


@dataclass(frozen=True)
class MaskSpec:
    width: int
    acceleration: float = 4.0
    center_lines: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.acceleration < 1.0:
            raise ValueError("acceleration must be >= 1")
        if self.center_lines > self.total_lines:
            raise ValueError(
                f"{self.center_lines} center lines exceed the sampling budget of "
                f"{self.total_lines} lines"
            )

    @property
    def total_lines(self) -> int:
        return int(round(self.width / self.acceleration))


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be >= 0")


def generate_phantom(spec: PhantomSpec) -> ComplexImage:
    """Shepp-Logan-style ellipse superposition with a smooth polynomial phase."""
    n = spec.size
    coords = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    xx, yy = np.meshgrid(coords, -coords)  # row 0 at the top
    mag = np.zeros((n, n))
    for e in spec.ellipses:
        if e.ax <= 0 or e.ay <= 0:
            raise ValueError(f"degenerate ellipse with axes ({e.ax}, {e.ay})")
        th = np.deg2rad(e.angle)
        xr = (xx - e.cx) * np.cos(th) + (yy - e.cy) * np.sin(th)
        yr = -(xx - e.cx) * np.sin(th) + (yy - e.cy) * np.cos(th)
        mag += e.intensity * ((xr / e.ax) ** 2 + (yr / e.ay) ** 2 <= 1.0)
    rng = SplitMix64(derive_seed(spec.seed, "phantom-phase"))
    c = rng.uniform(6) - 0.5  # low-order polynomial phase coefficients
    phase = np.pi * (c[0] + c[1] * xx + c[2] * yy
                     + c[3] * xx ** 2 + c[4] * xx * yy + c[5] * yy ** 2)
    return ComplexImage(mag * np.exp(1j * phase))


def generate_csm(coils: int, size: int) -> CoilSensitivities:
    """Smooth Gaussian-bump coil profiles, normalized to sum |S|^2 = 1."""
    if coils < 1:
        raise ValueError("coil count must be >= 1")
    n = size
    coords = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    xx, yy = np.meshgrid(coords, -coords)
    width = 0.9
    profiles = np.empty((coils, n, n), dtype=np.complex128)
    for k in range(coils):
        th = 2.0 * np.pi * (k + 0.5) / coils
        cx, cy = np.cos(th), np.sin(th)
        d2 = (xx - cx) ** 2 + (yy - cy) ** 2
        g = np.exp(-d2 / (2.0 * width ** 2))
        phase = 0.5 * (xx * cx + yy * cy) + th
        profiles[k] = g * np.exp(1j * phase)
    norm = np.sqrt((np.abs(profiles) ** 2).sum(axis=0))
    return CoilSensitivities(profiles / norm)


def generate_cartesian_mask(spec: MaskSpec) -> SamplingMask:
    """Contiguous center block around the DC column plus uniformly spaced
    outer lines; every row of a selected column is sampled."""
    w = spec.width
    total = spec.total_lines
    c = spec.center_lines
    dc = w // 2
    start = dc - c // 2
    center = list(range(start, start + c))
    if center and (center[0] < 0 or center[-1] >= w):
        raise ValueError("center block does not fit in the mask width")
    outer_budget = total - c
    outer_cols = [j for j in range(w) if j not in set(center)]
    chosen = []
    if outer_budget > 0:
        step = len(outer_cols) / outer_budget
        chosen = [outer_cols[int(i * step)] for i in range(outer_budget)]
    cols = np.zeros(w, dtype=np.uint8)
    cols[center] = 1
    cols[chosen] = 1
    if int(cols.sum()) != total:
        raise ValueError("mask construction failed to reach the line budget")
    data = np.repeat(cols[None, :], w, axis=0)
    return SamplingMask(data, center_cols=tuple(center))


def simulate_kspace(x: ComplexImage, S: CoilSensitivities, M: SamplingMask,
                    noise: NoiseSpec = NoiseSpec()) -> KSpace:
    """Forward model output plus i.i.d. complex Gaussian noise on sampled
    entries only; deterministic in the noise seed."""
    y = _forward_arrays(x.data, S.data, M.data)
    if noise.sigma > 0:
        rng = SplitMix64(derive_seed(noise.seed, "kspace-noise"))
        eps = rng.normal(y.shape, noise.sigma) + 1j * rng.normal(y.shape, noise.sigma)
        y = y + M.data[None] * eps
    return KSpace(y)


# -- file formats ------------------------------------------------------------

_CPLX_MAGIC = b"CPLX1\x00"
_MASK_MAGIC = b"MASK1\x00"
_MAX_EXTENT = 1 << 24


def _check_extents(extents):
    for e in extents:
        if e <= 0:
            raise FileFormatError(f"zero or negative extent {e} rejected")
        if e >= _MAX_EXTENT:
            raise FileFormatError(f"dimension overflow: extent {e} too large")


def write_cplx(path, data: np.ndarray) -> None:
    """Write a complex array (h, w) or (coils, h, w) as a .cplx file."""
    arr = np.asarray(data, dtype=np.complex128)
    if isinstance(data, ComplexImage):
        arr = data.data
    if arr.ndim not in (2, 3):
        raise FileFormatError(f".cplx supports rank 2 or 3, got {arr.ndim}")
    _check_extents(arr.shape)
    pairs = np.empty(arr.shape + (2,), dtype="<f4")
    pairs[..., 0] = arr.real
    pairs[..., 1] = arr.imag
    payload = pairs.tobytes()
    with open(path, "wb") as f:
        f.write(_CPLX_MAGIC)
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def read_cplx(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:6] != _CPLX_MAGIC:
        raise FileFormatError(f"bad magic in {path}")
    return _read_body(blob, path, complex_payload=True)


def write_mask(path, mask: SamplingMask) -> None:
    arr = mask.data
    _check_extents(arr.shape)
    payload = arr.astype("u1").tobytes()
    with open(path, "wb") as f:
        f.write(_MASK_MAGIC)
        f.write(struct.pack("<I", 2))
        f.write(struct.pack("<2I", *arr.shape))
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def read_mask(path) -> SamplingMask:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:6] != _MASK_MAGIC:
        raise FileFormatError(f"bad magic in {path}")
    arr = _read_body(blob, path, complex_payload=False)
    return SamplingMask(arr)


def _read_body(blob: bytes, path, complex_payload: bool):
    off = 6
    if len(blob) < off + 4:
        raise FileFormatError(f"truncated header in {path}")
    (rank,) = struct.unpack_from("<I", blob, off)
    off += 4
    if rank < 1 or rank > 4:
        raise FileFormatError(f"dimension overflow: rank {rank} in {path}")
    if len(blob) < off + 4 * rank:
        raise FileFormatError(f"truncated header in {path}")
    extents = struct.unpack_from(f"<{rank}I", blob, off)
    off += 4 * rank
    _check_extents(extents)
    count = int(np.prod(extents))
    nbytes = count * (8 if complex_payload else 1)
    if len(blob) < off + nbytes + 4:
        raise FileFormatError(f"truncated payload in {path}")
    payload = blob[off : off + nbytes]
    (crc,) = struct.unpack_from("<I", blob, off + nbytes)
    if crc != (zlib.crc32(payload) & 0xFFFFFFFF):
        raise FileFormatError(f"payload checksum mismatch in {path}")
    if complex_payload:
        pairs = np.frombuffer(payload, dtype="<f4").reshape(extents + (2,))
        return (pairs[..., 0].astype(np.float64)
                + 1j * pairs[..., 1].astype(np.float64))
    arr = np.frombuffer(payload, dtype="u1").reshape(extents)
    if not np.isin(arr, (0, 1)).all():
        raise FileFormatError(f"mask values outside {{0,1}} in {path}")
    return arr.copy()
