"""Multi-coil Cartesian MRI acquisition model and its adjoint.

The forward model per coil is mask * F(S_i * x) with a centered, orthonormal
2-D DFT (DC at index (h//2, w//2)), so the adjoint equals the inverse on
full sampling and Parseval holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised on extent or coil-count mismatches."""


@dataclass(frozen=True)
class ComplexImage:
    """Complex-valued image plane stored as a complex128 array."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 2:
            raise GeometryError(f"ComplexImage must be 2-D, got {arr.ndim}-D")
        object.__setattr__(self, "data", arr)

    @property
    def re(self) -> np.ndarray:
        return self.data.real

    @property
    def im(self) -> np.ndarray:
        return self.data.imag

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class CoilSensitivities:
    """Per-coil complex sensitivity profiles, (coils, h, w)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise GeometryError("CoilSensitivities must be (coils>=1, h, w)")
        object.__setattr__(self, "data", arr)

    @property
    def coils(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape[1:]


@dataclass(frozen=True)
class KSpace:
    """Per-coil Fourier-domain planes, (coils, h, w)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 3:
            raise GeometryError("KSpace must be (coils, h, w)")
        object.__setattr__(self, "data", arr)

    @property
    def coils(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape[1:]


@dataclass(frozen=True)
class SamplingMask:
    """Column-structured 0/1 mask over k-space; ones mark acquired lines."""

    data: np.ndarray
    center_cols: tuple = field(default=())

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise GeometryError("SamplingMask must be 2-D")
        if not np.isin(arr, (0, 1)).all():
            raise GeometryError("SamplingMask values must be 0 or 1")
        col_ok = (arr == arr[0:1, :]).all()
        if not col_ok:
            raise GeometryError("SamplingMask must be column-structured")
        object.__setattr__(self, "data", arr.astype(np.uint8))
        object.__setattr__(self, "center_cols", tuple(self.center_cols))

    @property
    def acquired_count(self) -> int:
        return int(self.data.sum())

    @property
    def columns(self) -> np.ndarray:
        """0/1 vector over columns."""
        return self.data[0, :]

    @property
    def shape(self):
        return self.data.shape


# -- centered orthonormal DFT ------------------------------------------------

def dft2_centered(img: ComplexImage) -> ComplexImage:
    return ComplexImage(_dft2c(img.data))


def idft2_centered(img: ComplexImage) -> ComplexImage:
    return ComplexImage(_idft2c(img.data))


def _dft2c(arr: np.ndarray) -> np.ndarray:
    """Centered-in, centered-out orthonormal 2-D DFT over the last two axes."""
    shifted = np.fft.ifftshift(arr, axes=(-2, -1))
    spec = np.fft.fft2(shifted, norm="ortho")
    return np.fft.fftshift(spec, axes=(-2, -1))


def _idft2c(arr: np.ndarray) -> np.ndarray:
    shifted = np.fft.ifftshift(arr, axes=(-2, -1))
    img = np.fft.ifft2(shifted, norm="ortho")
    return np.fft.fftshift(img, axes=(-2, -1))


# -- acquisition model -------------------------------------------------------

def _check_geometry(shape, S: CoilSensitivities, M: SamplingMask):
    if S.shape != shape:
        raise GeometryError(f"CSM extents {S.shape} do not match image {shape}")
    if M.shape != shape:
        raise GeometryError(f"mask extents {M.shape} do not match image {shape}")


def _forward_arrays(x: np.ndarray, S: np.ndarray, m: np.ndarray) -> np.ndarray:
    return m[None] * _dft2c(S * x[None])


def _adjoint_arrays(y: np.ndarray, S: np.ndarray, m: np.ndarray) -> np.ndarray:
    return (np.conj(S) * _idft2c(m[None] * y)).sum(axis=0)


def forward_operator(x: ComplexImage, S: CoilSensitivities, M: SamplingMask) -> KSpace:
    """Per coil: mask * F(S_i * x); unsampled entries are exactly zero."""
    _check_geometry(x.shape, S, M)
    return KSpace(_forward_arrays(x.data, S.data, M.data))


def adjoint_operator(y: KSpace, S: CoilSensitivities, M: SamplingMask) -> ComplexImage:
    """Sum_i conj(S_i) * F^-1(mask * y_i)."""
    _check_geometry(y.shape, S, M)
    if y.coils != S.coils:
        raise GeometryError(f"k-space has {y.coils} coils, CSM has {S.coils}")
    return ComplexImage(_adjoint_arrays(y.data, S.data, M.data))


def rss_combine(coil_images) -> np.ndarray:
    """Pixelwise sqrt(sum_i |z_i|^2)."""
    if isinstance(coil_images, np.ndarray):
        stack = coil_images
    else:
        imgs = list(coil_images)
        if not imgs:
            raise GeometryError("rss_combine requires at least one coil image")
        stack = np.stack([c.data if isinstance(c, ComplexImage) else c for c in imgs])
    if stack.shape[0] < 1:
        raise GeometryError("rss_combine requires at least one coil image")
    return np.sqrt((np.abs(stack) ** 2).sum(axis=0))


def zero_filled_recon(y: KSpace, S: CoilSensitivities, M: SamplingMask) -> np.ndarray:
    """RSS of per-coil inverse DFTs of the masked k-space."""
    _check_geometry(y.shape, S, M)
    coil_imgs = _idft2c(M.data[None] * y.data)
    return rss_combine(coil_imgs)
