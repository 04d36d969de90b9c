"""Remedies and baseline regularizers.

Two architecture-agnostic remedies: bandwidth-constrained (Gaussian-blurred)
noise input and learnable Lipschitz weight regularization, plus anisotropic
TV and L2 penalties for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .rng import SplitMix64, derive_seed


@dataclass(frozen=True)
class RegConfig:
    """Regularizer selection. ``input_filter_sigma`` may be a fixed value or a
    (low, high) range sampled once per reconstruction from ``seed``."""

    input_filter_sigma: float | tuple | None = None
    input_filter_size: int = 3
    lipschitz_lambda: float | None = None
    tv_lambda: float = 0.0
    l2_lambda: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.input_filter_size % 2 == 0:
            raise ValueError("gaussian filter size must be odd")
        for lam in (self.lipschitz_lambda, self.tv_lambda, self.l2_lambda):
            if lam is not None and lam < 0:
                raise ValueError("penalty weights must be >= 0")

    @property
    def input_filter_on(self) -> bool:
        return self.input_filter_sigma is not None


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """1-D taps proportional to exp(-(i-c)^2 / 2 sigma^2), normalized."""
    if size % 2 == 0:
        raise ValueError(f"gaussian kernel size must be odd, got {size}")
    if sigma <= 0:
        raise ValueError(f"gaussian sigma must be > 0, got {sigma}")
    r = size // 2
    t = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma) ** 2)
    return t / t.sum()


def sample_sigma(cfg: RegConfig) -> float | None:
    """Resolve the blur sigma, drawing once from the range when configured."""
    s = cfg.input_filter_sigma
    if s is None:
        return None
    if isinstance(s, (tuple, list)):
        lo, hi = s
        u = SplitMix64(derive_seed(cfg.seed, "input-sigma")).uniform(1)[0]
        return float(lo + (hi - lo) * u)
    return float(s)


def bandlimit_input(z: Tensor, cfg: RegConfig) -> tuple[Tensor, float]:
    """Depthwise Gaussian blur of the fixed noise input; returns the filtered
    input and the sigma used. The result replaces z for the whole run."""
    sigma = sample_sigma(cfg)
    if sigma is None:
        raise ValueError("bandlimit_input called with the input filter off")
    taps = gaussian_kernel(cfg.input_filter_size, sigma)
    out = ad.fixed_lowpass_conv(Tensor(z.data), taps)
    return Tensor(out.data), sigma


def matrix_inf_norm(w: np.ndarray) -> float:
    """Max over rows of the sum of absolute entries."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ValueError("matrix_inf_norm of an empty matrix")
    return float(np.abs(w).sum(axis=1).max())


def lipschitz_init(weight: np.ndarray) -> float:
    """Initial k so that SoftPlus(k) equals the layer's current inf-norm:
    the constraint starts exactly at the feasible boundary."""
    n = matrix_inf_norm(weight.reshape(weight.shape[0], -1))
    # inverse softplus, overflow-safe
    return float(n + np.log(-np.expm1(-n))) if n > 1e-12 else -25.0


def lipschitz_normalize(weight: Tensor, k: Parameter) -> Tensor:
    """W / max(1, ||W||_inf / SoftPlus(k)) with gradients to both W and k.

    The weight is read as (out-channels) x (in-channels * kh * kw).
    """
    w2 = weight.reshape(weight.shape[0], -1)
    row_sums = w2.abs().sum(axis=1)
    norm = row_sums.max()
    bound = ad.softplus(k)
    denom = (norm / bound).clamp_min(1.0)
    return weight / denom


def lipschitz_penalty(ks, lam: float) -> Tensor:
    """lambda * sum_l SoftPlus(k_l)^2."""
    if lam < 0:
        raise ValueError("lipschitz lambda must be >= 0")
    total = None
    for k in ks:
        term = ad.softplus(k) ** 2.0
        total = term if total is None else total + term
    if total is None:
        return Tensor(0.0)
    return total.sum() * lam


def tv_penalty(x: Tensor) -> Tensor:
    """Anisotropic total variation summed over channels of a (C, H, W) or
    (1, C, H, W) tensor."""
    if x.data.ndim == 4:
        x = x.reshape(x.shape[1], x.shape[2], x.shape[3])
    if x.data.ndim != 3 or x.shape[1] < 2 or x.shape[2] < 2:
        raise ValueError(f"tv_penalty needs (C, H>=2, W>=2), got {x.shape}")
    dv = x[:, 1:, :] - x[:, :-1, :]
    dh = x[:, :, 1:] - x[:, :, :-1]
    return dv.abs().sum() + dh.abs().sum()


def l2_penalty(params, lam: float) -> Tensor:
    """lambda * sum ||theta||^2 over the given parameters."""
    total = None
    for p in params:
        term = (p * p).sum()
        total = term if total is None else total + term
    if total is None:
        return Tensor(0.0)
    return total * lam
