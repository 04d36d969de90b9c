"""Reconstruction engine: fits an untrained network to under-sampled
multi-coil k-space, with optional remedies, self-validation early stopping,
and per-iteration diagnostics (losses, PSNR/SSIM, frequency-band errors)."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .architectures import ArchSpec, build_network
from .autodiff import Adam, Tensor
from .metrics import masked_region_psnr, psnr, ssim
from .mri import (CoilSensitivities, GeometryError, KSpace, SamplingMask,
                  _adjoint_arrays, _dft2c, _forward_arrays)
from .regularization import (RegConfig, bandlimit_input, l2_penalty,
                             lipschitz_penalty, tv_penalty)
from .rng import SplitMix64, derive_seed

LOG_FIELDS = ("iter", "train_mae", "val_mae", "psnr_full", "psnr_masked",
              "ssim", "low_band_err", "high_band_err")


class ReconError(RuntimeError):
    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log or []


@dataclass(frozen=True)
class SelfValConfig:
    holdout_fraction: float = 0.05
    window: int = 30

    def __post_init__(self):
        if not 0.0 < self.holdout_fraction < 0.5:
            raise ValueError("holdout fraction must lie in (0, 0.5)")
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass(frozen=True)
class ReconConfig:
    arch: ArchSpec
    reg: RegConfig = RegConfig()
    iterations: int = 3000
    learning_rate: float = 0.008
    self_val: SelfValConfig | None = None
    seed: int = 0
    reference: np.ndarray | None = None  # ground-truth magnitude, diagnostics only
    log_every: int = 10

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class ReconData:
    kspace: KSpace
    csm: CoilSensitivities
    mask: SamplingMask


@dataclass
class IterationLog:
    rows: list = field(default_factory=list)

    def append(self, **kw):
        self.rows.append({f: kw.get(f) for f in LOG_FIELDS})

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(LOG_FIELDS)
        for row in self.rows:
            wr.writerow(["" if row[f] is None else f"{row[f]:.8g}"
                         if isinstance(row[f], float) else row[f]
                         for f in LOG_FIELDS])
        return buf.getvalue()


@dataclass
class ReconResult:
    final_image: np.ndarray
    best_image: np.ndarray
    stop_iteration: int
    log: IterationLog
    sigma: float | None
    elapsed: float
    final_train_mae: float
    params: int


def split_self_validation(mask: SamplingMask, fraction: float, seed: int):
    """Partition acquired columns into train/validation masks; center lines
    are never held out."""
    if fraction == 0.0:
        empty = SamplingMask(np.zeros_like(mask.data))
        return mask, empty
    cols = mask.columns
    acquired = [j for j in range(cols.size) if cols[j]]
    center = set(mask.center_cols)
    candidates = [j for j in acquired if j not in center]
    n_val = int(np.ceil(fraction * len(acquired)))
    if n_val < 1 or n_val > len(candidates):
        raise GeometryError(
            f"cannot hold out {n_val} of {len(candidates)} non-center lines"
        )
    rng = SplitMix64(derive_seed(seed, "self-val-split"))
    order = np.argsort(rng.uniform(len(candidates)), kind="stable")
    val_cols = sorted(candidates[i] for i in order[:n_val])
    vcols = np.zeros_like(cols)
    vcols[val_cols] = 1
    tcols = cols.copy()
    tcols[val_cols] = 0
    h = mask.data.shape[0]
    train = SamplingMask(np.repeat(tcols[None], h, 0), center_cols=mask.center_cols)
    val = SamplingMask(np.repeat(vcols[None], h, 0))
    return train, val


def mri_forward_op(x: Tensor, S: np.ndarray, m: np.ndarray) -> Tensor:
    """Differentiable acquisition: (1,2,N,N) real tensor -> (c,2,N,N) masked
    k-space planes. Backward applies the adjoint operator."""
    xc = x.data[0, 0] + 1j * x.data[0, 1]
    y = _forward_arrays(xc, S, m)
    out = np.stack([y.real, y.imag], axis=1)

    def bw(g):
        if x.requires_grad:
            gc = g[:, 0] + 1j * g[:, 1]
            gx = _adjoint_arrays(gc, S, m)
            x._accumulate(np.stack([gx.real, gx.imag])[None])

    return Tensor._make(out, (x,), bw)


def band_errors(output: np.ndarray, reference: np.ndarray):
    """Mean |error spectrum| over the low band (radius <= N/8 from DC) and
    the high band (radius > N/4)."""
    if reference is None:
        raise GeometryError("band_errors requires a reference image")
    n = output.shape[0]
    spec = _dft2c((np.asarray(output) - np.asarray(reference)).astype(np.complex128))
    idx = np.arange(n) - n // 2
    r = np.hypot(*np.meshgrid(idx, idx, indexing="ij"))
    low = np.abs(spec[r <= n / 8]).mean()
    high = np.abs(spec[r > n / 4]).mean()
    return float(low), float(high)


class EarlyStopper:
    """Sliding-window mean over validation MAE with window-length patience."""

    def __init__(self, window: int):
        self.window = window
        self.history: list[float] = []
        self.best_mean = np.inf
        self.best_iter = 0
        self.since_best = 0
        self.iter = 0

    def update(self, val_mae: float) -> bool:
        """Record one evaluation; True once the stop condition fires."""
        self.iter += 1
        self.history.append(val_mae)
        if len(self.history) < self.window:
            return False
        mean = float(np.mean(self.history[-self.window:]))
        if mean < self.best_mean:
            self.best_mean = mean
            self.best_iter = self.iter
            self.since_best = 0
            return False
        self.since_best += 1
        return self.since_best >= self.window


def _masked_mae(pred: np.ndarray, target: np.ndarray, sel: np.ndarray) -> float:
    count = sel.sum() * pred.shape[0] * 2
    return float((np.abs(pred - target) * sel[None, None]).sum() / count)


def run_reconstruction(cfg: ReconConfig, data: ReconData) -> ReconResult:
    """Optimize the untrained network against the measurements."""
    t0 = time.perf_counter()
    S, M = data.csm, data.mask
    n = cfg.arch.output_size
    if S.shape != (n, n) or M.shape != (n, n):
        raise GeometryError(
            f"data extents {S.shape}/{M.shape} do not match output size {n}"
        )
    if data.kspace.coils != S.coils:
        raise GeometryError("k-space and CSM coil counts differ")

    net = build_network(cfg.arch)
    sigma = None
    if cfg.reg.input_filter_on:
        z, sigma = bandlimit_input(net.z, cfg.reg)
        net.set_input(z)
    lip_ks = net.enable_lipschitz() if cfg.reg.lipschitz_lambda is not None else []

    if cfg.self_val is not None:
        train_mask, val_mask = split_self_validation(
            M, cfg.self_val.holdout_fraction, cfg.seed)
        stopper = EarlyStopper(cfg.self_val.window)
    else:
        train_mask, val_mask, stopper = M, None, None

    y = np.stack([data.kspace.data.real, data.kspace.data.imag], axis=1)
    train_sel = train_mask.data.astype(np.float64)
    val_sel = val_mask.data.astype(np.float64) if val_mask is not None else None

    opt = Adam(net.params(), lr=cfg.learning_rate)
    log = IterationLog()
    best_snap = None
    stop_iter = cfg.iterations
    final_train = np.nan

    def diagnostics(it, pred_img, train_mae, val_mae):
        mag = np.hypot(pred_img[0, 0], pred_img[0, 1])
        row = dict(iter=it, train_mae=train_mae, val_mae=val_mae)
        if cfg.reference is not None:
            row["psnr_full"] = psnr(mag, cfg.reference)
            row["psnr_masked"] = masked_region_psnr(mag, cfg.reference, M)
            row["ssim"] = ssim(mag, cfg.reference)
            lo, hi = band_errors(mag, cfg.reference)
            row["low_band_err"], row["high_band_err"] = lo, hi
        log.append(**row)

    for it in range(1, cfg.iterations + 1):
        out = net.forward()
        pred = mri_forward_op(out, S.data, M.data)
        loss = ad.mae_loss(pred, y, train_sel[None, None])
        train_mae = loss.item()
        if cfg.reg.lipschitz_lambda:
            loss = loss + lipschitz_penalty(lip_ks, cfg.reg.lipschitz_lambda)
        if cfg.reg.tv_lambda:
            loss = loss + tv_penalty(out) * cfg.reg.tv_lambda
        if cfg.reg.l2_lambda:
            loss = loss + l2_penalty(net.conv_weights(), cfg.reg.l2_lambda)
        if not np.isfinite(loss.item()):
            raise ReconError(f"non-finite loss at iteration {it}", log.rows)

        val_mae = (_masked_mae(pred.data, y, val_sel)
                   if val_sel is not None else None)
        if it % cfg.log_every == 0 or it == 1 or it == cfg.iterations:
            diagnostics(it, out.data, train_mae, val_mae)

        final_train = train_mae
        if stopper is not None:
            prev_best = stopper.best_iter
            stopped = stopper.update(val_mae)
            if stopper.best_iter != prev_best:
                best_snap = net.snapshot()  # params that produced this val MAE
            if stopped:
                break

        loss.backward()
        opt.step()

    final_out = net.forward()
    final_img = np.hypot(final_out.data[0, 0], final_out.data[0, 1])
    if best_snap is not None:
        stop_iter = stopper.best_iter
        net.restore(best_snap)
        best_out = net.forward()
        best_img = np.hypot(best_out.data[0, 0], best_out.data[0, 1])
    else:
        best_img = final_img

    return ReconResult(
        final_image=final_img,
        best_image=best_img,
        stop_iteration=stop_iter,
        log=log,
        sigma=sigma,
        elapsed=time.perf_counter() - t0,
        final_train_mae=final_train,
        params=sum(p.data.size for p in net.params()),
    )
