"""Command-line surface: dataset generation, reconstructions, sweeps, and
analysis outputs. All commands are deterministic given their flags."""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .architectures import (ArchError, BILINEAR_TAPS, L100_TAPS, NEAREST_TAPS,
                            parse_arch_name)
from .engine import (ReconConfig, ReconData, ReconError, SelfValConfig,
                     run_reconstruction)
from .metrics import filter_frequency_response, psnr as psnr_fn, ssim as ssim_fn
from .mri import CoilSensitivities, GeometryError, KSpace
from .phantoms import (FileFormatError, MaskSpec, NoiseSpec, PhantomSpec,
                       generate_cartesian_mask, generate_csm, generate_phantom,
                       read_cplx, read_mask, simulate_kspace, write_cplx,
                       write_mask)
from .regularization import RegConfig

_ERRORS = (ArchError, GeometryError, FileFormatError, ReconError, ValueError)

SWEEP_FIELDS = ("arch", "upsampler", "regularizer", "seed", "psnr_final",
                "psnr_best", "ssim_final", "stop_iter", "params", "error")


def _fail(exc) -> "click.ClickException":
    return click.ClickException(str(exc))


def parse_regularizer(token: str, seed: int = 0) -> RegConfig:
    """Parse tokens like ``none``, ``gaussian:3:1.0``, ``gaussian:3:0.5-2.0``,
    ``lipschitz:1.0``, ``tv:0.001``, ``l2:1e-5``, joined with '+'."""
    kw = {"seed": seed}
    if token in ("", "none"):
        return RegConfig(**kw)
    for part in token.split("+"):
        bits = part.split(":")
        kind = bits[0]
        if kind == "gaussian":
            size = int(bits[1]) if len(bits) > 1 else 3
            sig = bits[2] if len(bits) > 2 else "0.5-2.0"
            if "-" in sig:
                lo, hi = sig.split("-")
                sigma = (float(lo), float(hi))
            else:
                sigma = float(sig)
            kw["input_filter_size"] = size
            kw["input_filter_sigma"] = sigma
        elif kind == "lipschitz":
            kw["lipschitz_lambda"] = float(bits[1]) if len(bits) > 1 else 1.0
        elif kind == "tv":
            kw["tv_lambda"] = float(bits[1]) if len(bits) > 1 else 0.001
        elif kind == "l2":
            kw["l2_lambda"] = float(bits[1]) if len(bits) > 1 else 1e-5
        else:
            raise ValueError(f"unknown regularizer {kind!r} in {token!r}")
    return RegConfig(**kw)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "inf" if math.isinf(x) else f"{x:.6f}"
    return str(x)


@click.group()
def main():
    """Untrained-network MRI reconstruction toolkit."""


seed_option = click.option("--seed", type=int, default=0, show_default=True,
                           envvar="PRIORFORGE_SEED")


@main.command()
@click.option("--size", type=int, default=64, show_default=True)
@click.option("--coils", type=int, default=4, show_default=True)
@click.option("--accel", type=float, default=4.0, show_default=True)
@click.option("--center-lines", type=int, default=5, show_default=True)
@click.option("--noise-sigma", type=float, default=0.0, show_default=True)
@seed_option
@click.option("--out", type=click.Path(file_okay=False), required=True)
def phantom(size, coils, accel, center_lines, noise_sigma, seed, out):
    """Generate a phantom dataset: image, CSM, mask, and noisy k-space."""
    try:
        img = generate_phantom(PhantomSpec(size=size, seed=seed))
        csm = generate_csm(coils, size)
        mask = generate_cartesian_mask(
            MaskSpec(width=size, acceleration=accel, center_lines=center_lines,
                     seed=seed))
        ksp = simulate_kspace(img, csm, mask, NoiseSpec(noise_sigma, seed))
    except _ERRORS as exc:
        raise _fail(exc)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_cplx(outdir / "image.cplx", img.data)
    write_cplx(outdir / "csm.cplx", csm.data)
    write_mask(outdir / "mask.mask", mask)
    write_cplx(outdir / "kspace.cplx", ksp.data)
    click.echo(f"wrote image/csm/mask/kspace to {outdir}")


@main.command()
@click.option("--width", type=int, required=True)
@click.option("--accel", type=float, default=4.0, show_default=True)
@click.option("--center-lines", type=int, default=25, show_default=True)
@seed_option
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def mask(width, accel, center_lines, seed, out):
    """Generate a Cartesian under-sampling mask file."""
    try:
        m = generate_cartesian_mask(
            MaskSpec(width=width, acceleration=accel,
                     center_lines=center_lines, seed=seed))
    except _ERRORS as exc:
        raise _fail(exc)
    write_mask(out, m)
    click.echo(f"wrote {out} ({m.acquired_count // width} sampled columns)")


def _load_dataset(data_dir, image, csm, mask_path, kspace):
    d = Path(data_dir) if data_dir else None
    paths = {
        "image": Path(image) if image else (d / "image.cplx" if d else None),
        "csm": Path(csm) if csm else (d / "csm.cplx" if d else None),
        "mask": Path(mask_path) if mask_path else (d / "mask.mask" if d else None),
        "kspace": Path(kspace) if kspace else (d / "kspace.cplx" if d else None),
    }
    for key in ("csm", "mask", "kspace"):
        if paths[key] is None or not paths[key].exists():
            raise ValueError(f"missing {key} file "
                             f"({paths[key] or 'no path given'})")
    ref = None
    if paths["image"] is not None and paths["image"].exists():
        ref = np.abs(read_cplx(paths["image"]))
    data = ReconData(
        kspace=KSpace(read_cplx(paths["kspace"])),
        csm=CoilSensitivities(read_cplx(paths["csm"])),
        mask=read_mask(paths["mask"]),
    )
    return data, ref


def _run_cell(args):
    """Run one reconstruction cell; returns a sweep.csv row dict."""
    (arch_name, upsampler, reg_token, seed, iters, lr, self_val, n, paths) = args
    row = {"arch": arch_name, "upsampler": upsampler, "regularizer": reg_token,
           "seed": seed, "error": ""}
    try:
        data, ref = _load_dataset(*paths)
        spec = parse_arch_name(arch_name, output_size=n, upsampler=upsampler,
                               seed=seed)
        cfg = ReconConfig(arch=spec, reg=parse_regularizer(reg_token, seed),
                          iterations=iters, learning_rate=lr,
                          self_val=self_val, seed=seed, reference=ref)
        res = run_reconstruction(cfg, data)
        row.update(
            psnr_final=_fmt(psnr_fn(res.final_image, ref) if ref is not None else None),
            psnr_best=_fmt(psnr_fn(res.best_image, ref) if ref is not None else None),
            ssim_final=_fmt(ssim_fn(res.final_image, ref) if ref is not None else None),
            stop_iter=res.stop_iteration, params=res.params)
    except _ERRORS as exc:
        row.update(psnr_final="", psnr_best="", ssim_final="", stop_iter="",
                   params="", error=str(exc).replace("\n", " "))
    return row


@main.command()
@click.option("--data-dir", type=click.Path(exists=True, file_okay=False))
@click.option("--image", type=click.Path(dir_okay=False))
@click.option("--csm", type=click.Path(dir_okay=False))
@click.option("--mask", "mask_path", type=click.Path(dir_okay=False))
@click.option("--kspace", type=click.Path(dir_okay=False))
@click.option("--arch", default="A_2_full_64_3", show_default=True)
@click.option("--upsampler", default="nearest", show_default=True)
@click.option("--input-filter", default=None,
              help="e.g. gaussian:3:1.0 or gaussian:3:0.5-2.0")
@click.option("--lipschitz", type=float, default=None)
@click.option("--tv", type=float, default=None)
@click.option("--l2", type=float, default=None)
@click.option("--iters", type=int, default=3000, show_default=True)
@click.option("--lr", type=float, default=0.008, show_default=True)
@click.option("--self-val", default=None, help="fraction:window, e.g. 0.05:30")
@seed_option
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              help="TOML config; flags override file values")
@click.option("--out", type=click.Path(file_okay=False), required=True)
def recon(data_dir, image, csm, mask_path, kspace, arch, upsampler,
          input_filter, lipschitz, tv, l2, iters, lr, self_val, seed,
          config_path, out):
    """Reconstruct one dataset; writes recon.cplx, log.csv, summary.json."""
    ctx = click.get_current_context()
    if config_path:
        flat = _load_flat_config(config_path)

        def pick(param_name, current, key=None):
            src = ctx.get_parameter_source(param_name)
            overridden = src is not None and src.name != "DEFAULT"
            return current if overridden else flat.get(key or param_name, current)

        data_dir = pick("data_dir", data_dir)
        image = pick("image", image)
        csm = pick("csm", csm)
        mask_path = pick("mask_path", mask_path, key="mask")
        kspace = pick("kspace", kspace)
        arch = pick("arch", arch)
        upsampler = pick("upsampler", upsampler)
        input_filter = pick("input_filter", input_filter)
        lipschitz = pick("lipschitz", lipschitz)
        tv = pick("tv", tv)
        l2 = pick("l2", l2)
        iters = int(pick("iters", iters))
        lr = float(pick("lr", lr))
        self_val = pick("self_val", self_val)
        seed = int(pick("seed", seed))

    try:
        data, ref = _load_dataset(data_dir, image, csm, mask_path, kspace)
        n = data.mask.shape[0]
        spec = parse_arch_name(arch, output_size=n, upsampler=upsampler,
                               seed=seed)
        reg_token = _compose_reg_token(input_filter, lipschitz, tv, l2)
        reg = parse_regularizer(reg_token, seed)
        sv = None
        if self_val:
            frac, ws = str(self_val).split(":")
            sv = SelfValConfig(float(frac), int(ws))
        cfg = ReconConfig(arch=spec, reg=reg, iterations=iters,
                          learning_rate=lr, self_val=sv, seed=seed,
                          reference=ref)
        res = run_reconstruction(cfg, data)
    except _ERRORS as exc:
        raise _fail(exc)

    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_cplx(outdir / "recon.cplx", res.best_image.astype(np.complex128))
    (outdir / "log.csv").write_text(res.log.to_csv())
    summary = {
        "arch": arch, "upsampler": upsampler, "regularizer": reg_token,
        "seed": seed, "sigma": res.sigma,
        "psnr_final": _num(psnr_fn(res.final_image, ref)) if ref is not None else None,
        "psnr_best": _num(psnr_fn(res.best_image, ref)) if ref is not None else None,
        "ssim_final": _num(ssim_fn(res.final_image, ref)) if ref is not None else None,
        "ssim_best": _num(ssim_fn(res.best_image, ref)) if ref is not None else None,
        "stop_iter": res.stop_iteration,
        "final_train_mae": res.final_train_mae,
        "params": res.params,
        "elapsed_seconds": res.elapsed,
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    click.echo(f"wrote reconstruction outputs to {outdir}")


def _load_flat_config(config_path) -> dict:
    """Flatten a TOML config (top-level keys and/or sections) into one dict."""
    try:
        with open(config_path, "rb") as f:
            file_cfg = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise click.ClickException(f"config parse error: {exc}")
    flat = {}
    for key, value in file_cfg.items():
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    return flat


def _num(x):
    return None if x is None else ("inf" if math.isinf(x) else x)


def _compose_reg_token(input_filter, lipschitz, tv, l2) -> str:
    parts = []
    if input_filter:
        parts.append(input_filter)
    if lipschitz is not None:
        parts.append(f"lipschitz:{lipschitz}")
    if tv is not None:
        parts.append(f"tv:{tv}")
    if l2 is not None:
        parts.append(f"l2:{l2}")
    return "+".join(parts) if parts else "none"


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--jobs", type=int, default=None,
              help="parallel cells (default: hardware threads)")
def sweep(config_path, out, jobs):
    """Run the Cartesian product of the config grid; resume is idempotent."""
    try:
        with open(config_path, "rb") as f:
            cfg = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise click.ClickException(f"config parse error: {exc}")
    grid = cfg.get("grid", {})
    rc = cfg.get("recon", {})
    dsec = cfg.get("data", {})
    archs = grid.get("arch", [])
    upsamplers = grid.get("upsampler", ["nearest"])
    regs = grid.get("regularizer", ["none"])
    seeds = grid.get("seed", [0])
    if not archs:
        raise click.ClickException("sweep grid must list at least one arch")
    paths = (dsec.get("dir"), dsec.get("image"), dsec.get("csm"),
             dsec.get("mask"), dsec.get("kspace"))
    try:
        data, _ = _load_dataset(*paths)
    except _ERRORS as exc:
        raise _fail(exc)
    n = data.mask.shape[0]
    sv = None
    if "self_val" in rc:
        frac, ws = str(rc["self_val"]).split(":")
        sv = SelfValConfig(float(frac), int(ws))
    iters = int(rc.get("iterations", 3000))
    lr = float(rc.get("learning_rate", 0.008))

    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "sweep.csv"
    done = set()
    if csv_path.exists():
        with open(csv_path, newline="") as f:
            for row in csv.DictReader(f):
                done.add((row["arch"], row["upsampler"], row["regularizer"],
                          row["seed"]))
    cells = [(a, u, r, s, iters, lr, sv, n, paths)
             for a in archs for u in upsamplers for r in regs for s in seeds
             if (a, u, r, str(s)) not in done]

    new_file = not csv_path.exists()
    with open(csv_path, "a", newline="") as f:
        wr = csv.DictWriter(f, fieldnames=SWEEP_FIELDS, lineterminator="\n")
        if new_file:
            wr.writeheader()
            f.flush()
        jobs = jobs or os.cpu_count() or 1
        if jobs > 1 and len(cells) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for row in pool.map(_run_cell, cells):
                    wr.writerow(row)
                    f.flush()
        else:
            for cell in cells:
                wr.writerow(_run_cell(cell))
                f.flush()
    click.echo(f"sweep complete: {len(cells)} new cells -> {csv_path}")


@main.command()
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--points", type=int, default=512, show_default=True)
def freq(out, points):
    """Emit the upsampling-filter frequency responses as CSV."""
    omegas = np.linspace(0.0, math.pi, points)
    cols = {
        "nearest": filter_frequency_response(NEAREST_TAPS, omegas),
        "bilinear": filter_frequency_response(BILINEAR_TAPS, omegas),
        "l100": filter_frequency_response(L100_TAPS, omegas),
    }
    with open(out, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["omega", "nearest", "bilinear", "l100"])
        for i, w in enumerate(omegas):
            wr.writerow([f"{w:.8f}"] + [f"{cols[k][i]:.8e}" for k in cols])
    click.echo(f"wrote {out}")


@main.command()
@click.argument("recon_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("reference_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def metrics(recon_file, reference_file, out):
    """PSNR/SSIM between the magnitudes of two .cplx images."""
    try:
        x = np.abs(read_cplx(recon_file))
        ref = np.abs(read_cplx(reference_file))
        report = {"psnr": _num(psnr_fn(x, ref)), "ssim": ssim_fn(x, ref),
                  "data_range": float(ref.max())}
    except _ERRORS as exc:
        raise _fail(exc)
    text = json.dumps(report, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    click.echo(text, nl=False)


if __name__ == "__main__":
    sys.exit(main())
