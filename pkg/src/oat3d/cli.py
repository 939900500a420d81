"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data/shape mismatch,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import __version__
from .config import RunConfig, load_config
from .container import read_array, write_array
from .errors import ConfigError, FitError, NumericalError, ShapeMismatchError
from .geometry import ScanGeometry
from .iterative import estimate_lipschitz, write_trace_csv
from .metrics import TubeTrack, evaluate, make_roi, write_tradeoff_csv
from .operator import freq_to_time, time_to_freq
from .pipeline import ALGORITHMS, ReconParams, data_geometry, data_meta, default_cutoff, reconstruct
from .render import mip_render, window_to_uint8, write_pgm
from .simulator import NoiseModel, Tube, pose_noise, rasterize, sigma_for_snr

EXIT_OK, EXIT_CONFIG, EXIT_SHAPE, EXIT_NUMERICAL = 0, 2, 3, 4


def _versions() -> dict:
    import numba
    import scipy
    return {"oat3d": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def write_manifest(path, command: str, args: dict, config: dict | None = None, **extra):
    manifest = {"command": command, "args": args, "config": config, "versions": _versions()}
    manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _args_dict(ns) -> dict:
    return {k: v for k, v in vars(ns).items() if k != "func"}


# ---------------------------------------------------------------- commands


def cmd_simulate(ns) -> int:
    cfg = load_config(ns.config)
    if cfg.phantom is None:
        raise ConfigError("simulate needs a [phantom] section")
    setup = cfg.setup
    out = Path(ns.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    op = setup.operator()
    lattice = setup.lattice
    theta = rasterize(cfg.phantom, setup.grid)
    clean = op.apply(theta)
    clean_t = freq_to_time(clean, lattice)
    sigma = cfg.noise_sigma or 0.0
    if cfg.snr_db is not None:
        sigma = sigma_for_snr(clean_t, cfg.snr_db)
    meta = data_meta(setup.geometry, lattice, noise_sigma=sigma, seed=cfg.seed)
    freq, time = clean, clean_t
    if sigma > 0:
        eta = pose_noise(NoiseModel(sigma, cfg.seed), setup.geometry, lattice.K)
        freq = clean + time_to_freq(eta, lattice)
        time = clean_t + eta
    write_array(out / "truth.oat", theta, ("x", "y", "z"),
                {"grid": setup.grid.to_dict(), "spacing_mm": setup.grid.spacing_mm})
    write_array(out / "freq.oat", freq, ("pose", "frequency"), meta)
    write_array(out / "time.oat", time, ("pose", "time"), meta)
    write_manifest(out / "manifest.json", "simulate", _args_dict(ns), cfg.sections,
                   seeds={"noise": cfg.seed}, noise_sigma=sigma)
    return EXIT_OK


def cmd_subsample(ns) -> int:
    src = read_array(ns.input)
    if "geometry" not in src.meta:
        raise ShapeMismatchError("input carries no geometry")
    geom = ScanGeometry.from_dict(src.meta["geometry"])
    if ns.n < 1 or geom.num_views % ns.n:
        raise ConfigError(f"{ns.n} views do not evenly subsample {geom.num_views}")
    stride = geom.num_views // ns.n
    sub = geom.subsample_views(stride)
    data = src.data.reshape((geom.num_views, geom.num_active) + src.data.shape[1:])
    data = data[::stride].reshape((sub.num_poses,) + src.data.shape[1:])
    meta = dict(src.meta)
    meta.update(geometry=sub.to_dict(), geometry_hash=sub.hash(), view_stride=stride,
                parent_geometry_hash=src.meta.get("geometry_hash"))
    write_array(ns.output, data, src.axes, meta)
    write_manifest(f"{ns.output}.manifest.json", "subsample-views", _args_dict(ns))
    return EXIT_OK


def _params(ns, cfg: RunConfig) -> ReconParams:
    sec = cfg.sections.get("recon", {})
    return ReconParams(
        cutoff_mhz=ns.cutoff_mhz if ns.cutoff_mhz is not None else sec.get("cutoff_mhz"),
        alpha=ns.alpha if ns.alpha is not None else float(sec.get("alpha", 0.0)),
        lambda_tv=ns.lambda_tv if ns.lambda_tv is not None else float(sec.get("lambda_tv", 0.0)),
        iters=ns.iters if ns.iters is not None else int(sec.get("iters", 50)),
        tol=ns.tol if ns.tol is not None else float(sec.get("tol", 1e-4)),
    )


def cmd_recon(ns) -> int:
    cfg = load_config(ns.config)
    data = read_array(ns.data)
    geom = data_geometry(data, cfg.setup)
    params = _params(ns, cfg)
    if ns.algo == "fbp" and params.cutoff_mhz is None:
        params.cutoff_mhz = default_cutoff(cfg.setup)
    vol, res = reconstruct(ns.algo, cfg.setup, geom, data.data, params)
    reg = params.reg_param(ns.algo)
    write_array(ns.output, vol, ("x", "y", "z"),
                {"algo": ns.algo, "reg_param": reg, "geometry_hash": geom.hash(),
                 "grid": cfg.setup.grid.to_dict(), "spacing_mm": cfg.setup.grid.spacing_mm})
    extra = {"recon": {"algo": ns.algo, "cutoff_mhz": params.cutoff_mhz, "alpha": params.alpha,
                       "lambda_tv": params.lambda_tv, "iters": params.iters, "tol": params.tol}}
    if res is not None:
        extra["iterations"] = res.iterations
        if ns.trace:
            write_trace_csv(ns.trace, res)
    write_manifest(f"{ns.output}.manifest.json", "recon", _args_dict(ns), cfg.sections, **extra)
    return EXIT_OK


def _roi_setup(cfg: RunConfig):
    sec = dict(cfg.sections.get("metrics", {}))
    grid = cfg.setup.grid
    if "tube" in sec:
        prims = [p for p in (cfg.phantom.primitives if cfg.phantom else ()) if isinstance(p, Tube)]
        idx = int(sec["tube"])
        if not 0 <= idx < len(prims):
            raise ConfigError(f"[metrics] tube index {idx} out of range")
        track = TubeTrack(prims[idx].point, prims[idx].direction)
    elif "point_mm" in sec and "direction" in sec:
        track = TubeTrack(tuple(sec["point_mm"]), tuple(sec["direction"]))
    else:
        raise ConfigError("[metrics] needs 'tube' or 'point_mm' and 'direction'")
    zs = grid.axis(2)
    zlo = float(sec.get("z_min_mm", zs[0]))
    zhi = float(sec.get("z_max_mm", zs[-1]))
    z_idx = [k for k in range(grid.dims[2]) if zlo <= zs[k] <= zhi]
    if not z_idx:
        raise ConfigError("[metrics] z range contains no sections")
    exclude = None
    margin = sec.get("exclude_margin_mm")
    if margin is not None and cfg.phantom is not None:
        support = rasterize(cfg.phantom, grid) > 0
        r = int(math.ceil(float(margin) / grid.spacing_mm))
        exclude = ndimage.binary_dilation(support, iterations=r) if r > 0 else support
    roi = make_roi(grid, track, z_idx, int(sec.get("n_background", 50)), float(sec.get("radius_mm", 5.0)),
                   int(sec.get("seed", 0)), exclude)
    return track, z_idx, roi, int(sec.get("nr", 15))


def cmd_metrics(ns) -> int:
    cfg = load_config(ns.config)
    track, z_idx, roi, nr = _roi_setup(cfg)
    points = []
    for path in ns.volume:
        c = read_array(path)
        if c.data.shape != cfg.setup.grid.dims:
            raise ShapeMismatchError(f"{path}: volume shape {c.data.shape} vs grid {cfg.setup.grid.dims}")
        reg = c.meta.get("reg_param")
        points.append(evaluate(c.data, cfg.setup.grid, roi, track, z_idx, nr,
                               math.nan if reg is None else float(reg)))
    write_tradeoff_csv(ns.output, points)
    write_manifest(f"{ns.output}.manifest.json", "metrics", _args_dict(ns), cfg.sections)
    return EXIT_OK


def cmd_sweep(ns) -> int:
    cfg = load_config(ns.config)
    data = read_array(ns.data)
    geom = data_geometry(data, cfg.setup)
    track, z_idx, roi, nr = _roi_setup(cfg)
    try:
        values = [float(v) for v in ns.values.split(",")]
    except ValueError:
        raise ConfigError(f"cannot parse sweep values {ns.values!r}") from None
    if len(values) < 2:
        raise ConfigError("a sweep needs at least two values")
    base = _params(ns, cfg)
    op = None if ns.algo == "fbp" else cfg.setup.operator(geom)
    if ns.algo == "plstv":
        base.lipschitz = estimate_lipschitz(op)
    points = []
    for v in values:
        params = ReconParams(base.cutoff_mhz, base.alpha, base.lambda_tv, base.iters, base.tol, base.lipschitz)
        setattr(params, {"fbp": "cutoff_mhz", "plsq": "alpha", "plstv": "lambda_tv"}[ns.algo], v)
        vol, _ = reconstruct(ns.algo, cfg.setup, geom, data.data, params, op)
        points.append(evaluate(vol, cfg.setup.grid, roi, track, z_idx, nr, v))
    write_tradeoff_csv(ns.output, points)
    write_manifest(f"{ns.output}.manifest.json", "sweep", _args_dict(ns), cfg.sections)
    return EXIT_OK


def cmd_render(ns) -> int:
    c = read_array(ns.volume)
    vol = np.asarray(c.data, dtype=float)
    if vol.ndim != 3:
        raise ShapeMismatchError("render needs a 3D volume")
    out = Path(ns.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    window = tuple(ns.window) if ns.window else None
    if window is not None and not window[1] > window[0]:
        raise ConfigError("display window must satisfy up > low")
    written = []
    for axis in ns.axis:
        write_pgm(out / f"mip_{axis}.pgm", mip_render(vol, axis, window))
        written.append(f"mip_{axis}.pgm")
    if ns.slice is not None:
        k = ns.slice
        if not 0 <= k < vol.shape[2]:
            raise ShapeMismatchError(f"slice {k} outside 0..{vol.shape[2] - 1}")
        sec = vol[:, :, k]
        lo, hi = window if window else (float(vol.min()), float(vol.max()))
        img = window_to_uint8(sec, lo, hi) if hi > lo else np.zeros(sec.shape, np.uint8)
        write_pgm(out / f"slice_z{k:04d}.pgm", img)
        written.append(f"slice_z{k:04d}.pgm")
    write_manifest(out / "render.manifest.json", "render", _args_dict(ns), outputs=written)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oat3d", description="3D optoacoustic tomography toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="phantom -> truth, frequency and time data")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("subsample-views", help="keep every k-th view of a dense data file")
    s.add_argument("--input", required=True)
    s.add_argument("--n", type=int, required=True, help="number of views to keep")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_subsample)

    def recon_flags(s):
        s.add_argument("--config", required=True)
        s.add_argument("--data", required=True)
        s.add_argument("--algo", choices=ALGORITHMS, required=True)
        s.add_argument("--cutoff-mhz", type=float)
        s.add_argument("--alpha", type=float)
        s.add_argument("--lambda-tv", type=float)
        s.add_argument("--iters", type=int)
        s.add_argument("--tol", type=float)

    s = sub.add_parser("recon", help="reconstruct a volume")
    recon_flags(s)
    s.add_argument("--output", required=True)
    s.add_argument("--trace", help="CSV file for the per-iteration cost trace")
    s.set_defaults(func=cmd_recon)

    s = sub.add_parser("metrics", help="FWHM / ROI statistics / CNR of volumes")
    s.add_argument("--config", required=True)
    s.add_argument("--volume", action="append", required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("sweep", help="regularization sweep -> tradeoff CSV")
    recon_flags(s)
    s.add_argument("--values", required=True, help="comma-separated regularization values")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("render", help="volume -> PGM MIPs and slices")
    s.add_argument("--volume", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--axis", action="append", choices=("x", "y", "z"), default=None)
    s.add_argument("--slice", type=int)
    s.add_argument("--window", type=float, nargs=2, metavar=("LOW", "UP"))
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    if getattr(ns, "axis", "unset") is None:
        ns.axis = ["z"]
    try:
        return ns.func(ns)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ShapeMismatchError, FitError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
