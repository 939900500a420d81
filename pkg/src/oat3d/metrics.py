"""Image-quality metrics for threadlike structures.

Resolution is the FWHM of a centered 2D Gaussian fitted to sections of the
structure; noise is the standard deviation over a background ROI; CNR relates
the two ROI means to that deviation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError, ShapeMismatchError

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class GaussianFit:
    fwhm: float  # pixels
    peak: float
    sigma: float  # pixels
    residual: float  # RMS misfit


def gaussian_fit_fwhm(patch, max_iters: int = 50, tol: float = 1e-10) -> GaussianFit:
    """Fit ``G0 exp(-(n1^2 + n2^2) / (2 sigma^2))`` to a (2N_r+1)^2 patch whose
    center pixel holds the hot spot.

    A log-linear fit over pixels above 10% of the center value seeds
    Gauss-Newton on (G0, sigma); when a second-moment estimate fits better
    (flat-topped profiles make the log fit degenerate) it is used instead.
    """
    patch = np.asarray(patch, dtype=float)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1] or patch.shape[0] % 2 == 0:
        raise ShapeMismatchError(f"patch must be square with odd side, got {patch.shape}")
    nr = patch.shape[0] // 2
    center = patch[nr, nr]
    if not center > 0:
        raise FitError("center value must be positive")
    n = np.arange(-nr, nr + 1)
    r2 = (n[:, None] ** 2 + n[None, :] ** 2).astype(float).ravel()
    v = patch.ravel()

    def misfit(prm):
        return float(np.sum((v - prm[0] * np.exp(-r2 / (2.0 * prm[1] ** 2))) ** 2))

    def best_amp(sigma):
        e = np.exp(-r2 / (2.0 * sigma * sigma))
        return float(e @ v) / float(e @ e)

    seeds = []
    use = v > 0.1 * center
    if np.count_nonzero(r2[use] > 0) >= 1:
        # ln v = ln G0 - r2 / (2 sigma^2), weighted by v to favour the core
        A = np.stack([np.ones(np.count_nonzero(use)), -0.5 * r2[use]], axis=1)
        w = v[use]
        coef, *_ = np.linalg.lstsq(A * w[:, None], np.log(v[use]) * w, rcond=None)
        if coef[1] > 0:
            seeds.append(np.array([math.exp(coef[0]), 1.0 / math.sqrt(coef[1])]))
    pos = np.maximum(v, 0.0)
    # a 2D Gaussian has E[r^2] = 2 sigma^2
    sigma_m = max(math.sqrt(0.5 * float(pos @ r2) / float(pos.sum())), 0.5)
    seeds.append(np.array([best_amp(sigma_m), sigma_m]))
    params = min(seeds, key=misfit)
    cost = misfit(params)
    for _ in range(max_iters):
        amp, s = params
        e = np.exp(-r2 / (2.0 * s * s))
        model = amp * e
        J = np.stack([e, model * r2 / s ** 3], axis=1)
        step, *_ = np.linalg.lstsq(J, v - model, rcond=None)
        # halve the Gauss-Newton step until the misfit does not grow
        for _ in range(40):
            trial = params + step
            if np.all(np.isfinite(trial)) and trial[1] > 0:
                trial_cost = misfit(trial)
                if trial_cost <= cost * (1.0 + 1e-12):
                    break
            step = 0.5 * step
        else:
            break
        params, cost = trial, trial_cost
        if np.all(np.abs(step) <= tol * np.maximum(np.abs(params), 1e-300)):
            break
    if not params[1] <= 10.0 * patch.shape[0]:
        raise FitError("fitted width exceeds the patch scale")
    amp, s = params
    if not amp > 0:
        raise FitError("fitted peak is not positive")
    model = amp * np.exp(-r2 / (2.0 * s * s))
    resid = float(np.sqrt(np.mean((v - model) ** 2)))
    return GaussianFit(FWHM_PER_SIGMA * s, float(amp), float(s), resid)


@dataclass(frozen=True)
class TubeTrack:
    """Straight threadlike structure ``point + s * direction`` (mm)."""

    point: tuple[float, float, float]
    direction: tuple[float, float, float]

    def center_at(self, z: float) -> tuple[float, float]:
        d = np.asarray(self.direction, dtype=float)
        if abs(d[2]) < 1e-12:
            raise ValueError("track does not cross horizontal sections")
        s = (z - self.point[2]) / d[2]
        return self.point[0] + s * d[0], self.point[1] + s * d[1]


def _pixel(grid, x: float, y: float) -> tuple[int, int]:
    i, j, _ = grid.index_of((x, y, grid.center_mm[2]))
    return i, j


def hot_spot(section: np.ndarray, ij: tuple[int, int], search: int) -> tuple[int, int]:
    """Argmax of ``section`` within ``search`` pixels of ``ij``; ties (flat
    tops) go to the pixel nearest ``ij``."""
    i0, j0 = ij
    lo_i, lo_j = max(i0 - search, 0), max(j0 - search, 0)
    win = section[lo_i:i0 + search + 1, lo_j:j0 + search + 1]
    top = float(np.max(win))
    ci, cj = np.nonzero(win >= top - 1e-12 * abs(top))
    d2 = (ci + lo_i - i0) ** 2 + (cj + lo_j - j0) ** 2
    k = int(np.argmin(d2))
    return lo_i + int(ci[k]), lo_j + int(cj[k])


def extract_patch(section: np.ndarray, ij: tuple[int, int], nr: int) -> np.ndarray:
    i, j = ij
    if i - nr < 0 or j - nr < 0 or i + nr >= section.shape[0] or j + nr >= section.shape[1]:
        raise FitError(f"patch of half-width {nr} around {ij} leaves the image")
    return section[i - nr:i + nr + 1, j - nr:j + nr + 1]


@dataclass(frozen=True)
class FwhmProfile:
    fwhm_mm: np.ndarray  # NaN where the fit failed
    failed: int

    @property
    def mean(self) -> float:
        ok = self.fwhm_mm[np.isfinite(self.fwhm_mm)]
        return float(np.mean(ok)) if ok.size else math.nan


def structure_fwhm(volume, grid, track: TubeTrack, z_indices, nr: int, search: int = 2) -> FwhmProfile:
    """FWHM (mm) of the structure on each horizontal section ``z_indices``."""
    volume = np.asarray(volume, dtype=float).reshape(grid.dims)
    zs = grid.axis(2)
    out = []
    failed = 0
    for k in z_indices:
        sec = volume[:, :, k]
        try:
            ij = hot_spot(sec, _pixel(grid, *track.center_at(zs[k])), search)
            fit = gaussian_fit_fwhm(extract_patch(sec, ij, nr))
            out.append(fit.fwhm * grid.spacing_mm)
        except FitError:
            out.append(math.nan)
            failed += 1
    return FwhmProfile(np.array(out), failed)


@dataclass(frozen=True)
class RoiSpec:
    signal: np.ndarray  # flat voxel indices
    background: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.signal, dtype=np.int64)
        b = np.asarray(self.background, dtype=np.int64)
        if s.size == 0 or b.size == 0:
            raise ValueError("signal and background ROIs must be nonempty")
        if np.intersect1d(s, b).size:
            raise ValueError("signal and background ROIs overlap")
        object.__setattr__(self, "signal", s)
        object.__setattr__(self, "background", b)

    @property
    def n_signal(self) -> int:
        return int(self.signal.size)

    @property
    def n_background(self) -> int:
        return int(self.background.size)


def make_roi(grid, track: TubeTrack, z_indices, n_background: int, radius_mm: float,
             seed: int = 0, exclude=None, reference=None, search: int = 2) -> RoiSpec:
    """Signal ROI: the hot-spot voxel of each section. Background ROI:
    ``n_background`` voxels per section drawn uniformly (seeded, without
    replacement) from the disc of ``radius_mm`` around the hot spot.

    ``reference`` (a volume) locates hot spots by argmax near the track;
    otherwise the voxel nearest the track is used. ``exclude`` is a boolean
    volume of voxels that may not enter the background.
    """
    rng = np.random.default_rng(seed)
    zs = grid.axis(2)
    ax, ay = grid.axis(0), grid.axis(1)
    nx, ny, nz = grid.dims
    signal, background = [], []
    for k in z_indices:
        ij = _pixel(grid, *track.center_at(zs[k]))
        if reference is not None:
            ij = hot_spot(np.asarray(reference).reshape(grid.dims)[:, :, k], ij, search)
        i, j = ij
        sflat = (i * ny + j) * nz + k
        signal.append(sflat)
        r2 = (ax[:, None] - ax[i]) ** 2 + (ay[None, :] - ay[j]) ** 2
        ok = r2 <= radius_mm ** 2
        ok[i, j] = False
        if exclude is not None:
            ok &= ~np.asarray(exclude, dtype=bool).reshape(grid.dims)[:, :, k]
        ci, cj = np.nonzero(ok)
        if ci.size < n_background:
            raise ValueError(f"only {ci.size} background candidates on section {k}")
        pick = rng.choice(ci.size, size=n_background, replace=False)
        background.extend(((ci[pick] * ny + cj[pick]) * nz + k).tolist())
    return RoiSpec(np.array(signal), np.array(background))


@dataclass(frozen=True)
class RoiStats:
    signal_mean: float
    background_mean: float
    sigma_b: float


def roi_stats(theta, roi: RoiSpec) -> RoiStats:
    """ROI means and background standard deviation (N_b - 1 divisor)."""
    flat = np.asarray(theta, dtype=float).ravel()
    for idx in (roi.signal, roi.background):
        if idx.min() < 0 or idx.max() >= flat.size:
            raise IndexError("ROI index out of range")
    s = flat[roi.signal]
    b = flat[roi.background]
    sigma = float(np.std(b, ddof=1)) if b.size > 1 else 0.0
    return RoiStats(float(np.mean(s)), float(np.mean(b)), sigma)


def cnr(stats: RoiStats) -> float:
    """``|signal_mean - background_mean| / sigma_b``; infinite when sigma_b = 0."""
    if stats.sigma_b == 0:
        return math.inf
    return abs(stats.signal_mean - stats.background_mean) / stats.sigma_b


@dataclass(frozen=True)
class TradeoffPoint:
    reg_param: float
    fwhm_mm: float
    sigma_b: float
    signal_mean: float
    cnr: float
    failed_fits: int = 0


def evaluate(volume, grid, roi: RoiSpec, track: TubeTrack, z_indices, nr: int,
             reg_param: float = math.nan) -> TradeoffPoint:
    prof = structure_fwhm(volume, grid, track, z_indices, nr)
    st = roi_stats(volume, roi)
    return TradeoffPoint(float(reg_param), prof.mean, st.sigma_b, st.signal_mean, cnr(st), prof.failed)


def sweep_tradeoff(reconstruct, reg_values, grid, roi: RoiSpec, track: TubeTrack, z_indices,
                   nr: int) -> list[TradeoffPoint]:
    """Reconstruct with each regularization value and summarize image quality.

    ``reconstruct(reg_value)`` returns a volume on ``grid``.
    """
    reg_values = list(reg_values)
    if len(reg_values) < 2:
        raise ValueError("a sweep needs at least two regularization values")
    return [evaluate(reconstruct(r), grid, roi, track, z_indices, nr, r) for r in reg_values]


TRADEOFF_HEADER = ("reg_param", "fwhm_mm", "sigma_b", "signal_mean", "cnr")


def write_tradeoff_csv(path, points):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRADEOFF_HEADER)
        for p in points:
            w.writerow([repr(float(getattr(p, k))) for k in TRADEOFF_HEADER])
