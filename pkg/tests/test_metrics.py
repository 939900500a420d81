import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.ndimage import gaussian_filter

from oat3d.errors import FitError, ShapeMismatchError
from oat3d.geometry import ImageGrid
from oat3d.metrics import (FWHM_PER_SIGMA, RoiSpec, RoiStats, TubeTrack, cnr, extract_patch, gaussian_fit_fwhm,
                           make_roi, roi_stats, structure_fwhm, sweep_tradeoff, write_tradeoff_csv)
from oat3d.presets import TUBE_RADIUS_MM
from oat3d.simulator import Phantom, Tube, rasterize

from oracles import two_pass_stats


def gaussian_patch(sigma, nr=10, amp=1.0):
    n = np.arange(-nr, nr + 1)
    return amp * np.exp(-(n[:, None] ** 2 + n[None, :] ** 2) / (2 * sigma ** 2))


def test_fwhm_constant():
    assert FWHM_PER_SIGMA == pytest.approx(2.354820045, rel=1e-9)


def test_exact_gaussian_fit():
    fit = gaussian_fit_fwhm(gaussian_patch(2.0))
    assert fit.fwhm == pytest.approx(4.7096, abs=1e-4)
    assert fit.fwhm == pytest.approx(2 * math.sqrt(2 * math.log(2)) * 2.0, rel=1e-10)
    assert fit.peak == pytest.approx(1.0, rel=1e-10)
    assert fit.residual < 1e-12


def test_noisy_gaussian_fit_over_seeds():
    truth = FWHM_PER_SIGMA * 2.5
    errs = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        patch = gaussian_patch(2.5) + 0.01 * rng.standard_normal((21, 21))
        errs.append(abs(gaussian_fit_fwhm(patch).fwhm - truth) / truth)
    assert max(errs) < 0.02


@settings(max_examples=30, deadline=None)
@given(st.floats(0.8, 4.0), st.floats(1e-3, 1e3))
def test_fit_scale_invariance(sigma, scale):
    patch = gaussian_patch(sigma) + 0.02 * np.random.default_rng(1).standard_normal((21, 21))
    patch[10, 10] = abs(patch[10, 10]) + 0.5
    a = gaussian_fit_fwhm(patch)
    b = gaussian_fit_fwhm(scale * patch)
    assert b.fwhm == pytest.approx(a.fwhm, rel=1e-9)
    assert b.peak == pytest.approx(scale * a.peak, rel=1e-9)


def test_fit_errors():
    with pytest.raises(FitError):
        gaussian_fit_fwhm(-gaussian_patch(2.0))
    with pytest.raises(ShapeMismatchError):
        gaussian_fit_fwhm(np.ones((4, 4)))
    with pytest.raises(FitError):
        extract_patch(np.ones((10, 10)), (2, 5), 3)


TUBE_GRID = ImageGrid((41, 41, 12), 0.1)
TRACK = TubeTrack((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))


def tube_volume(grid=TUBE_GRID, value=1.0):
    return rasterize(Phantom((Tube(TRACK.point, TRACK.direction, TUBE_RADIUS_MM, value),)), grid)


def _brute_force_fwhm(patch):
    # variable projection: best amplitude in closed form, sigma on a fine grid
    nr = patch.shape[0] // 2
    n = np.arange(-nr, nr + 1)
    r2 = (n[:, None] ** 2 + n[None, :] ** 2).ravel()
    v = patch.ravel()
    sig = np.linspace(0.5, 10.0, 38001)
    e = np.exp(-r2[None, :] / (2 * sig[:, None] ** 2))
    amp = (e @ v) / np.sum(e * e, axis=1)
    cost = np.sum((v[None, :] - amp[:, None] * e) ** 2, axis=1)
    return FWHM_PER_SIGMA * sig[np.argmin(cost)]


def test_rasterized_tube_fwhm_matches_least_squares_oracle():
    vol = tube_volume()
    prof = structure_fwhm(vol, TUBE_GRID, TRACK, range(12), nr=10)
    assert prof.failed == 0
    ref = _brute_force_fwhm(vol[10:31, 10:31, 0]) * TUBE_GRID.spacing_mm
    np.testing.assert_allclose(prof.fwhm_mm, ref, rtol=1e-3)


@pytest.mark.xfail(strict=True, reason="least-squares Gaussian of the 0.81 mm top-hat has FWHM 0.587 mm, "
                                       "below the expected [0.7, 1.1] mm band")
def test_rasterized_tube_fwhm_band():
    prof = structure_fwhm(tube_volume(), TUBE_GRID, TRACK, range(12), nr=10)
    assert np.all((prof.fwhm_mm >= 0.7) & (prof.fwhm_mm <= 1.1))


def test_tilted_track_follows_structure():
    grid = ImageGrid((41, 41, 21), 0.1)
    track = TubeTrack((0.0, 0.0, 0.0), (0.3, 0.0, 1.0))
    vol = rasterize(Phantom((Tube(track.point, track.direction, TUBE_RADIUS_MM, 2.0),)), grid)
    prof = structure_fwhm(vol, grid, track, range(2, 19), nr=10)
    # elliptical sections of a top-hat tube: least-squares widths near the upright 0.59 mm
    assert prof.failed == 0
    assert np.all((prof.fwhm_mm > 0.5) & (prof.fwhm_mm < 0.8))
    assert track.center_at(1.0) == pytest.approx((0.3, 0.0))


def test_structure_fwhm_reports_failures():
    grid = ImageGrid((41, 41, 3), 0.1)
    prof = structure_fwhm(np.zeros(grid.dims), grid, TRACK, range(3), nr=10)
    assert prof.failed == 3 and math.isnan(prof.mean)


def test_roi_stats_examples():
    flat = np.array([5.0, 0.0, 1.0, 2.0])
    st_ = roi_stats(flat, RoiSpec([0], [1, 3]))
    assert st_ == RoiStats(5.0, 1.0, math.sqrt(2.0))
    const = roi_stats(np.full(10, 3.3), RoiSpec([0, 1], [4, 5, 6]))
    assert const.signal_mean == pytest.approx(3.3) and const.background_mean == pytest.approx(3.3)
    assert const.sigma_b < 1e-15
    with pytest.raises(IndexError):
        roi_stats(flat, RoiSpec([0], [9]))
    with pytest.raises(ValueError):
        RoiSpec([0, 1], [1, 2])
    with pytest.raises(ValueError):
        RoiSpec([], [1])


def test_roi_stats_two_pass_oracle():
    rng = np.random.default_rng(3)
    theta = rng.standard_normal(500)
    s = rng.choice(500, 20, replace=False)
    b = np.setdiff1d(rng.choice(500, 200, replace=False), s)
    got = roi_stats(theta, RoiSpec(s, b))
    ms, mb, sb = two_pass_stats(list(theta[s]), list(theta[b]))
    assert (got.signal_mean, got.background_mean) == pytest.approx((ms, mb), rel=1e-13)
    assert got.sigma_b == pytest.approx(sb, rel=1e-12)
    perm = RoiSpec(s[::-1], rng.permutation(b))
    assert roi_stats(theta, perm).sigma_b == pytest.approx(got.sigma_b, rel=1e-13)


def test_cnr_examples():
    assert cnr(RoiStats(3.0, 1.0, 0.5)) == 4.0
    assert cnr(RoiStats(1.0, 1.0, 0.5)) == 0.0
    assert cnr(RoiStats(2.0, 1.0, 0.0)) == math.inf


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_cnr_affine_invariance(a, b):
    rng = np.random.default_rng(4)
    theta = rng.standard_normal(300)
    roi = RoiSpec(np.arange(10), np.arange(50, 250))
    c0 = cnr(roi_stats(theta, roi))
    c1 = cnr(roi_stats(a * theta + b, roi))
    assert c1 == pytest.approx(c0, rel=1e-9)


def test_make_roi():
    grid = ImageGrid((41, 41, 6), 0.1)
    vol = tube_volume(grid)
    exclude = vol > 0
    roi = make_roi(grid, TRACK, range(6), 30, 1.5, seed=2, exclude=exclude, reference=vol)
    assert roi.n_signal == 6 and roi.n_background == 180
    assert not np.any(exclude.ravel()[roi.background])
    i, j, k = np.unravel_index(roi.background, grid.dims)
    x, y = grid.axis(0)[i], grid.axis(1)[j]
    assert np.all(x ** 2 + y ** 2 <= 1.5 ** 2 + 1e-12)
    assert sorted(set(k.tolist())) == list(range(6))
    again = make_roi(grid, TRACK, range(6), 30, 1.5, seed=2, exclude=exclude, reference=vol)
    np.testing.assert_array_equal(roi.background, again.background)
    with pytest.raises(ValueError):
        make_roi(grid, TRACK, range(6), 10_000, 1.5)


def test_sweep_identical_values_give_identical_rows(tmp_path):
    grid = ImageGrid((41, 41, 4), 0.1)
    base = tube_volume(grid)
    noise = np.random.default_rng(5).standard_normal(grid.dims) * 0.05
    x, y = np.meshgrid(grid.axis(0), grid.axis(1), indexing="ij")
    near = np.repeat((x ** 2 + y ** 2 <= 1.0 ** 2)[:, :, None], 4, axis=2)
    roi = make_roi(grid, TRACK, range(4), 40, 2.0, exclude=near)

    def recon(width):
        return gaussian_filter(base + noise, (width, width, 0))

    pts = sweep_tradeoff(recon, [1.0, 1.0, 2.0], grid, roi, TRACK, range(4), nr=10)
    assert pts[0] == pts[1]
    assert pts[2].fwhm_mm > pts[0].fwhm_mm and pts[2].sigma_b < pts[0].sigma_b
    path = tmp_path / "sweep.csv"
    write_tradeoff_csv(path, pts)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["reg_param", "fwhm_mm", "sigma_b", "signal_mean", "cnr"]
    assert rows[1] == rows[2] and len(rows) == 4
    with pytest.raises(ValueError):
        sweep_tradeoff(recon, [1.0], grid, roi, TRACK, range(4), nr=10)
