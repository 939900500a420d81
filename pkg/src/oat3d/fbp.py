"""Filtered backprojection for a spherical measurement surface.

The voltage traces are first deconvolved by the EIR (regularized division,
Hann-windowed), then backprojected with the universal spherical formula

    A(r) = -(6/pi) / (2 pi Gamma R_s) sum_q dS_q [2 p + t dp/dt](r'_q, t) / |r - r'_q|

evaluated at ``t = |r - r'_q| / c0``. The factor 6/pi converts the continuous
absorbed energy density into coefficients of inscribed spherical voxels,
which fill pi/6 of each cube.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from . import _kernels  # noqa: F401  (sets the threading layer)
from .errors import ConfigError, ShapeMismatchError
from .geometry import ImageGrid, ScanGeometry, pose_arrays
from .operator import freq_to_time, time_to_freq
from .physics import AcousticConstants, Eir, FrequencyLattice

SPHERICAL_VOXEL_SCALE = 6.0 / math.pi


@dataclass(frozen=True)
class FbpConfig:
    cutoff_mhz: float
    interpolation: str = "linear"

    def __post_init__(self):
        if not self.cutoff_mhz > 0:
            raise ConfigError("cutoff frequency must be positive")
        if self.interpolation not in ("linear", "cubic"):
            raise ConfigError(f"unknown interpolation {self.interpolation!r}")


def hann_window(f, cutoff_mhz: float) -> np.ndarray:
    """``0.5 [1 - cos(pi (f_c - f) / f_c)]`` for ``f <= f_c``, zero beyond."""
    f = np.abs(np.asarray(f, dtype=float))
    w = 0.5 * (1.0 - np.cos(math.pi * (cutoff_mhz - f) / cutoff_mhz))
    return np.where(f <= cutoff_mhz, w, 0.0)


def _check_cutoff(cutoff_mhz: float, lattice: FrequencyLattice):
    if not 0 < cutoff_mhz <= lattice.nyquist_mhz * (1 + 1e-12):
        raise ConfigError(f"cutoff {cutoff_mhz} MHz outside (0, {lattice.nyquist_mhz}] MHz")


def deconvolve(u, eir: Eir, lattice: FrequencyLattice, cutoff_mhz: float,
               delta_rel: float = 1e-6) -> np.ndarray:
    """Estimate the pressure traces from voltage traces of shape (..., K).

    ``p~ = u~ conj(h) / (|h|^2 + delta) * W``, ``delta = delta_rel * max |h|^2``.
    """
    _check_cutoff(cutoff_mhz, lattice)
    h = eir.spectrum(lattice)
    h2 = np.abs(h) ** 2
    delta = delta_rel * float(np.max(h2))
    filt = np.conj(h) / (h2 + delta) * hann_window(lattice.frequencies(), cutoff_mhz)
    return freq_to_time(time_to_freq(u, lattice) * filt, lattice)


def convolve_eir(p, eir: Eir, lattice: FrequencyLattice) -> np.ndarray:
    """Circular convolution of traces (..., K) with the EIR."""
    return freq_to_time(time_to_freq(p, lattice) * eir.spectrum(lattice), lattice)


def surface_weights(geometry: ScanGeometry) -> np.ndarray:
    """Patch area ``dtheta dphi sin(theta) R_s^2`` of each pose.

    The azimuthal extent of a view is half the gap to each neighbour (views
    wrap around 2 pi), so non-uniform view sets are handled.
    """
    views = np.asarray(geometry.view_angles_rad)
    if views.size == 1:
        dphi = np.array([2.0 * math.pi])
    else:
        nxt = np.roll(views, -1)
        nxt[-1] += 2.0 * math.pi
        prv = np.roll(views, 1)
        prv[0] -= 2.0 * math.pi
        dphi = 0.5 * (nxt - prv)
    dtheta = geometry.polar_step_rad if geometry.num_transducers > 1 else math.pi
    _, theta_q, _ = pose_arrays(geometry)
    dphi_q = np.repeat(dphi, geometry.num_active)
    return dtheta * dphi_q * np.sin(theta_q) * geometry.probe_radius_mm ** 2


def fbp_filtered_traces(p: np.ndarray, lattice: FrequencyLattice) -> np.ndarray:
    """``2 p + t dp/dt`` with the derivative taken in the frequency domain."""
    f = lattice.frequencies()
    dp = freq_to_time(time_to_freq(p, lattice) * (2j * math.pi * f), lattice)
    return 2.0 * p + lattice.times() * dp


@numba.njit(parallel=True, fastmath=True, cache=True)
def _backproject(g, vox, pos, wq, c0, dt, k0, cubic, out):
    N = vox.shape[0]
    Q, K = g.shape
    for n in numba.prange(N):
        x = vox[n, 0]
        y = vox[n, 1]
        z = vox[n, 2]
        acc = 0.0
        for q in range(Q):
            dx = pos[q, 0] - x
            dy = pos[q, 1] - y
            dz = pos[q, 2] - z
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            s = d / (c0 * dt) - k0
            i = int(math.floor(s))
            fr = s - i
            if cubic:
                if i < 1 or i + 2 > K - 1:
                    continue
                p0 = g[q, i - 1]
                p1 = g[q, i]
                p2 = g[q, i + 1]
                p3 = g[q, i + 2]
                # Catmull-Rom
                v = p1 + 0.5 * fr * (p2 - p0 + fr * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3
                                                     + fr * (3.0 * (p1 - p2) + p3 - p0)))
            else:
                if i < 0 or i + 1 > K - 1:
                    continue
                v = (1.0 - fr) * g[q, i] + fr * g[q, i + 1]
            acc += wq[q] * v / d
        out[n] = acc


def fbp_reconstruct(p, geometry: ScanGeometry, grid: ImageGrid, consts: AcousticConstants,
                    lattice: FrequencyLattice, cfg: FbpConfig | None = None,
                    weights: np.ndarray | None = None) -> np.ndarray:
    """Backproject pressure traces (Q, K) onto ``grid``; returns a volume."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape != (geometry.num_poses, lattice.K):
        raise ShapeMismatchError(f"pressure shape {p.shape}, expected ({geometry.num_poses}, {lattice.K})")
    cfg = cfg or FbpConfig(cutoff_mhz=lattice.nyquist_mhz)
    wq = surface_weights(geometry) if weights is None else np.asarray(weights, dtype=float)
    if wq.shape != (geometry.num_poses,):
        raise ShapeMismatchError("one quadrature weight per pose is required")
    g = np.ascontiguousarray(fbp_filtered_traces(p, lattice))
    pos, _, _ = pose_arrays(geometry)
    out = np.empty(grid.num_voxels)
    _backproject(g, np.ascontiguousarray(grid.voxel_centers()), np.ascontiguousarray(pos), wq,
                 consts.c0, lattice.dt_us, float(lattice.start_sample), cfg.interpolation == "cubic", out)
    scale = -SPHERICAL_VOXEL_SCALE / (2.0 * math.pi * consts.grueneisen * geometry.probe_radius_mm)
    return (scale * out).reshape(grid.dims)


def fbp_from_voltage(u, geometry: ScanGeometry, grid: ImageGrid, consts: AcousticConstants,
                     lattice: FrequencyLattice, eir: Eir, cfg: FbpConfig) -> np.ndarray:
    """Deconvolve voltage traces and backproject in one call."""
    p = deconvolve(u, eir, lattice, cfg.cutoff_mhz)
    return fbp_reconstruct(p, geometry, grid, consts, lattice, cfg)
