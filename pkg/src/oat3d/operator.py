"""Discrete-to-discrete imaging model in the temporal frequency domain.

Data vectors are stored as (Q, L) complex arrays (row q, frequency index l),
which is the ``q*L + l`` lexicographic order when flattened. Image vectors are
(nx, ny, nz) volumes in C order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ShapeMismatchError
from .geometry import ImageGrid, ScanGeometry, enumerate_poses, local_axes, pose_arrays
from .physics import AcousticConstants, Eir, FrequencyLattice, eir_spectrum, p0_spectrum, sir_spectrum


def _shift_phase(lattice: FrequencyLattice) -> np.ndarray:
    # exp(-j 2 pi f_l t0) with t0 an integer number of samples; reduced mod K
    # so the Nyquist factor is exactly +-1.
    l = np.arange(lattice.L)
    frac = (l * lattice.start_sample) % lattice.K
    return np.exp(-2j * math.pi * frac / lattice.K)


def time_to_freq(u, lattice: FrequencyLattice) -> np.ndarray:
    """Half spectrum approximating the continuous Fourier integral (dt * DFT)."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != lattice.K:
        raise ShapeMismatchError(f"expected {lattice.K} time samples, got {u.shape[-1]}")
    return lattice.dt_us * np.fft.rfft(u, axis=-1) * _shift_phase(lattice)


def freq_to_time(U, lattice: FrequencyLattice) -> np.ndarray:
    """Inverse of :func:`time_to_freq` with Hermitian extension."""
    U = np.asarray(U)
    if U.shape[-1] != lattice.L:
        raise ShapeMismatchError(f"expected {lattice.L} frequency samples, got {U.shape[-1]}")
    return np.fft.irfft(U * np.conj(_shift_phase(lattice)), n=lattice.K, axis=-1) / lattice.dt_us


@dataclass
class FrequencyData:
    values: np.ndarray  # (Q, L) complex
    lattice: FrequencyLattice

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 2 or self.values.shape[1] != self.lattice.L:
            raise ShapeMismatchError(f"frequency data shape {self.values.shape} vs L={self.lattice.L}")
        scale = float(np.max(np.abs(self.values), initial=0.0))
        if np.any(np.abs(self.values[:, 0].imag) > 1e-9 * scale):
            raise ValueError("zero-frequency samples must be real")

    def to_time(self) -> "TimeData":
        return TimeData(freq_to_time(self.values, self.lattice), self.lattice)


@dataclass
class TimeData:
    values: np.ndarray  # (Q, K) real
    lattice: FrequencyLattice

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.lattice.K:
            raise ShapeMismatchError(f"time data shape {self.values.shape} vs K={self.lattice.K}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("time data must be finite")

    def to_freq(self) -> FrequencyData:
        return FrequencyData(time_to_freq(self.values, self.lattice), self.lattice)


class SystemOperator:
    """Implicit QL x N system matrix with its Hermitian-weighted adjoint.

    ``H[qL+l, n] = p0~(f) he~(f) hs~_q(r_n, f) / (ab)`` at ``f = l df``.
    Rows with ``l * df > f_max_mhz`` are treated as zero (out-of-band); with
    ``f_max_mhz=None`` the full half spectrum is modeled.
    """

    def __init__(self, geometry: ScanGeometry, grid: ImageGrid, consts: AcousticConstants,
                 lattice: FrequencyLattice, eir: Eir | None = None, f_max_mhz: float | None = None):
        if not math.isclose(consts.voxel_radius_mm, grid.voxel_radius_mm, rel_tol=1e-12):
            raise ValueError("voxel radius of the acoustic constants must equal half the grid spacing")
        self.geometry = geometry
        self.grid = grid
        self.consts = consts
        self.lattice = lattice
        self.eir = eir if eir is not None else Eir.identity()
        self.f_max_mhz = f_max_mhz

        self.poses = enumerate_poses(geometry)
        self._pos, theta, phi = pose_arrays(geometry)
        axes = [local_axes(t, p) for t, p in zip(theta, phi)]
        self._ex = np.ascontiguousarray([e[0] for e in axes])
        self._ey = np.ascontiguousarray([e[1] for e in axes])
        self._vox = np.ascontiguousarray(grid.voxel_centers())

        L = lattice.L
        lmax = L - 1
        if f_max_mhz is not None:
            lmax = min(lmax, int(math.floor(f_max_mhz / lattice.df_mhz + 1e-9)))
        self.lmax = max(lmax, 0)
        spec = p0_spectrum(lattice.frequencies(), consts) * self.eir.spectrum(lattice)
        spec[self.lmax + 1:] = 0.0
        self.spectral_factor = spec
        self.weights = lattice.hermitian_weights()

    @property
    def num_poses(self) -> int:
        return self._pos.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_poses * self.lattice.L, self.grid.num_voxels

    @property
    def data_shape(self) -> tuple[int, int]:
        return self.num_poses, self.lattice.L

    def element(self, q: int, l: int, n: int) -> complex:
        """Single matrix element from the closed-form physics factors."""
        Q, L = self.data_shape
        if not (0 <= q < Q and 0 <= l < L and 0 <= n < self.grid.num_voxels):
            raise IndexError(f"element index ({q}, {l}, {n}) out of range")
        if l > self.lmax:
            return 0j
        g = self.geometry
        f = l * self.lattice.df_mhz
        ab = g.transducer_width_a_mm * g.transducer_height_b_mm
        hs = sir_spectrum(f, self.poses[q], self._vox[n], g.transducer_width_a_mm,
                          g.transducer_height_b_mm, self.consts.c0)
        return complex(p0_spectrum(f, self.consts) * eir_spectrum(l, self.eir, self.lattice) * hs / ab)

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.grid.num_voxels:
            raise ShapeMismatchError(f"coefficient vector has {theta.size} entries, grid has {self.grid.num_voxels}")
        return theta.ravel()

    def _check_data(self, data) -> np.ndarray:
        data = np.asarray(data)
        if data.size != self.num_poses * self.lattice.L:
            raise ShapeMismatchError(f"data has {data.size} samples, operator expects {self.data_shape}")
        return data.reshape(self.data_shape)

    def apply(self, theta) -> np.ndarray:
        """Forward projection to (Q, L) complex frequency samples."""
        theta = self._check_theta(theta)
        Q, L = self.data_shape
        out = np.zeros((Q, L), dtype=complex)
        nz = np.flatnonzero(theta)
        if self.lmax == 0 or nz.size == 0:
            return out
        vals = np.ascontiguousarray(theta[nz])
        vox = self._vox[nz]
        re = np.zeros((Q, self.lmax))
        im = np.zeros((Q, self.lmax))
        g = self.geometry
        _kernels.forward(vals, *(np.ascontiguousarray(vox[:, k]) for k in range(3)), self._pos, self._ex, self._ey,
                         g.transducer_width_a_mm, g.transducer_height_b_mm,
                         self.consts.c0, self.lattice.df_mhz, self.lmax, re, im)
        out[:, 1:self.lmax + 1] = (re + 1j * im) * self.spectral_factor[1:self.lmax + 1]
        return out

    def apply_adjoint(self, data) -> np.ndarray:
        """``theta[n] = Re sum_{q,l} w_l conj(H[qL+l, n]) data[q, l]`` as a volume."""
        data = self._check_data(data)
        out = np.zeros(self.grid.num_voxels)
        if self.lmax == 0:
            return out.reshape(self.grid.dims)
        band = slice(1, self.lmax + 1)
        v = data[:, band] * (self.weights[band] * np.conj(self.spectral_factor[band]))
        g = self.geometry
        _kernels.adjoint(np.ascontiguousarray(v.real), np.ascontiguousarray(v.imag),
                         *(np.ascontiguousarray(self._vox[:, k]) for k in range(3)),
                         self._pos, self._ex, self._ey, g.transducer_width_a_mm,
                         g.transducer_height_b_mm, self.consts.c0, self.lattice.df_mhz,
                         self.lmax, out)
        return out.reshape(self.grid.dims)

    def normal(self, theta) -> np.ndarray:
        return self.apply_adjoint(self.apply(theta))

    def inner(self, u, v) -> float:
        """Hermitian-weighted real inner product of two half spectra."""
        u = self._check_data(u)
        v = self._check_data(v)
        return float(np.sum(self.weights * (np.conj(u) * v).real))

    def norm_sq(self, u) -> float:
        u = self._check_data(u)
        return float(np.sum(self.weights * (u.real ** 2 + u.imag ** 2)))

    def subset_views(self, view_indices) -> "SystemOperator":
        views = [self.geometry.view_angles_rad[i] for i in view_indices]
        return SystemOperator(self.geometry.with_views(views), self.grid, self.consts,
                              self.lattice, self.eir, self.f_max_mhz)
