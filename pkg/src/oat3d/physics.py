"""Closed-form temporal spectra of the imaging model.

Fourier convention: ``x~(f) = integral x(t) exp(-j 2 pi f t) dt``. Frequencies
are in MHz, times in microseconds, lengths in mm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AcousticConstants:
    """Speed of sound c0 (mm/us), Grueneisen coefficient and voxel radius (mm).

    Thermal expansion and heat capacity only ever enter through
    ``grueneisen = beta c0^2 / C_p``, so they are not stored separately.
    """

    speed_of_sound_mm_per_us: float = 1.47
    grueneisen: float = 2000.0
    voxel_radius_mm: float = 0.05

    def __post_init__(self):
        if not (self.speed_of_sound_mm_per_us > 0 and self.grueneisen > 0 and self.voxel_radius_mm > 0):
            raise ValueError("acoustic constants must be positive")

    @property
    def c0(self) -> float:
        return self.speed_of_sound_mm_per_us

    def to_dict(self) -> dict:
        return {"speed_of_sound_mm_per_us": self.speed_of_sound_mm_per_us,
                "grueneisen": self.grueneisen, "voxel_radius_mm": self.voxel_radius_mm}

    @classmethod
    def from_dict(cls, d: dict) -> "AcousticConstants":
        return cls(float(d["speed_of_sound_mm_per_us"]), float(d["grueneisen"]),
                   float(d["voxel_radius_mm"]))


@dataclass(frozen=True)
class FrequencyLattice:
    """Real-signal half spectrum of K samples at interval dt_us.

    Samples sit at absolute times ``(start_sample + k) * dt_us``; an integer
    start offset lets a short window cover late arrivals without changing the
    absolute-time Fourier convention.
    """

    num_samples: int
    dt_us: float
    start_sample: int = 0

    def __post_init__(self):
        if self.num_samples < 2 or self.num_samples % 2:
            raise ValueError("num_samples must be even and >= 2")
        if not self.dt_us > 0:
            raise ValueError("dt_us must be positive")
        if self.start_sample < 0:
            raise ValueError("start_sample must be non-negative")

    @property
    def K(self) -> int:
        return self.num_samples

    @property
    def L(self) -> int:
        return self.num_samples // 2 + 1

    @property
    def df_mhz(self) -> float:
        return 1.0 / (self.num_samples * self.dt_us)

    @property
    def nyquist_mhz(self) -> float:
        return 0.5 / self.dt_us

    @property
    def t0_us(self) -> float:
        return self.start_sample * self.dt_us

    def frequencies(self) -> np.ndarray:
        return np.arange(self.L) * self.df_mhz

    def times(self) -> np.ndarray:
        return (self.start_sample + np.arange(self.num_samples)) * self.dt_us

    def hermitian_weights(self) -> np.ndarray:
        """Weights turning half-spectrum inner products into full-spectrum ones."""
        w = np.full(self.L, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w

    def to_dict(self) -> dict:
        return {"num_samples": self.num_samples, "dt_us": self.dt_us, "start_sample": self.start_sample}

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyLattice":
        return cls(int(d["num_samples"]), float(d["dt_us"]), int(d.get("start_sample", 0)))


def _bracket(x):
    # cos(x) - sin(x)/x, with a series where the two terms cancel.
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    x2 = xs * xs
    out[small] = -x2 / 3.0 + x2 * x2 / 30.0 - x2 ** 3 / 840.0
    xl = x[~small]
    out[~small] = np.cos(xl) - np.sin(xl) / xl
    return out


def p0_spectrum(f, consts: AcousticConstants):
    """Spectrum of the N-shaped pressure pulse of a uniform sphere of radius eps.

    ``-j (Gamma c0 / f) [ (eps/c0) cos(2 pi f eps/c0) - sin(2 pi f eps/c0)/(2 pi f) ]``,
    zero at f = 0.
    """
    f = np.asarray(f, dtype=float)
    scalar = f.ndim == 0
    f = np.atleast_1d(f)
    if np.any(f < 0):
        raise ValueError("p0_spectrum is defined for f >= 0")
    c0 = consts.c0
    eps = consts.voxel_radius_mm
    out = np.zeros(f.shape, dtype=complex)
    nz = f > 0
    x = 2.0 * math.pi * f[nz] * eps / c0
    # (eps/c0) cos x - sin x/(2 pi f) == (eps/c0) (cos x - sin x / x)
    out[nz] = -1j * (consts.grueneisen * c0 / f[nz]) * (eps / c0) * _bracket(x)
    return out[0] if scalar else out


def p0_time(t, consts: AcousticConstants):
    """Time-domain N-shape ``-(Gamma c0 pi) t`` on ``|t| <= eps/c0``."""
    t = np.asarray(t, dtype=float)
    half = consts.voxel_radius_mm / consts.c0
    return np.where(np.abs(t) <= half, -consts.grueneisen * consts.c0 * math.pi * t, 0.0)


def _sinc(u):
    # sin(u)/u with sinc(0) = 1 (numpy's sinc is normalized by pi).
    return np.sinc(np.asarray(u) / math.pi)


def sir_spectrum(f, pose, voxel, a_mm: float, b_mm: float, c0: float):
    """Far-field spectrum of the spatial impulse response of a flat a x b
    rectangular aperture for a point source at ``voxel``."""
    from .geometry import local_coords

    f = np.asarray(f, dtype=float)
    voxel = np.asarray(voxel, dtype=float)
    d = float(np.linalg.norm(pose.position - voxel))
    if d == 0.0:
        raise ValueError("voxel coincides with the transducer center")
    xt, yt = local_coords(pose, voxel)
    return (a_mm * b_mm / (2.0 * math.pi * d)
            * np.exp(-2j * math.pi * f * d / c0)
            * _sinc(math.pi * f * a_mm * xt / (c0 * d))
            * _sinc(math.pi * f * b_mm * yt / (c0 * d)))


@dataclass(frozen=True)
class Eir:
    """Acousto-electric impulse response spectrum.

    ``kind`` is ``"identity"``, ``"gaussian"`` (Gaussian magnitude peaking at 1
    at ``center_mhz``, ``fractional_bandwidth`` = FWHM / center, linear phase
    with delay ``delay_us``) or ``"tabulated"`` (``samples`` on the lattice).
    """

    kind: str = "identity"
    center_mhz: float = 2.5
    fractional_bandwidth: float = 0.8
    delay_us: float = 0.0
    samples: np.ndarray | None = None
    df_mhz: float | None = None

    def __post_init__(self):
        if self.kind not in ("identity", "gaussian", "tabulated"):
            raise ValueError(f"unknown EIR kind {self.kind!r}")
        if self.kind == "gaussian" and not (self.center_mhz > 0 and self.fractional_bandwidth > 0):
            raise ValueError("gaussian EIR needs positive center and bandwidth")
        if self.kind == "tabulated":
            if self.samples is None:
                raise ValueError("tabulated EIR needs samples")
            s = np.asarray(self.samples)
            if s.ndim != 1:
                raise ValueError("tabulated EIR must be one-dimensional")
            if abs(s[0].imag) > 1e-12 * max(1.0, float(np.max(np.abs(s)))):
                raise ValueError("tabulated EIR must be real at f = 0")

    @classmethod
    def identity(cls) -> "Eir":
        return cls("identity")

    @classmethod
    def gaussian(cls, center_mhz: float = 2.5, fractional_bandwidth: float = 0.8,
                 delay_us: float = 0.0) -> "Eir":
        return cls("gaussian", center_mhz, fractional_bandwidth, delay_us)

    @classmethod
    def tabulated(cls, samples, df_mhz: float | None = None) -> "Eir":
        return cls("tabulated", samples=np.asarray(samples), df_mhz=df_mhz)

    def spectrum(self, lattice: FrequencyLattice) -> np.ndarray:
        L = lattice.L
        if self.kind == "identity":
            return np.ones(L, dtype=complex)
        if self.kind == "gaussian":
            f = lattice.frequencies()
            sigma = self.fractional_bandwidth * self.center_mhz / (2.0 * math.sqrt(2.0 * math.log(2.0)))
            mag = np.exp(-0.5 * ((f - self.center_mhz) / sigma) ** 2)
            return mag * np.exp(-2j * math.pi * f * self.delay_us)
        s = np.asarray(self.samples)
        if s.shape[0] != L:
            raise ValueError(f"tabulated EIR has {s.shape[0]} samples, lattice needs {L}")
        if self.df_mhz is not None and not math.isclose(self.df_mhz, lattice.df_mhz, rel_tol=1e-9):
            raise ValueError("tabulated EIR frequency spacing does not match the lattice")
        return s.astype(complex)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "gaussian":
            d.update(center_mhz=self.center_mhz, fractional_bandwidth=self.fractional_bandwidth,
                     delay_us=self.delay_us)
        return d


def eir_spectrum(l: int, eir: Eir, lattice: FrequencyLattice) -> complex:
    if not 0 <= l < lattice.L:
        raise IndexError(f"frequency index {l} outside [0, {lattice.L})")
    if eir.kind == "identity":
        return 1.0 + 0j
    if eir.kind == "tabulated":
        return complex(np.asarray(eir.samples)[l])
    return complex(eir.spectrum(lattice)[l])
