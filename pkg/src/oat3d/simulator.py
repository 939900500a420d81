"""Synthetic phantoms and measurement data.

Phantoms are unions of uniform spheres and cylindrical tubes. Data are produced
with the same discrete model that the iterative solvers invert, plus white
Gaussian noise injected on the time samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeMismatchError
from .geometry import ImageGrid, ScanGeometry
from .operator import FrequencyData, SystemOperator, TimeData, freq_to_time, time_to_freq
from .physics import AcousticConstants


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    value: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ConfigError("sphere radius must be positive")
        if self.value < 0:
            raise ConfigError("sphere value must be non-negative")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.asarray(self.center)
        return np.einsum("ij,ij->i", d, d) <= self.radius ** 2

    def to_dict(self) -> dict:
        return {"kind": "sphere", "center": list(self.center), "radius": self.radius, "value": self.value}


@dataclass(frozen=True)
class Tube:
    """Solid cylinder around the line ``point + s * direction``.

    ``half_length=None`` makes the tube infinite; otherwise ``|s| <= half_length``.
    """

    point: tuple[float, float, float]
    direction: tuple[float, float, float]
    radius: float
    value: float
    half_length: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(c) for c in self.point))
        u = np.asarray(self.direction, dtype=float)
        norm = float(np.linalg.norm(u))
        if norm == 0:
            raise ConfigError("tube direction must be nonzero")
        object.__setattr__(self, "direction", tuple(float(c) for c in u / norm))
        if not self.radius > 0:
            raise ConfigError("tube radius must be positive")
        if self.value < 0:
            raise ConfigError("tube value must be non-negative")
        if self.half_length is not None and not self.half_length > 0:
            raise ConfigError("tube half_length must be positive")

    def contains(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.asarray(self.point)
        s = d @ np.asarray(self.direction)
        perp = d - s[:, None] * np.asarray(self.direction)
        inside = np.einsum("ij,ij->i", perp, perp) <= self.radius ** 2
        if self.half_length is not None:
            inside &= np.abs(s) <= self.half_length
        return inside

    def to_dict(self) -> dict:
        d = {"kind": "tube", "point": list(self.point), "direction": list(self.direction),
             "radius": self.radius, "value": self.value}
        if self.half_length is not None:
            d["half_length"] = self.half_length
        return d


def primitive_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "sphere":
        return Sphere(tuple(d["center"]), float(d["radius"]), float(d["value"]))
    if kind == "tube":
        hl = d.get("half_length")
        return Tube(tuple(d["point"]), tuple(d["direction"]), float(d["radius"]), float(d["value"]),
                    None if hl is None else float(hl))
    raise ConfigError(f"unknown phantom primitive {kind!r}")


@dataclass(frozen=True)
class Phantom:
    primitives: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def to_dict(self) -> dict:
        return {"primitives": [p.to_dict() for p in self.primitives]}

    @classmethod
    def from_dict(cls, d: dict) -> "Phantom":
        return cls(tuple(primitive_from_dict(p) for p in d.get("primitives", [])))


def rasterize(phantom: Phantom, grid: ImageGrid) -> np.ndarray:
    """Sample the phantom at voxel centers; overlapping primitives add up.

    Returns a volume of shape ``grid.dims``.
    """
    pts = grid.voxel_centers()
    theta = np.zeros(grid.num_voxels)
    for prim in phantom.primitives:
        theta[prim.contains(pts)] += prim.value
    return theta.reshape(grid.dims)


@dataclass(frozen=True)
class NoiseModel:
    """Additive white Gaussian noise of standard deviation ``sigma`` on every
    time sample."""

    sigma: float = 0.0
    seed: int = 0
    kind: str = "additive-gaussian"

    def __post_init__(self):
        if self.kind != "additive-gaussian":
            raise ConfigError(f"unsupported noise kind {self.kind!r}")
        if not self.sigma >= 0:
            raise ConfigError("noise sigma must be non-negative")


def pose_noise(noise: NoiseModel, geometry: ScanGeometry, num_samples: int) -> np.ndarray:
    """(Q, K) time-domain noise.

    Each pose draws from its own stream keyed by (seed, view angle, transducer),
    so any subset of views reproduces the dense scan's noise bit for bit.
    """
    start, stop = geometry.active_transducer_range
    out = np.empty((geometry.num_poses, num_samples))
    q = 0
    for angle in geometry.view_angles_rad:
        akey = int(round(angle * 1e12))
        for t in range(start, stop):
            rng = np.random.default_rng(np.random.SeedSequence([noise.seed, akey, t]))
            out[q] = rng.standard_normal(num_samples)
            q += 1
    return noise.sigma * out


@dataclass
class SimulationResult:
    freq: FrequencyData
    time: TimeData | None
    clean_freq: np.ndarray = field(repr=False)
    sigma: float = 0.0


def simulate(source, op: SystemOperator, noise: NoiseModel | None = None,
             with_time: bool = False) -> SimulationResult:
    """Frequency samples ``H theta + eta~`` (and optionally the time samples).

    ``source`` is a :class:`Phantom` or a coefficient volume on ``op.grid``.
    ``eta`` is real white noise on the K time samples of each pose, carried to
    the frequency domain with the same transform as the data.
    """
    if isinstance(source, Phantom):
        theta = rasterize(source, op.grid)
    else:
        theta = np.asarray(source, dtype=float)
        if theta.size != op.grid.num_voxels:
            raise ShapeMismatchError(f"coefficient vector has {theta.size} entries, "
                                     f"grid has {op.grid.num_voxels}")
    clean = op.apply(theta)
    lattice = op.lattice
    sigma = 0.0 if noise is None else noise.sigma
    if sigma > 0:
        eta = pose_noise(noise, op.geometry, lattice.K)
        freq = clean + time_to_freq(eta, lattice)
    else:
        eta = None
        freq = clean.copy()
    time = None
    if with_time:
        u = freq_to_time(clean, lattice)
        if eta is not None:
            u = u + eta
        time = TimeData(u, lattice)
    return SimulationResult(FrequencyData(freq, lattice), time, clean, sigma)


def sigma_for_snr(clean_time: np.ndarray, snr_db: float) -> float:
    """Noise sigma giving ``10 log10(mean(u^2) / sigma^2) = snr_db``."""
    power = float(np.mean(np.asarray(clean_time) ** 2))
    return math.sqrt(power / 10.0 ** (snr_db / 10.0))


def empirical_snr_db(clean_time: np.ndarray, noisy_time: np.ndarray) -> float:
    clean_time = np.asarray(clean_time)
    resid = np.asarray(noisy_time) - clean_time
    return 10.0 * math.log10(float(np.mean(clean_time ** 2)) / float(np.mean(resid ** 2)))


def analytic_sphere_pressure(t, sphere: Sphere, point, consts: AcousticConstants):
    """Pressure of a uniformly heated sphere observed at ``point``.

    ``-(Gamma c0 pi) value (t - d/c0) / (2 pi d)`` for ``|t - d/c0| <= R/c0``,
    zero elsewhere.
    """
    d = float(np.linalg.norm(np.asarray(point, dtype=float) - np.asarray(sphere.center)))
    if d <= sphere.radius:
        raise ValueError("observation point must lie outside the sphere")
    tau = np.asarray(t, dtype=float) - d / consts.c0
    inside = np.abs(tau) <= sphere.radius / consts.c0
    p = -consts.grueneisen * consts.c0 * math.pi * sphere.value * tau / (2.0 * math.pi * d)
    return np.where(inside, p, 0.0)
