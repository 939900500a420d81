"""Scanning geometry: arc-shaped probe rotated about the vertical axis.

The object rotates in the real instrument while the probe stays put. Here every
(view, transducer) pair is turned into a virtual pose on the measurement sphere,
so a single index ``q = view * n_active + transducer`` addresses all data.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ScanGeometry:
    """Arc probe of ``num_transducers`` elements spanning ``arc_span_deg`` in
    polar angle, centered on the equator, imaged at ``view_angles_rad``.

    ``active_transducer_range`` is a half-open ``(start, stop)`` interval of
    transducer indices that contribute data.
    """

    probe_radius_mm: float
    arc_span_deg: float
    num_transducers: int
    transducer_width_a_mm: float
    transducer_height_b_mm: float
    view_angles_rad: tuple[float, ...]
    active_transducer_range: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "view_angles_rad", tuple(float(v) for v in self.view_angles_rad))
        if self.active_transducer_range is None:
            object.__setattr__(self, "active_transducer_range", (0, int(self.num_transducers)))
        else:
            object.__setattr__(self, "active_transducer_range",
                               tuple(int(i) for i in self.active_transducer_range))
        self.validate()

    def validate(self):
        if not self.probe_radius_mm > 0:
            raise ValueError("probe_radius_mm must be positive")
        if not (self.transducer_width_a_mm > 0 and self.transducer_height_b_mm > 0):
            raise ValueError("transducer dimensions must be positive")
        if self.num_transducers < 1:
            raise ValueError("num_transducers must be >= 1")
        if not 0 <= self.arc_span_deg <= 180:
            raise ValueError("arc_span_deg must lie in [0, 180]")
        views = np.asarray(self.view_angles_rad)
        if views.size == 0:
            raise ValueError("at least one view angle is required")
        if np.any(views < 0) or np.any(views >= TWO_PI):
            raise ValueError("view angles must lie in [0, 2*pi)")
        if np.any(np.diff(views) <= 0):
            raise ValueError("view angles must be strictly increasing")
        start, stop = self.active_transducer_range
        if not 0 <= start < stop <= self.num_transducers:
            raise ValueError(f"invalid active transducer range {self.active_transducer_range}")

    @property
    def num_views(self) -> int:
        return len(self.view_angles_rad)

    @property
    def num_active(self) -> int:
        start, stop = self.active_transducer_range
        return stop - start

    @property
    def num_poses(self) -> int:
        return self.num_views * self.num_active

    @property
    def polar_step_rad(self) -> float:
        if self.num_transducers == 1:
            return 0.0
        return math.radians(self.arc_span_deg) / (self.num_transducers - 1)

    def polar_angles(self) -> np.ndarray:
        """Polar angles of all arc elements, uniformly spaced about pi/2."""
        i = np.arange(self.num_transducers)
        half = 0.5 * math.radians(self.arc_span_deg)
        return math.pi / 2 - half + i * self.polar_step_rad

    def with_views(self, view_angles_rad) -> "ScanGeometry":
        return ScanGeometry(
            probe_radius_mm=self.probe_radius_mm,
            arc_span_deg=self.arc_span_deg,
            num_transducers=self.num_transducers,
            transducer_width_a_mm=self.transducer_width_a_mm,
            transducer_height_b_mm=self.transducer_height_b_mm,
            view_angles_rad=tuple(view_angles_rad),
            active_transducer_range=self.active_transducer_range,
        )

    def subsample_views(self, stride: int) -> "ScanGeometry":
        if stride < 1 or self.num_views % stride:
            raise ValueError(f"stride {stride} does not divide {self.num_views} views")
        return self.with_views(self.view_angles_rad[::stride])

    def to_dict(self) -> dict:
        return {
            "probe_radius_mm": float(self.probe_radius_mm),
            "arc_span_deg": float(self.arc_span_deg),
            "num_transducers": int(self.num_transducers),
            "transducer_width_a_mm": float(self.transducer_width_a_mm),
            "transducer_height_b_mm": float(self.transducer_height_b_mm),
            "view_angles_rad": [float(v) for v in self.view_angles_rad],
            "active_transducer_range": list(self.active_transducer_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScanGeometry":
        rng = d.get("active_transducer_range")
        return cls(
            probe_radius_mm=float(d["probe_radius_mm"]),
            arc_span_deg=float(d["arc_span_deg"]),
            num_transducers=int(d["num_transducers"]),
            transducer_width_a_mm=float(d["transducer_width_a_mm"]),
            transducer_height_b_mm=float(d["transducer_height_b_mm"]),
            view_angles_rad=tuple(d["view_angles_rad"]),
            active_transducer_range=None if rng is None else tuple(rng),
        )

    def hash(self) -> str:
        """Short content hash used to tie data files to their geometry."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def uniform_views(num_views: int) -> tuple[float, ...]:
    return tuple(TWO_PI * k / num_views for k in range(num_views))


@dataclass(frozen=True)
class TransducerPose:
    r: float
    theta: float
    phi: float
    view_index: int = 0
    transducer_index: int = 0
    position: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        st = math.sin(self.theta)
        pos = np.array([self.r * st * math.cos(self.phi),
                        self.r * st * math.sin(self.phi),
                        self.r * math.cos(self.theta)])
        object.__setattr__(self, "position", pos)

    @property
    def normal(self) -> np.ndarray:
        """Unit vector from the transducer toward the global origin."""
        return -self.position / self.r


def enumerate_poses(geom: ScanGeometry) -> list[TransducerPose]:
    """All virtual poses ordered by (view, transducer).

    Rotating the object by a view angle is realized by rotating the probe by
    the opposite angle about z.
    """
    polar = geom.polar_angles()
    start, stop = geom.active_transducer_range
    poses = []
    for v, angle in enumerate(geom.view_angles_rad):
        phi = (-angle) % TWO_PI
        for t in range(start, stop):
            poses.append(TransducerPose(geom.probe_radius_mm, float(polar[t]), phi, v, t))
    return poses


def pose_arrays(geom: ScanGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized poses: positions (Q, 3), polar angles (Q,), azimuths (Q,)."""
    start, stop = geom.active_transducer_range
    polar = geom.polar_angles()[start:stop]
    phi = np.mod(-np.asarray(geom.view_angles_rad), TWO_PI)
    theta_q = np.tile(polar, geom.num_views)
    phi_q = np.repeat(phi, geom.num_active)
    st = np.sin(theta_q)
    r = geom.probe_radius_mm
    pos = np.stack([r * st * np.cos(phi_q), r * st * np.sin(phi_q), r * np.cos(theta_q)], axis=1)
    return pos, theta_q, phi_q


def local_axes(theta: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    """Rows projecting a global point onto the transducer's (x_tr, y_tr) axes."""
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(phi), math.sin(phi)
    ex = np.array([-ct * cp, -ct * sp, st])
    ey = np.array([-sp, cp, 0.0])
    return ex, ey


def local_coords(pose: TransducerPose, point) -> tuple:
    """Transverse coordinates of ``point`` (shape (3,) or (M, 3)) in the
    transducer frame. The depth coordinate is dropped (far field)."""
    p = np.asarray(point, dtype=float)
    ex, ey = local_axes(pose.theta, pose.phi)
    return p @ ex, p @ ey


@dataclass(frozen=True)
class ImageGrid:
    """Uniform lattice of spherical voxels of radius ``spacing_mm / 2``.

    Voxels are stored in C order over (x, y, z).
    """

    dims: tuple[int, int, int]
    spacing_mm: float
    center_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))
        object.__setattr__(self, "center_mm", tuple(float(c) for c in self.center_mm))
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"invalid grid dims {self.dims}")
        if not self.spacing_mm > 0:
            raise ValueError("spacing_mm must be positive")

    @property
    def voxel_radius_mm(self) -> float:
        return 0.5 * self.spacing_mm

    @property
    def num_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def axis(self, k: int) -> np.ndarray:
        n = self.dims[k]
        return self.center_mm[k] + (np.arange(n) - 0.5 * (n - 1)) * self.spacing_mm

    def voxel_centers(self) -> np.ndarray:
        """(N, 3) voxel centers in C order."""
        x, y, z = np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij")
        return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)

    def index_of(self, point) -> tuple[int, int, int]:
        """Nearest voxel index of a point in mm."""
        p = np.asarray(point, dtype=float)
        idx = []
        for k in range(3):
            i = int(round((p[k] - self.center_mm[k]) / self.spacing_mm + 0.5 * (self.dims[k] - 1)))
            idx.append(min(max(i, 0), self.dims[k] - 1))
        return tuple(idx)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "spacing_mm": float(self.spacing_mm),
                "center_mm": list(self.center_mm)}

    @classmethod
    def from_dict(cls, d: dict) -> "ImageGrid":
        return cls(tuple(d["dims"]), float(d["spacing_mm"]), tuple(d.get("center_mm", (0, 0, 0))))
