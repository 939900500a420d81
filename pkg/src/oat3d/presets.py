"""Named scan setups and the six-tube phantom.

``phantom`` and ``mouse`` reproduce the published instrument and grids.
``desk`` keeps the probe radius, aperture, sampling interval and voxel size but
shrinks the grid, the number of poses and the time window so that iterative
reconstruction fits on a workstation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import ImageGrid, ScanGeometry, uniform_views
from .operator import SystemOperator
from .physics import AcousticConstants, Eir, FrequencyLattice
from .simulator import Phantom, Tube

TUBE_RADIUS_MM = 0.405
TUBE_VALUES = (5.681, 6.18, 6.555)


@dataclass(frozen=True)
class ScanSetup:
    geometry: ScanGeometry
    grid: ImageGrid
    consts: AcousticConstants
    lattice: FrequencyLattice
    eir: Eir
    f_max_mhz: float | None = None

    def operator(self, geometry: ScanGeometry | None = None) -> SystemOperator:
        return SystemOperator(geometry or self.geometry, self.grid, self.consts, self.lattice,
                              self.eir, self.f_max_mhz)

    def with_geometry(self, geometry: ScanGeometry) -> "ScanSetup":
        return ScanSetup(geometry, self.grid, self.consts, self.lattice, self.eir, self.f_max_mhz)


def _arc(num_views: int, num_transducers: int = 64, active: tuple[int, int] = (5, 59)) -> ScanGeometry:
    return ScanGeometry(probe_radius_mm=65.0, arc_span_deg=152.0, num_transducers=num_transducers,
                        transducer_width_a_mm=2.0, transducer_height_b_mm=2.0,
                        view_angles_rad=uniform_views(num_views), active_transducer_range=active)


def phantom_setup(num_views: int = 720) -> ScanSetup:
    spacing = 0.1
    return ScanSetup(
        geometry=_arc(num_views),
        grid=ImageGrid((198, 198, 500), spacing, (-1.0, 0.0, -3.0)),
        consts=AcousticConstants(1.47, 2000.0, spacing / 2),
        lattice=FrequencyLattice(1536, 0.05),
        eir=Eir.gaussian(),
    )


def mouse_setup(num_views: int = 180) -> ScanSetup:
    spacing = 0.14
    return ScanSetup(
        geometry=_arc(num_views),
        grid=ImageGrid((210, 210, 440), spacing, (0.49, 2.17, -2.73)),
        consts=AcousticConstants(1.54, 2000.0, spacing / 2),
        lattice=FrequencyLattice(1536, 0.05),
        eir=Eir.gaussian(),
    )


def desk_setup(num_views: int = 24, dims: int = 64) -> ScanSetup:
    """64^3 grid of 0.1 mm voxels, 12 of 14 arc elements active, 38-50 us window."""
    spacing = 0.1
    return ScanSetup(
        geometry=_arc(num_views, num_transducers=14, active=(1, 13)),
        grid=ImageGrid((dims, dims, dims), spacing),
        consts=AcousticConstants(1.47, 2000.0, spacing / 2),
        lattice=FrequencyLattice(240, 0.05, start_sample=760),
        eir=Eir.gaussian(2.0, 0.8),
        f_max_mhz=4.0,
    )


SETUPS = {"phantom": phantom_setup, "mouse": mouse_setup, "desk": desk_setup}


def get_setup(name: str, **kwargs) -> ScanSetup:
    try:
        return SETUPS[name](**kwargs)
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(SETUPS)}") from None


def six_tube_phantom(scale: float = 1.0) -> Phantom:
    """Three tube pairs: one vertical tube near the rim, one tilted inner tube.

    Full-scale layout (``scale=1``): outer tubes run parallel to z at radius
    10 mm, azimuths 90, 210, 330 degrees; inner tubes pass radius 4 mm at z = 0
    at the same azimuths and lean 15 degrees in the tangential direction.
    Tubes extend over |z| <= 20 mm. ``scale`` shrinks positions and lengths;
    the tube radius (0.405 mm) and values are never scaled.
    """
    if not scale > 0:
        raise ConfigError("scale must be positive")
    tilt = math.radians(15.0)
    prims = []
    for i, value in enumerate(TUBE_VALUES):
        az = math.radians(90.0 + 120.0 * i)
        radial = np.array([math.cos(az), math.sin(az), 0.0])
        tangent = np.array([-math.sin(az), math.cos(az), 0.0])
        half = 20.0 * scale
        prims.append(Tube(tuple(10.0 * scale * radial), (0.0, 0.0, 1.0), TUBE_RADIUS_MM, value, half))
        direction = math.sin(tilt) * tangent + math.cos(tilt) * np.array([0.0, 0.0, 1.0])
        prims.append(Tube(tuple(4.0 * scale * radial), tuple(direction), TUBE_RADIUS_MM, value,
                          half / math.cos(tilt)))
    return Phantom(tuple(prims))
