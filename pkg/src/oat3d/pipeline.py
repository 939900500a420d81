"""Glue between data containers and the three reconstruction algorithms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .container import ArrayContainer
from .errors import NumericalError, ShapeMismatchError
from .fbp import FbpConfig, fbp_from_voltage
from .geometry import ScanGeometry
from .iterative import PlsQConfig, PlsTvConfig, SolverResult, solve_plsq, solve_plstv
from .operator import freq_to_time, time_to_freq
from .physics import FrequencyLattice
from .presets import ScanSetup

ALGORITHMS = ("fbp", "plsq", "plstv")


def data_meta(geometry: ScanGeometry, lattice: FrequencyLattice, **extra) -> dict:
    meta = {"geometry": geometry.to_dict(), "geometry_hash": geometry.hash(),
            "lattice": lattice.to_dict(), "dt_us": lattice.dt_us, "df_mhz": lattice.df_mhz}
    meta.update(extra)
    return meta


def data_geometry(container: ArrayContainer, setup: ScanSetup) -> ScanGeometry:
    """Geometry recorded in a data file, checked against the run setup.

    The view set may differ (sparse subsets); everything else must agree.
    """
    meta = container.meta
    if "geometry" not in meta:
        raise ShapeMismatchError("data file carries no geometry")
    geom = ScanGeometry.from_dict(meta["geometry"])
    if geom.hash() != meta.get("geometry_hash"):
        raise ShapeMismatchError("geometry hash in the data header does not match its geometry")
    mine = setup.geometry.to_dict()
    theirs = geom.to_dict()
    for key in mine:
        if key != "view_angles_rad" and mine[key] != theirs[key]:
            raise ShapeMismatchError(f"data geometry differs from the configuration in {key}")
    if FrequencyLattice.from_dict(meta.get("lattice", {})) != setup.lattice:
        raise ShapeMismatchError("data sampling differs from the configuration")
    n_last = container.data.shape[-1]
    if container.data.shape[0] != geom.num_poses or n_last not in (setup.lattice.K, setup.lattice.L):
        raise ShapeMismatchError(f"data shape {container.data.shape} does not fit the geometry")
    return geom


def as_time(data: np.ndarray, lattice: FrequencyLattice) -> np.ndarray:
    if np.iscomplexobj(data):
        return freq_to_time(data, lattice)
    return np.asarray(data, dtype=float)


def as_freq(data: np.ndarray, lattice: FrequencyLattice) -> np.ndarray:
    if np.iscomplexobj(data):
        return np.asarray(data, dtype=complex)
    return time_to_freq(data, lattice)


@dataclass
class ReconParams:
    cutoff_mhz: float | None = None
    alpha: float = 0.0
    lambda_tv: float = 0.0
    iters: int = 50
    tol: float = 1e-4
    lipschitz: float | None = None

    def reg_param(self, algo: str) -> float:
        return {"fbp": self.cutoff_mhz, "plsq": self.alpha, "plstv": self.lambda_tv}[algo]


def default_cutoff(setup: ScanSetup) -> float:
    return setup.f_max_mhz if setup.f_max_mhz is not None else 0.5 * setup.lattice.nyquist_mhz


def reconstruct(algo: str, setup: ScanSetup, geometry: ScanGeometry, data: np.ndarray,
                params: ReconParams, op=None) -> tuple[np.ndarray, SolverResult | None]:
    """Run one algorithm; ``data`` may be time (real) or frequency (complex) samples."""
    lattice = setup.lattice
    if algo == "fbp":
        fc = params.cutoff_mhz if params.cutoff_mhz is not None else default_cutoff(setup)
        vol = fbp_from_voltage(as_time(data, lattice), geometry, setup.grid, setup.consts,
                               lattice, setup.eir, FbpConfig(fc))
        if not np.all(np.isfinite(vol)):
            raise NumericalError("reconstruction produced non-finite values")
        return vol, None
    op = op or setup.operator(geometry)
    u = as_freq(data, lattice)
    if algo == "plsq":
        res = solve_plsq(u, op, PlsQConfig(params.alpha, params.iters, params.tol))
    elif algo == "plstv":
        res = solve_plstv(u, op, PlsTvConfig(params.lambda_tv, params.iters, params.tol,
                                             lipschitz=params.lipschitz))
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    if not np.all(np.isfinite(res.theta)) or not math.isfinite(res.trace[-1][3]):
        raise NumericalError("reconstruction produced non-finite values")
    return res.theta, res
