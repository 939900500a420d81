"""TOML run configuration.

A config may start from a named preset (``preset = "desk"``) and override any
section. Physical keys carry their unit in the name. Example::

    preset = "desk"

    [geometry]
    num_views = 24

    [phantom]
    preset = "six-tube"
    scale = 0.22

    [[phantom.sphere]]
    center_mm = [0.0, 0.0, 0.0]
    radius_mm = 0.5
    value = 1.0

    [noise]
    snr_db = 40.0
    seed = 7
"""
from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .container import read_array
from .errors import ConfigError
from .geometry import ImageGrid, ScanGeometry, uniform_views
from .physics import AcousticConstants, Eir, FrequencyLattice
from .presets import ScanSetup, get_setup, six_tube_phantom
from .simulator import Phantom, Sphere, Tube


@dataclass
class RunConfig:
    setup: ScanSetup
    phantom: Phantom | None
    noise_sigma: float | None = None
    snr_db: float | None = None
    seed: int = 0
    sections: dict = field(default_factory=dict)


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return sec


def _geometry(sec: dict, base: ScanGeometry) -> ScanGeometry:
    known = {"probe_radius_mm", "arc_span_deg", "num_transducers", "transducer_width_mm",
             "transducer_height_mm", "num_views", "view_angles_deg", "active_first", "active_stop"}
    _reject_unknown("geometry", sec, known)
    if "view_angles_deg" in sec:
        views = tuple(math.radians(v) for v in sec["view_angles_deg"])
    elif "num_views" in sec:
        views = uniform_views(int(sec["num_views"]))
    else:
        views = base.view_angles_rad
    ntr = int(sec.get("num_transducers", base.num_transducers))
    if "num_transducers" in sec and not {"active_first", "active_stop"} & set(sec):
        rng = (0, ntr)
    else:
        rng = (int(sec.get("active_first", base.active_transducer_range[0])),
               int(sec.get("active_stop", base.active_transducer_range[1])))
    return ScanGeometry(
        probe_radius_mm=float(sec.get("probe_radius_mm", base.probe_radius_mm)),
        arc_span_deg=float(sec.get("arc_span_deg", base.arc_span_deg)),
        num_transducers=ntr,
        transducer_width_a_mm=float(sec.get("transducer_width_mm", base.transducer_width_a_mm)),
        transducer_height_b_mm=float(sec.get("transducer_height_mm", base.transducer_height_b_mm)),
        view_angles_rad=views,
        active_transducer_range=rng,
    )


def _reject_unknown(name: str, sec: dict, known: set):
    extra = set(sec) - known
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")


def _eir(sec: dict, base: Eir, base_dir: Path) -> Eir:
    _reject_unknown("eir", sec, {"kind", "center_mhz", "fractional_bandwidth", "delay_us", "file"})
    kind = sec.get("kind", base.kind)
    if kind == "identity":
        return Eir.identity()
    if kind == "gaussian":
        return Eir.gaussian(float(sec.get("center_mhz", base.center_mhz)),
                            float(sec.get("fractional_bandwidth", base.fractional_bandwidth)),
                            float(sec.get("delay_us", base.delay_us)))
    if kind == "tabulated":
        if "file" not in sec:
            raise ConfigError("tabulated EIR needs 'file'")
        c = read_array(base_dir / sec["file"])
        return Eir.tabulated(c.data.astype(complex), c.meta.get("df_mhz"))
    raise ConfigError(f"unknown EIR kind {kind!r}")


def _phantom(sec: dict) -> Phantom | None:
    if not sec:
        return None
    prims = []
    name = sec.get("preset")
    if name is not None:
        if name != "six-tube":
            raise ConfigError(f"unknown phantom preset {name!r}")
        prims.extend(six_tube_phantom(float(sec.get("scale", 1.0))).primitives)
    for s in sec.get("sphere", []):
        prims.append(Sphere(tuple(s["center_mm"]), float(s["radius_mm"]), float(s["value"])))
    for t in sec.get("tube", []):
        hl = t.get("half_length_mm")
        prims.append(Tube(tuple(t["point_mm"]), tuple(t["direction"]), float(t["radius_mm"]),
                          float(t["value"]), None if hl is None else float(hl)))
    return Phantom(tuple(prims))


def parse_config(raw: dict, base_dir: Path | str = ".") -> RunConfig:
    """Build a run configuration from an already-parsed TOML/JSON mapping."""
    base_dir = Path(base_dir)
    try:
        preset = raw.get("preset", "desk")
        base = get_setup(preset)
        geom = _geometry(_section(raw, "geometry"), base.geometry)

        gsec = _section(raw, "grid")
        _reject_unknown("grid", gsec, {"dims", "spacing_mm", "center_mm"})
        grid = ImageGrid(tuple(gsec.get("dims", base.grid.dims)),
                         float(gsec.get("spacing_mm", base.grid.spacing_mm)),
                         tuple(gsec.get("center_mm", base.grid.center_mm)))

        asec = _section(raw, "acoustics")
        _reject_unknown("acoustics", asec, {"speed_of_sound_mm_per_us", "grueneisen"})
        consts = AcousticConstants(float(asec.get("speed_of_sound_mm_per_us", base.consts.c0)),
                                   float(asec.get("grueneisen", base.consts.grueneisen)),
                                   grid.voxel_radius_mm)

        ssec = _section(raw, "sampling")
        _reject_unknown("sampling", ssec, {"num_samples", "dt_us", "start_sample", "f_max_mhz"})
        lattice = FrequencyLattice(int(ssec.get("num_samples", base.lattice.num_samples)),
                                   float(ssec.get("dt_us", base.lattice.dt_us)),
                                   int(ssec.get("start_sample", base.lattice.start_sample)))
        f_max = ssec.get("f_max_mhz", base.f_max_mhz)
        f_max = None if f_max is None or f_max == "none" else float(f_max)

        eir = _eir(_section(raw, "eir"), base.eir, base_dir)
        phantom = _phantom(_section(raw, "phantom"))

        nsec = _section(raw, "noise")
        _reject_unknown("noise", nsec, {"sigma", "snr_db", "seed"})
        if "sigma" in nsec and "snr_db" in nsec:
            raise ConfigError("give either noise sigma or snr_db, not both")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return RunConfig(
        setup=ScanSetup(geom, grid, consts, lattice, eir, f_max),
        phantom=phantom,
        noise_sigma=None if "sigma" not in nsec else float(nsec["sigma"]),
        snr_db=None if "snr_db" not in nsec else float(nsec["snr_db"]),
        seed=int(nsec.get("seed", 0)),
        sections=raw,
    )


def load_config(path) -> RunConfig:
    """Read a TOML config, or the ``config`` entry of a JSON run manifest."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix == ".json":
            raw = json.loads(text)["config"]
        else:
            raw = tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return parse_config(raw, path.parent)
