"""8-bit display mapping, maximum intensity projections and PGM files."""
from __future__ import annotations

import numpy as np

AXES = {"x": 0, "y": 1, "z": 2}


def window_to_uint8(values, low: float, up: float) -> np.ndarray:
    """Clamp to ``[low, up]`` and map linearly onto 0..255, rounding half up."""
    if not up > low:
        raise ValueError(f"degenerate display window [{low}, {up}]")
    v = np.clip(np.asarray(values, dtype=float), low, up)
    scaled = 255.0 * (v - low) / (up - low)
    # scaled >= 0, so floor(x + 0.5) rounds half away from zero
    return np.floor(scaled + 0.5).astype(np.uint8)


def mip(volume, axis) -> np.ndarray:
    """Maximum along ``axis`` (0/1/2 or 'x'/'y'/'z')."""
    volume = np.asarray(volume, dtype=float)
    if volume.size == 0:
        raise ValueError("empty volume")
    if volume.ndim != 3:
        raise ValueError("expected a 3D volume")
    ax = AXES[axis] if isinstance(axis, str) else int(axis)
    if ax not in (0, 1, 2):
        raise ValueError(f"invalid axis {axis!r}")
    return volume.max(axis=ax)


def mip_render(volume, axis, window: tuple[float, float] | None = None) -> np.ndarray:
    """MIP mapped to 8 bits, by default with the volume's min/max as window.

    A constant volume maps to a constant (all-zero) image.
    """
    proj = mip(volume, axis)
    if window is None:
        lo, hi = float(np.min(volume)), float(np.max(volume))
        if hi <= lo:
            return np.zeros(proj.shape, dtype=np.uint8)
        window = (lo, hi)
    return window_to_uint8(proj, *window)


def write_pgm(path, image):
    img = np.asarray(image)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("PGM output needs a 2D uint8 image")
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pgm(path) -> np.ndarray:
    raw = open(path, "rb").read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    if tokens[0] != "P5" or tokens[3] != "255":
        raise ValueError("only 8-bit binary PGM is supported")
    cols, rows = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(raw[pos + 1:pos + 1 + rows * cols], dtype=np.uint8)
    return data.reshape(rows, cols).copy()
