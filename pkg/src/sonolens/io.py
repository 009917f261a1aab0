"""File formats: raw voxel arrays with JSON sidecar headers, CSV, PGM, STL.

Raw files are little-endian, C-order. A medium is stored as its three
float32 property volumes concatenated in header field order; a complex
field is stored as interleaved (re, im) float32 pairs; CT volumes are
int16. Every header carries a schema_version and, when produced by the
CLI, the hash of the creating configuration.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grid import GridSpec
from .medium import AcousticMedium
from .solver import ComplexField

SCHEMA_VERSION = 1


def _header(grid: GridSpec, fields, dtype: str, extra: dict | None = None) -> dict:
    h = {
        "schema_version": SCHEMA_VERSION,
        "dims": [grid.nx, grid.ny, grid.nz],
        "spacing_m": [grid.dx, grid.dy, grid.dz],
        "frequency_hz": grid.frequency,
        "c_ref": grid.c_ref,
        "fields": list(fields),
        "dtype": dtype,
    }
    if extra:
        h.update(extra)
    return h


def _write(prefix, header: dict, payload: np.ndarray) -> None:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(prefix.with_suffix(".json"), "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    payload.tofile(prefix.with_suffix(".raw"))


def _read(prefix) -> tuple[dict, np.ndarray]:
    prefix = Path(prefix)
    with open(prefix.with_suffix(".json")) as fh:
        header = json.load(fh)
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    data = np.fromfile(prefix.with_suffix(".raw"), dtype=dtype)
    return header, data


def _grid_from_header(header: dict) -> GridSpec:
    nx, ny, nz = header["dims"]
    dx, dy, dz = header["spacing_m"]
    return GridSpec(nx, ny, nz, dx, dy, dz, header["frequency_hz"],
                    header.get("c_ref", 1500.0))


def save_medium(prefix, medium: AcousticMedium, extra: dict | None = None) -> None:
    grid = medium.grid
    header = _header(grid, ["c", "rho", "att", "att_power"], "float32", extra)
    payload = np.concatenate(
        [medium.c, medium.rho, medium.att, medium.att_power], axis=None
    ).astype("<f4")
    _write(prefix, header, payload)


def load_medium(prefix) -> AcousticMedium:
    header, data = _read(prefix)
    grid = _grid_from_header(header)
    n = grid.nx * grid.ny * grid.nz
    fields = header["fields"]
    if len(data) != n * len(fields):
        raise ValueError("raw payload size does not match the header")
    arrays = {
        name: data[i * n : (i + 1) * n].astype(np.float64).reshape(grid.shape)
        for i, name in enumerate(fields)
    }
    if "att_power" not in arrays:
        arrays["att_power"] = np.ones(grid.shape)
    return AcousticMedium(grid, arrays["c"], arrays["rho"], arrays["att"],
                          arrays["att_power"])


def save_hu_volume(prefix, grid: GridSpec, hu: np.ndarray) -> None:
    header = _header(grid, ["hu"], "int16")
    _write(prefix, header, np.asarray(hu).astype("<i2"))


def load_hu_volume(prefix) -> tuple[GridSpec, np.ndarray]:
    header, data = _read(prefix)
    grid = _grid_from_header(header)
    return grid, data.astype(np.int64).reshape(grid.shape)


def save_field(prefix, field: ComplexField, extra: dict | None = None) -> None:
    header = _header(field.grid, ["pressure"], "complex64_interleaved", extra)
    inter = np.empty(field.values.size * 2, dtype="<f4")
    inter[0::2] = field.values.real.ravel()
    inter[1::2] = field.values.imag.ravel()
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(prefix.with_suffix(".json"), "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    inter.tofile(prefix.with_suffix(".raw"))


def load_field(prefix) -> ComplexField:
    prefix = Path(prefix)
    with open(prefix.with_suffix(".json")) as fh:
        header = json.load(fh)
    grid = _grid_from_header(header)
    inter = np.fromfile(prefix.with_suffix(".raw"), dtype="<f4")
    values = (inter[0::2] + 1j * inter[1::2]).astype(np.complex128)
    return ComplexField(values.reshape(grid.shape), grid)


def save_plane(prefix, plane: np.ndarray, grid: GridSpec,
               extra: dict | None = None) -> None:
    """2D complex plane (e.g. a measured hydrophone scan)."""
    header = _header(grid, ["plane"], "complex64_interleaved", extra)
    header["dims"] = [grid.nx, grid.ny]
    inter = np.empty(plane.size * 2, dtype="<f4")
    inter[0::2] = np.real(plane).ravel()
    inter[1::2] = np.imag(plane).ravel()
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    with open(prefix.with_suffix(".json"), "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    inter.tofile(prefix.with_suffix(".raw"))


def load_plane(prefix):
    prefix = Path(prefix)
    with open(prefix.with_suffix(".json")) as fh:
        header = json.load(fh)
    nx, ny = header["dims"]
    inter = np.fromfile(prefix.with_suffix(".raw"), dtype="<f4")
    if inter.size != nx * ny * 2:
        raise ValueError("malformed plane file: payload size mismatch")
    plane = (inter[0::2] + 1j * inter[1::2]).astype(np.complex128)
    return header, plane.reshape(nx, ny)


def plane_to_csv(path, plane_2d: np.ndarray) -> None:
    np.savetxt(path, np.asarray(plane_2d), delimiter=",")


def thickness_to_csv(path, thickness_vox: np.ndarray, dz: float) -> None:
    """Thickness map exported in meters."""
    np.savetxt(path, np.asarray(thickness_vox) * dz, delimiter=",")


def thickness_to_pgm(path, thickness_vox: np.ndarray, v_min: float,
                     v_max: float) -> None:
    """16-bit grayscale PGM scaled so [v_min, v_max] spans [0, 65535]."""
    t = np.clip((np.asarray(thickness_vox) - v_min) / (v_max - v_min), 0.0, 1.0)
    img = np.round(t * 65535).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n65535\n".encode())
        fh.write(img.tobytes())


def thickness_to_stl(path, thickness_vox: np.ndarray, dx: float, dz: float,
                     min_thickness_vox: float = 0.0) -> None:
    """Binary STL of the lens as a heightmap of column prisms.

    Each lateral cell becomes a rectangular prism of height thickness*dz;
    columns at or below min_thickness_vox are skipped.
    """
    t = np.asarray(thickness_vox)
    nx, ny = t.shape
    tris = []

    def quad(a, b, c, d):
        tris.append((a, b, c))
        tris.append((a, c, d))

    for i in range(nx):
        for j in range(ny):
            h = t[i, j] * dz
            if t[i, j] <= min_thickness_vox or h <= 0:
                continue
            x0, x1 = i * dx, (i + 1) * dx
            y0, y1 = j * dx, (j + 1) * dx
            # bottom (z=0), top (z=h), four walls
            quad((x0, y0, 0), (x0, y1, 0), (x1, y1, 0), (x1, y0, 0))
            quad((x0, y0, h), (x1, y0, h), (x1, y1, h), (x0, y1, h))
            quad((x0, y0, 0), (x1, y0, 0), (x1, y0, h), (x0, y0, h))
            quad((x1, y0, 0), (x1, y1, 0), (x1, y1, h), (x1, y0, h))
            quad((x1, y1, 0), (x0, y1, 0), (x0, y1, h), (x1, y1, h))
            quad((x0, y1, 0), (x0, y0, 0), (x0, y0, h), (x0, y1, h))

    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", len(tris)))
        for a, b, c in tris:
            u = np.subtract(b, a)
            v = np.subtract(c, a)
            n = np.cross(u, v)
            norm = np.linalg.norm(n)
            n = n / norm if norm > 0 else n
            fh.write(struct.pack("<3f", *n))
            for p in (a, b, c):
                fh.write(struct.pack("<3f", *p))
            fh.write(b"\0\0")
