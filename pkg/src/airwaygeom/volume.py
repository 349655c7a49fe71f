"""3D CT volumes, their label grids, and the raw-plus-JSON-header file format.

Arrays are stored with shape ``(nz, ny, nx)`` so that a C-order ravel is
x-fastest, matching the on-disk layout.  Voxel coordinates elsewhere in the
package are always given as ``(x, y, z)`` and indexed as ``arr[z, y, x]``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_AIR_THRESHOLD = -500.0

_DTYPES = {"i16": np.dtype("<i2"), "u8": np.dtype("u1")}


class Label(enum.IntEnum):
    UNLABELED = 0
    LUMEN = 1
    PARENCHYMA = 2
    PLUG = 3
    WALL = 4


class VolumeFormatError(ValueError):
    """Raised for malformed headers or raw payloads."""


@dataclass
class Volume:
    """Scalar HU grid plus a parallel label grid.

    Parameters
    ----------
    intensities : ndarray of int16, shape (nz, ny, nx)
    spacing_mm : (sx, sy, sz) millimetres per voxel
    labels : ndarray of uint8, same shape; defaults to all ``Label.UNLABELED``
    """

    intensities: np.ndarray
    spacing_mm: tuple[float, float, float]
    labels: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.intensities = np.ascontiguousarray(self.intensities, dtype=np.int16)
        if self.intensities.ndim != 3 or min(self.intensities.shape) < 1:
            raise VolumeFormatError(f"intensities must be a non-empty 3D array, got shape {self.intensities.shape}")
        spacing = tuple(float(s) for s in self.spacing_mm)
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise VolumeFormatError(f"spacing must be three positive numbers, got {self.spacing_mm}")
        self.spacing_mm = spacing
        if self.labels is None:
            self.labels = np.zeros(self.intensities.shape, dtype=np.uint8)
        else:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
            if self.labels.shape != self.intensities.shape:
                raise VolumeFormatError("labels and intensities differ in shape")
            if self.labels.size and self.labels.max() > max(Label):
                raise VolumeFormatError("label grid contains values outside the label enumeration")

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.intensities.shape
        return nx, ny, nz

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.intensities.shape

    def contains(self, coord) -> bool:
        x, y, z = coord
        nx, ny, nz = self.dims
        return 0 <= x < nx and 0 <= y < ny and 0 <= z < nz

    def copy(self) -> "Volume":
        return Volume(self.intensities.copy(), self.spacing_mm, self.labels.copy())

    def count(self, label: Label) -> int:
        return int(np.count_nonzero(self.labels == label))


def _write_grid(arr: np.ndarray, dtype_code: str, spacing, header_path: Path) -> None:
    header_path = Path(header_path)
    raw_path = header_path.with_suffix(".raw")
    nz, ny, nx = arr.shape
    header = {
        "dims": [nx, ny, nz],
        "spacing_mm": list(spacing),
        "dtype": dtype_code,
        "order": "x-fastest",
        "data_file": raw_path.name,
    }
    raw_path.write_bytes(np.ascontiguousarray(arr, dtype=_DTYPES[dtype_code]).tobytes(order="C"))
    header_path.write_text(json.dumps(header, indent=2) + "\n")


def _read_grid(header_path: Path, expect_dtype: str):
    header_path = Path(header_path)
    if not header_path.is_file():
        raise FileNotFoundError(f"missing header file: {header_path}")
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"{header_path}: not valid JSON ({exc})") from exc
    for key in ("dims", "spacing_mm", "dtype", "order", "data_file"):
        if key not in header:
            raise VolumeFormatError(f"{header_path}: header lacks '{key}'")
    dims = [int(d) for d in header["dims"]]
    spacing = [float(s) for s in header["spacing_mm"]]
    if len(dims) != 3 or min(dims) < 1:
        raise VolumeFormatError(f"{header_path}: dims must be three positive integers")
    if len(spacing) != 3 or min(spacing) <= 0:
        raise VolumeFormatError(f"{header_path}: non-positive spacing {spacing}")
    if header["dtype"] != expect_dtype:
        raise VolumeFormatError(f"{header_path}: expected dtype {expect_dtype}, got {header['dtype']}")
    if header["order"] != "x-fastest":
        raise VolumeFormatError(f"{header_path}: unsupported order {header['order']}")
    raw_path = header_path.parent / header["data_file"]
    if not raw_path.is_file():
        raise FileNotFoundError(f"missing raw data file: {raw_path}")
    dtype = _DTYPES[expect_dtype]
    payload = raw_path.read_bytes()
    nx, ny, nz = dims
    expected = nx * ny * nz * dtype.itemsize
    if len(payload) != expected:
        raise VolumeFormatError(
            f"size mismatch: {raw_path} holds {len(payload)} bytes, dims {dims} need {expected}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(nz, ny, nx)
    return arr, tuple(spacing)


def labels_header_path(header_path) -> Path:
    header_path = Path(header_path)
    return header_path.with_name(header_path.stem + ".labels.json")


def save_volume(volume: Volume, header_path, with_labels: bool = True) -> Path:
    """Write ``<stem>.json``/``<stem>.raw`` and, optionally, the label pair
    ``<stem>.labels.json``/``<stem>.labels.raw``."""
    header_path = Path(header_path)
    _write_grid(volume.intensities, "i16", volume.spacing_mm, header_path)
    if with_labels:
        _write_grid(volume.labels, "u8", volume.spacing_mm, labels_header_path(header_path))
    return header_path


def load_volume(header_path, labels_path=None) -> Volume:
    """Read a volume.  Labels are all unlabeled unless ``labels_path`` names a
    u8 label header, or ``labels_path=True`` to use the sibling label file."""
    intensities, spacing = _read_grid(header_path, "i16")
    labels = None
    if labels_path is True:
        labels_path = labels_header_path(header_path)
    if labels_path:
        labels, lspacing = _read_grid(labels_path, "u8")
        if labels.shape != intensities.shape:
            raise VolumeFormatError("label grid dims differ from intensity dims")
    return Volume(intensities.copy(), spacing, None if labels is None else labels.copy())


def air_mask(volume: Volume, hu_threshold: float = DEFAULT_AIR_THRESHOLD) -> np.ndarray:
    """Boolean grid, true where intensity is strictly below ``hu_threshold``."""
    return volume.intensities < hu_threshold


def _slice(arr: np.ndarray, axis: str, index: int) -> np.ndarray:
    if axis == "z":
        return arr[index, :, :]
    if axis == "y":
        return arr[:, index, :]
    if axis == "x":
        return arr[:, :, index]
    raise ValueError(f"axis must be one of x, y, z; got {axis!r}")


def window_to_u8(values: np.ndarray, level: float = -500.0, width: float = 1500.0, top: int = 255) -> np.ndarray:
    lo = level - width / 2.0
    scaled = (values.astype(np.float64) - lo) / width * 255.0
    return np.clip(np.rint(scaled), 0, top).astype(np.uint8)


def slice_image(volume: Volume, axis: str, index: int, overlay_labels: bool = False,
                level: float = -500.0, width: float = 1500.0) -> np.ndarray:
    """2D uint8 image of one slice.

    The image is ``ny x nx`` for a z-slice, ``nz x nx`` for a y-slice and
    ``nz x ny`` for an x-slice.  With ``overlay_labels`` the grey ramp is capped
    at 254 so that exactly the lumen voxels are white (255).
    """
    nx, ny, nz = volume.dims
    size = {"x": nx, "y": ny, "z": nz}
    if axis not in size:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}")
    if not 0 <= index < size[axis]:
        raise IndexError(f"slice index {index} out of range for axis {axis} (size {size[axis]})")
    img = window_to_u8(_slice(volume.intensities, axis, index), level, width,
                       top=254 if overlay_labels else 255)
    if overlay_labels:
        img[_slice(volume.labels, axis, index) == Label.LUMEN] = 255
    return img


def write_pgm(image: np.ndarray, path) -> Path:
    path = Path(path)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = []
    pos = 0
    # header is four whitespace-separated tokens: magic, width, height, maxval
    while len(parts) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        parts.append(data[start:pos].decode("ascii"))
    pos += 1
    if parts[0] != "P5" or parts[3] != "255":
        raise VolumeFormatError(f"{path}: not an 8-bit binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)


def export_slice(volume: Volume, axis: str, index: int, path, overlay_labels: bool = False,
                 level: float = -500.0, width: float = 1500.0) -> Path:
    return write_pgm(slice_image(volume, axis, index, overlay_labels, level, width), path)
