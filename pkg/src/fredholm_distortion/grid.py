"""2D scalar grids with a center-origin coordinate convention.

Pixel ``(m, n)`` (row, column) of a ``height x width`` grid sits at image
coordinates ``u = n - (width - 1) / 2`` and ``v = m - (height - 1) / 2``,
with unit pixel pitch. The central pixel of an odd-sized grid is ``(0, 0)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "FgridError",
    "ScalarField",
    "PointSourceScene",
    "read_fgrid",
    "write_fgrid",
    "block_downsample",
    "sinc",
    "shannon_eval",
    "export_png",
    "export_csv",
]

FGRID_MAGIC = b"FGRID1\n"
# refuse headers that would allocate more than this many samples
MAX_FGRID_SAMPLES = 1 << 31


class FgridError(ValueError):
    """Base class for FGRID parse errors."""


class FgridMagicError(FgridError):
    pass


class FgridHeaderError(FgridError):
    pass


class FgridTruncatedError(FgridError):
    pass


class FgridDimensionError(FgridError):
    pass


@dataclass(frozen=True)
class ScalarField:
    """Immutable real-valued image on a unit-pitch, center-origin grid.

    ``data`` has shape ``(height, width)``; row 0 is the top row.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"ScalarField needs a 2D array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("ScalarField must have at least one pixel")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ScalarField values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, width: int, height: int) -> "ScalarField":
        return cls(np.zeros((height, width)))

    def index_to_coord(self, m, n):
        """Map (row, column) indices to (u, v) coordinates."""
        return (np.asarray(n) - (self.width - 1) / 2.0,
                np.asarray(m) - (self.height - 1) / 2.0)

    def coord_to_index(self, u, v):
        """Map (u, v) coordinates to fractional (row, column) indices."""
        return (np.asarray(v) + (self.height - 1) / 2.0,
                np.asarray(u) + (self.width - 1) / 2.0)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """1D coordinate axes ``(u, v)`` of the pixel centers."""
        return axis_coords(self.width), axis_coords(self.height)

    def sum(self) -> float:
        return float(self.data.sum())

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def axis_coords(size: int) -> np.ndarray:
    return np.arange(size, dtype=np.float64) - (size - 1) / 2.0


@dataclass(frozen=True)
class PointSourceScene:
    """Point sources ``(x, y, flux)`` on a ``(width, height)`` canvas."""

    sources: np.ndarray
    canvas: tuple[int, int]

    def __post_init__(self):
        src = np.array(self.sources, dtype=np.float64, copy=True).reshape(-1, 3)
        w, h = (int(c) for c in self.canvas)
        if w < 1 or h < 1:
            raise ValueError(f"bad canvas {self.canvas}")
        if np.any(src[:, 2] < 0):
            raise ValueError("source flux must be non-negative")
        hw, hh = (w - 1) / 2.0 + 0.5, (h - 1) / 2.0 + 0.5
        outside = (np.abs(src[:, 0]) >= hw) | (np.abs(src[:, 1]) >= hh)
        if np.any(outside):
            raise ValueError(f"sources outside canvas: {src[outside, :2].tolist()}")
        src.setflags(write=False)
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "canvas", (w, h))

    @property
    def x(self) -> np.ndarray:
        return self.sources[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.sources[:, 1]

    @property
    def flux(self) -> np.ndarray:
        return self.sources[:, 2]

    def __len__(self):
        return len(self.sources)

    @classmethod
    def grid(cls, canvas: tuple[int, int], count: int, spacing: float,
             flux: float) -> "PointSourceScene":
        """Regular ``count x count`` array of equal sources centered on (0, 0)."""
        offsets = (np.arange(count) - (count - 1) / 2.0) * spacing
        yy, xx = np.meshgrid(offsets, offsets, indexing="ij")
        src = np.column_stack([xx.ravel(), yy.ravel(), np.full(xx.size, float(flux))])
        return cls(src, canvas)


def write_fgrid(field: ScalarField, path) -> None:
    """Write ``field`` in FGRID format (magic, JSON header, f64le payload)."""
    header = json.dumps(
        {"width": field.width, "height": field.height,
         "dtype": "f64le", "origin": "center"},
        separators=(",", ":"),
    )
    payload = np.ascontiguousarray(field.data, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(FGRID_MAGIC)
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(payload)


def read_fgrid(path) -> ScalarField:
    raw = Path(path).read_bytes()
    if not raw.startswith(FGRID_MAGIC):
        raise FgridMagicError(f"{path}: not an FGRID file")
    rest = raw[len(FGRID_MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise FgridHeaderError(f"{path}: unterminated header")
    try:
        header = json.loads(rest[:nl].decode("utf-8"))
        width, height = header["width"], header["height"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FgridHeaderError(f"{path}: malformed header ({exc})") from None
    if header.get("dtype", "f64le") != "f64le":
        raise FgridHeaderError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    if not (isinstance(width, int) and isinstance(height, int)) or width < 1 or height < 1:
        raise FgridDimensionError(f"{path}: invalid dimensions {width}x{height}")
    if width * height > MAX_FGRID_SAMPLES:
        raise FgridDimensionError(f"{path}: dimensions {width}x{height} too large")
    payload = rest[nl + 1:]
    expected = width * height * 8
    if len(payload) < expected:
        raise FgridTruncatedError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise FgridTruncatedError(f"{path}: {len(payload) - expected} trailing bytes")
    data = np.frombuffer(payload, dtype="<f8").reshape(height, width)
    return ScalarField(data)


def block_downsample(field: ScalarField, factor: int) -> ScalarField:
    """Sum non-overlapping ``factor x factor`` blocks (photon-count conserving)."""
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    h, w = field.shape
    if h % factor or w % factor:
        raise ValueError(f"{w}x{h} grid not divisible by {factor}")
    if factor == 1:
        return field
    blocks = field.data.reshape(h // factor, factor, w // factor, factor)
    return ScalarField(blocks.sum(axis=(1, 3)))


def sinc(t):
    """Normalized sinc, ``sin(pi t) / (pi t)``."""
    return np.sinc(t)


def shannon_eval(field: ScalarField, u: float, v: float,
                 truncation_radius: int | None = 32) -> float:
    """Whittaker-Shannon interpolation of impulse samples at ``(u, v)``.

    Sums ``I_mn sinc(u - u_n) sinc(v - v_m)`` over samples within
    ``truncation_radius`` of the target (per axis). ``None`` uses the whole
    field. Points outside the grid are extrapolated by the same series.
    """
    uu, vv = field.coords()
    if truncation_radius is None:
        cols = slice(None)
        rows = slice(None)
    else:
        r = int(truncation_radius)
        if r < 1:
            raise ValueError("truncation_radius must be >= 1")
        m0, n0 = field.coord_to_index(u, v)
        cols = slice(max(int(np.floor(n0)) - r + 1, 0), max(int(np.floor(n0)) + r + 1, 0))
        rows = slice(max(int(np.floor(m0)) - r + 1, 0), max(int(np.floor(m0)) + r + 1, 0))
    wu = np.sinc(u - uu[cols])
    wv = np.sinc(v - vv[rows])
    return float(wv @ field.data[rows, cols] @ wu)


def export_png(field: ScalarField, path) -> None:
    """8-bit grayscale preview, min-max normalized. Presentation only."""
    from PIL import Image

    data = field.data
    lo, hi = float(data.min()), float(data.max())
    scaled = np.zeros(data.shape) if hi <= lo else (data - lo) / (hi - lo)
    Image.fromarray(np.round(scaled * 255).astype(np.uint8), mode="L").save(path)


def export_csv(field: ScalarField, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in field.data:
            writer.writerow([repr(float(x)) for x in row])
