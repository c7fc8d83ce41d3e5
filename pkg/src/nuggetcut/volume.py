"""Scalar volumes, binary masks, MetaImage I/O and intensity sampling.

Geometry convention: a volume is a regular grid of ``dims = (nx, ny, nz)``
voxels with physical ``spacing`` (mm) per axis and ``origin`` at the world
position of the center of voxel (0, 0, 0).  Voxel data is held as an
``(nx, ny, nz)`` array whose on-disk serialization is x-fastest
(Fortran order), matching the MetaImage raw layout.

The file format is a strict MetaImage subset: a text header with the keys
ObjectType, NDims, DimSize, ElementSpacing, Offset, ElementType,
ElementByteOrderMSB and ElementDataFile, followed by (or pointing at)
little-endian raw data.  MET_SHORT is used for volumes, MET_UCHAR for
masks.  Unknown header keys are ignored with a warning.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateRegionError,
    MetaImageParseError,
    OutOfVolumeError,
    UnsupportedFormatError,
    VolumeSizeError,
)

_ELEMENT_TYPES = {"MET_SHORT": np.int16, "MET_UCHAR": np.uint8}

_HEADER_KEYS = (
    "ObjectType",
    "NDims",
    "DimSize",
    "ElementSpacing",
    "Offset",
    "ElementType",
    "ElementByteOrderMSB",
    "ElementDataFile",
)


def _as_triple(values, kind=float):
    t = tuple(kind(v) for v in values)
    if len(t) != 3:
        raise ValueError(f"expected 3 components, got {len(t)}")
    return t


@dataclass(frozen=True)
class Volume:
    """Immutable 3D scalar grid with anisotropic physical spacing."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = _as_triple(self.dims, int)
        spacing = _as_triple(self.spacing, float)
        origin = _as_triple(self.origin, float)
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be >= 1, got {dims}")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be > 0, got {spacing}")
        data = np.asarray(self.data)
        if data.size != dims[0] * dims[1] * dims[2]:
            raise VolumeSizeError(
                f"data has {data.size} values, dims {dims} require "
                f"{dims[0] * dims[1] * dims[2]}"
            )
        data = np.ascontiguousarray(data.reshape(dims, order="F") if data.ndim == 1
                                    else data).astype(self._dtype(), copy=False)
        data.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "data", data)

    @staticmethod
    def _dtype():
        return np.int16

    @property
    def voxel_volume_mm3(self) -> float:
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Voxel-center hull: (low corner, high corner) in world mm."""
        lo = np.asarray(self.origin, dtype=float)
        hi = lo + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)
        return lo, hi

    def contains(self, point) -> bool:
        lo, hi = self.bounds
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= lo) and np.all(p <= hi))

    def world_to_voxel(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return (p - np.asarray(self.origin)) / np.asarray(self.spacing)

    def voxel_to_world(self, index) -> np.ndarray:
        i = np.asarray(index, dtype=float)
        return np.asarray(self.origin) + i * np.asarray(self.spacing)


@dataclass(frozen=True)
class BinaryMask:
    """Boolean inclusion grid sharing the Volume geometry convention."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = _as_triple(self.dims, int)
        spacing = _as_triple(self.spacing, float)
        origin = _as_triple(self.origin, float)
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be >= 1, got {dims}")
        if any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be > 0, got {spacing}")
        bits = np.asarray(self.bits)
        if bits.size != dims[0] * dims[1] * dims[2]:
            raise VolumeSizeError(
                f"mask has {bits.size} values, dims {dims} require "
                f"{dims[0] * dims[1] * dims[2]}"
            )
        bits = np.ascontiguousarray(
            bits.reshape(dims, order="F") if bits.ndim == 1 else bits
        ).astype(bool, copy=False)
        bits.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "bits", bits)

    @property
    def voxel_volume_mm3(self) -> float:
        return self.spacing[0] * self.spacing[1] * self.spacing[2]

    @property
    def voxel_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def physical_volume_mm3(self) -> float:
        return self.voxel_count * self.voxel_volume_mm3

    def same_geometry(self, other) -> bool:
        return (
            self.dims == tuple(other.dims)
            and self.spacing == tuple(other.spacing)
            and self.origin == tuple(other.origin)
        )


@dataclass(frozen=True)
class RegionStats:
    """Mean / sample standard deviation over a voxel neighborhood."""

    mean: float
    stddev: float
    voxel_count: int


# ---------------------------------------------------------------------------
# MetaImage subset I/O
# ---------------------------------------------------------------------------

def _parse_header(fp, path):
    fields = {}
    order = []
    while True:
        line = fp.readline()
        if not line:
            raise MetaImageParseError(
                f"{path}: header ended before ElementDataFile"
            )
        try:
            text = line.decode("ascii")
        except UnicodeDecodeError as exc:
            raise MetaImageParseError(f"{path}: non-ASCII header line") from exc
        if "=" not in text:
            raise MetaImageParseError(
                f"{path}: header line without '=': {text.strip()!r}"
            )
        key, _, value = text.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _HEADER_KEYS:
            warnings.warn(f"{path}: ignoring unknown MetaImage key {key!r}")
            continue
        fields[key] = value
        order.append(key)
        if key == "ElementDataFile":
            break
    return fields


def _require(fields, key, path):
    if key not in fields:
        raise MetaImageParseError(f"{path}: missing required key {key!r}")
    return fields[key]


def _load_meta(path, expected_element):
    try:
        with open(path, "rb") as fp:
            return _load_meta_fp(fp, path, expected_element,
                                 os.path.dirname(path) or ".")
    except FileNotFoundError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def _load_meta_fp(fp, path, expected_element, directory):
    fields = _parse_header(fp, path)
    if _require(fields, "ObjectType", path) != "Image":
        raise MetaImageParseError(
            f"{path}: ObjectType must be Image, got {fields['ObjectType']!r}"
        )
    if _require(fields, "NDims", path) != "3":
        raise MetaImageParseError(
            f"{path}: NDims must be 3, got {fields['NDims']!r}"
        )
    try:
        dims = _as_triple(_require(fields, "DimSize", path).split(), int)
    except ValueError as exc:
        raise MetaImageParseError(f"{path}: bad DimSize: {exc}") from exc
    if any(d < 1 for d in dims):
        raise MetaImageParseError(f"{path}: DimSize components must be >= 1")
    try:
        spacing = _as_triple(
            _require(fields, "ElementSpacing", path).split(), float
        )
    except ValueError as exc:
        raise MetaImageParseError(f"{path}: bad ElementSpacing: {exc}") from exc
    if any(s <= 0 for s in spacing):
        raise MetaImageParseError(
            f"{path}: ElementSpacing components must be > 0"
        )
    try:
        origin = _as_triple(_require(fields, "Offset", path).split(), float)
    except ValueError as exc:
        raise MetaImageParseError(f"{path}: bad Offset: {exc}") from exc
    byte_order = fields.get("ElementByteOrderMSB", "False")
    if byte_order != "False":
        raise UnsupportedFormatError(
            f"{path}: only ElementByteOrderMSB=False is supported"
        )
    element = _require(fields, "ElementType", path)
    if element not in _ELEMENT_TYPES:
        raise UnsupportedFormatError(
            f"{path}: unsupported ElementType {element!r}"
        )
    if element != expected_element:
        raise UnsupportedFormatError(
            f"{path}: expected {expected_element}, file holds {element}"
        )
    datafile = _require(fields, "ElementDataFile", path)
    dtype = np.dtype(_ELEMENT_TYPES[element]).newbyteorder("<")
    count = dims[0] * dims[1] * dims[2]
    if datafile == "LOCAL":
        raw = fp.read()
    else:
        if directory is None:
            raise MetaImageParseError(
                f"{path}: ElementDataFile must be LOCAL for in-memory data"
            )
        with open(os.path.join(directory, datafile), "rb") as rf:
            raw = rf.read()
    expected_bytes = count * dtype.itemsize
    if len(raw) != expected_bytes:
        raise VolumeSizeError(
            f"{path}: raw data holds {len(raw)} bytes, DimSize {dims} "
            f"requires {expected_bytes}"
        )
    flat = np.frombuffer(raw, dtype=dtype)
    return dims, spacing, origin, flat


def _format_header(dims, spacing, origin, element, datafile):
    def fmt(v):
        return f"{v:.17g}" if isinstance(v, float) else str(v)

    lines = [
        "ObjectType = Image",
        "NDims = 3",
        "DimSize = " + " ".join(str(d) for d in dims),
        "ElementSpacing = " + " ".join(fmt(float(s)) for s in spacing),
        "Offset = " + " ".join(fmt(float(o)) for o in origin),
        "ElementType = " + element,
        "ElementByteOrderMSB = False",
        "ElementDataFile = " + datafile,
    ]
    return ("\n".join(lines) + "\n").encode("ascii")


def load_volume(path) -> Volume:
    """Read a MET_SHORT MetaImage file from ``path``."""
    dims, spacing, origin, flat = _load_meta(str(path), "MET_SHORT")
    return Volume(dims, spacing, origin, flat)


def save_volume(volume: Volume, path, raw_path: str | None = None) -> None:
    """Write ``volume`` to ``path``; data attached (LOCAL) unless
    ``raw_path`` names a sibling raw file."""
    _save_meta(
        str(path),
        volume.dims,
        volume.spacing,
        volume.origin,
        "MET_SHORT",
        np.asarray(volume.data, dtype="<i2"),
        raw_path,
    )


def load_mask(path) -> BinaryMask:
    """Read a MET_UCHAR MetaImage file from ``path`` as a binary mask."""
    dims, spacing, origin, flat = _load_meta(str(path), "MET_UCHAR")
    return BinaryMask(dims, spacing, origin, flat != 0)


def save_mask(mask: BinaryMask, path, raw_path: str | None = None) -> None:
    _save_meta(
        str(path),
        mask.dims,
        mask.spacing,
        mask.origin,
        "MET_UCHAR",
        mask.bits.astype("<u1"),
        raw_path,
    )


def _save_meta(path, dims, spacing, origin, element, array, raw_path):
    raw = array.tobytes(order="F")
    datafile = "LOCAL" if raw_path is None else raw_path
    header = _format_header(dims, spacing, origin, element, datafile)
    try:
        with open(path, "wb") as fp:
            fp.write(header)
            if raw_path is None:
                fp.write(raw)
        if raw_path is not None:
            with open(os.path.join(os.path.dirname(path) or ".", raw_path),
                      "wb") as rf:
                rf.write(raw)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def volume_bytes(volume: Volume) -> bytes:
    """Serialized MetaImage (LOCAL) representation, e.g. for HTTP upload."""
    header = _format_header(
        volume.dims, volume.spacing, volume.origin, "MET_SHORT", "LOCAL"
    )
    return header + np.asarray(volume.data, dtype="<i2").tobytes(order="F")


def mask_bytes(mask: BinaryMask) -> bytes:
    header = _format_header(
        mask.dims, mask.spacing, mask.origin, "MET_UCHAR", "LOCAL"
    )
    return header + mask.bits.astype("<u1").tobytes(order="F")


def volume_from_bytes(raw: bytes) -> Volume:
    import io

    dims, spacing, origin, flat = _load_meta_fp(
        io.BytesIO(raw), "<bytes>", "MET_SHORT", None
    )
    return Volume(dims, spacing, origin, flat)


def mask_from_bytes(raw: bytes) -> BinaryMask:
    import io

    dims, spacing, origin, flat = _load_meta_fp(
        io.BytesIO(raw), "<bytes>", "MET_UCHAR", None
    )
    return BinaryMask(dims, spacing, origin, flat != 0)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def trilinear_with_mask(volume: Volume, points) -> tuple[np.ndarray, np.ndarray]:
    """Trilinear interpolation for an (N, 3) array of world points.

    Returns ``(values, inside)``; values of points outside the voxel-center
    hull are 0 and flagged False.  Does not raise.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = volume.world_to_voxel(pts)
    dims = np.asarray(volume.dims)
    inside = np.all((c >= 0.0) & (c <= dims - 1), axis=1)
    cc = np.clip(c, 0.0, None)
    base = np.minimum(np.floor(cc).astype(np.int64), np.maximum(dims - 2, 0))
    base = np.clip(base, 0, np.maximum(dims - 2, 0))
    frac = cc - base
    frac = np.clip(frac, 0.0, 1.0)
    # Axes with a single voxel have no second sample point.
    step = (dims > 1).astype(np.int64)
    data = volume.data
    out = np.zeros(len(pts), dtype=float)
    for dx in (0, 1):
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        ix = base[:, 0] + dx * step[0]
        for dy in (0, 1):
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            iy = base[:, 1] + dy * step[1]
            for dz in (0, 1):
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                iz = base[:, 2] + dz * step[2]
                out += wx * wy * wz * data[ix, iy, iz]
    out[~inside] = 0.0
    return out, inside


def sample_trilinear(volume: Volume, point):
    """Trilinear interpolation at one world point or an (N, 3) array.

    Raises OutOfVolumeError if any point falls outside the voxel-center
    hull; the segmenter uses :func:`trilinear_with_mask` to treat such
    nodes as background-forced instead.
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    values, inside = trilinear_with_mask(volume, pts)
    if not np.all(inside):
        bad = np.atleast_2d(pts)[~inside][0]
        raise OutOfVolumeError(
            f"point {tuple(bad)} outside voxel-center hull {volume.bounds}"
        )
    return float(values[0]) if single else values


def region_stats(volume: Volume, center, edge_mm: float = 10.0) -> RegionStats:
    """Mean / sample stddev over voxel centers inside the axis-aligned cube
    of side ``edge_mm`` centered at ``center``, clipped to the volume.

    The 10 mm default approximates a one-cubic-centimeter neighborhood.
    """
    if edge_mm <= 0:
        raise ValueError(f"edge_mm must be > 0, got {edge_mm}")
    c = np.asarray(center, dtype=float)
    if not volume.contains(c):
        raise OutOfVolumeError(
            f"region center {tuple(c)} outside volume bounds {volume.bounds}"
        )
    half = edge_mm / 2.0
    spacing = np.asarray(volume.spacing)
    origin = np.asarray(volume.origin)
    dims = np.asarray(volume.dims)
    lo = np.ceil((c - half - origin) / spacing).astype(np.int64)
    hi = np.floor((c + half - origin) / spacing).astype(np.int64)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, dims - 1)
    if np.any(hi < lo):
        raise DegenerateRegionError(
            f"cube of side {edge_mm} mm at {tuple(c)} contains no voxel centers"
        )
    block = volume.data[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1]
    values = block.astype(np.float64)
    count = values.size
    mean = float(values.mean())
    stddev = float(values.std(ddof=1)) if count > 1 else 0.0
    return RegionStats(mean=mean, stddev=stddev, voxel_count=int(count))
