"""Synthetic ground-truthed test volumes.

A phantom is a dark ellipsoidal lesion in brighter surroundings, with an
optional bright rim shell and an optional very bright needle (a shaft
entering from the volume edge plus straight tines fanning out from the
lesion center).  Noise is generated by a fixed, documented algorithm
(counter-based splitmix64 feeding a Box-Muller transform) so that a spec
with the same seed reproduces the same volume bit-exactly on any platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import PhantomSpecError
from .volume import BinaryMask, Volume

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

TINE_CONE_ANGLE_DEG = 45.0


@dataclass(frozen=True)
class NeedleSpec:
    """Bright needle: shaft from the volume edge to the lesion center plus
    straight tines fanning from the center."""

    direction: tuple[float, float, float]
    shaft_radius_mm: float = 0.6
    tine_count: int = 0
    tine_length_mm: float = 0.0
    value: int = 1500

    def unit_direction(self) -> np.ndarray:
        d = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(d)
        if norm == 0:
            raise PhantomSpecError("needle direction must be nonzero")
        return d / norm


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    lesion_center: tuple[float, float, float]
    lesion_radii: tuple[float, float, float]
    lesion_value: int = 40
    background_value: int = 110
    rim_thickness_mm: float = 0.0
    rim_value: int = 180
    needle: NeedleSpec | None = None
    noise_sigma: float = 0.0
    rng_seed: int = 0
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def validate(self) -> None:
        if any(d < 1 for d in self.dims):
            raise PhantomSpecError(f"dims must be >= 1, got {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise PhantomSpecError(f"spacing must be > 0, got {self.spacing}")
        if any(r < 0 for r in self.lesion_radii):
            raise PhantomSpecError(
                f"lesion radii must be >= 0, got {self.lesion_radii}"
            )
        if self.rim_thickness_mm < 0:
            raise PhantomSpecError("rim thickness must be >= 0")
        if self.noise_sigma < 0:
            raise PhantomSpecError("noise sigma must be >= 0")
        if self.needle is not None and self.needle.tine_count < 0:
            raise PhantomSpecError("tine count must be >= 0")
        lo = np.asarray(self.origin, dtype=float)
        hi = lo + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)
        c = np.asarray(self.lesion_center, dtype=float)
        extent = np.asarray(self.lesion_radii, dtype=float) + self.rim_thickness_mm
        if np.any(c - extent < lo) or np.any(c + extent > hi):
            raise PhantomSpecError(
                "lesion plus rim must lie entirely inside the volume: "
                f"center {tuple(c)}, extent {tuple(extent)}, bounds "
                f"{tuple(lo)}..{tuple(hi)}"
            )

    def to_json(self) -> str:
        d = {
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "origin": list(self.origin),
            "lesion_center": list(self.lesion_center),
            "lesion_radii": list(self.lesion_radii),
            "lesion_value": self.lesion_value,
            "background_value": self.background_value,
            "rim_thickness_mm": self.rim_thickness_mm,
            "rim_value": self.rim_value,
            "noise_sigma": self.noise_sigma,
            "rng_seed": self.rng_seed,
        }
        if self.needle is not None:
            d["needle"] = {
                "direction": list(self.needle.direction),
                "shaft_radius_mm": self.needle.shaft_radius_mm,
                "tine_count": self.needle.tine_count,
                "tine_length_mm": self.needle.tine_length_mm,
                "value": self.needle.value,
            }
        return json.dumps(d, indent=2)

    @staticmethod
    def from_json(text: str) -> "PhantomSpec":
        d = json.loads(text)
        needle = None
        if d.get("needle") is not None:
            nd = d["needle"]
            needle = NeedleSpec(
                direction=tuple(nd["direction"]),
                shaft_radius_mm=float(nd.get("shaft_radius_mm", 0.6)),
                tine_count=int(nd.get("tine_count", 0)),
                tine_length_mm=float(nd.get("tine_length_mm", 0.0)),
                value=int(nd.get("value", 1500)),
            )
        return PhantomSpec(
            dims=tuple(int(v) for v in d["dims"]),
            spacing=tuple(float(v) for v in d["spacing"]),
            lesion_center=tuple(float(v) for v in d["lesion_center"]),
            lesion_radii=tuple(float(v) for v in d["lesion_radii"]),
            lesion_value=int(d.get("lesion_value", 40)),
            background_value=int(d.get("background_value", 110)),
            rim_thickness_mm=float(d.get("rim_thickness_mm", 0.0)),
            rim_value=int(d.get("rim_value", 180)),
            needle=needle,
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            rng_seed=int(d.get("rng_seed", 0)),
            origin=tuple(float(v) for v in d.get("origin", (0.0, 0.0, 0.0))),
        )


def _splitmix64(state: np.ndarray) -> np.ndarray:
    """splitmix64 output function applied to a uint64 state array."""
    z = (state ^ (state >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def gaussian_field(seed: int, count: int) -> np.ndarray:
    """Deterministic standard-normal draws: splitmix64 + Box-Muller.

    The k-th uniform comes from mixing the state seed + k * golden-gamma;
    consecutive uniform pairs feed one Box-Muller transform.
    """
    pairs = (count + 1) // 2
    idx = np.arange(1, 2 * pairs + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _splitmix64(np.uint64(seed % (2 ** 64)) + idx * _GOLDEN)
    # (z >> 11) has 53 random bits; +1 keeps u in (0, 1] so log() is finite.
    u = ((z >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)
    u1 = u[0::2]
    u2 = u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from each point to the segment [a, b]."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    closest = a + t[:, None] * ab
    return np.linalg.norm(points - closest, axis=1)


def _tine_directions(direction: np.ndarray, count: int) -> list[np.ndarray]:
    """Evenly spread unit vectors on a cone around ``direction``."""
    k = int(np.argmin(np.abs(direction)))
    e = np.zeros(3)
    e[k] = 1.0
    u = np.cross(direction, e)
    u /= np.linalg.norm(u)
    v = np.cross(direction, u)
    theta = np.deg2rad(TINE_CONE_ANGLE_DEG)
    out = []
    for j in range(count):
        phi = 2.0 * np.pi * j / count
        d = (np.cos(theta) * direction
             + np.sin(theta) * (np.cos(phi) * u + np.sin(phi) * v))
        out.append(d / np.linalg.norm(d))
    return out


def make_phantom(spec: PhantomSpec) -> tuple[Volume, BinaryMask]:
    """Render the phantom volume and its exact voxel-center ground truth.

    Needle voxels overwrite lesion/rim intensities but never unset
    ground-truth bits: a needle crossing the lesion is part of the
    ablation zone.
    """
    spec.validate()
    nx, ny, nz = spec.dims
    origin = np.asarray(spec.origin, dtype=float)
    spacing = np.asarray(spec.spacing, dtype=float)
    xs = origin[0] + spacing[0] * np.arange(nx)
    ys = origin[1] + spacing[1] * np.arange(ny)
    zs = origin[2] + spacing[2] * np.arange(nz)
    c = np.asarray(spec.lesion_center, dtype=float)
    radii = np.asarray(spec.lesion_radii, dtype=float)

    def ellipsoid_membership(semi_axes):
        if np.any(semi_axes <= 0):
            return np.zeros((nx, ny, nz), dtype=bool)
        q = ((xs - c[0]) / semi_axes[0]) ** 2
        r = ((ys - c[1]) / semi_axes[1]) ** 2
        s = ((zs - c[2]) / semi_axes[2]) ** 2
        return (q[:, None, None] + r[None, :, None] + s[None, None, :]) <= 1.0

    lesion = ellipsoid_membership(radii)
    vol = np.full((nx, ny, nz), float(spec.background_value))
    if spec.rim_thickness_mm > 0:
        shell = ellipsoid_membership(radii + spec.rim_thickness_mm)
        vol[shell & ~lesion] = float(spec.rim_value)
    vol[lesion] = float(spec.lesion_value)

    if spec.needle is not None:
        d = spec.needle.unit_direction()
        centers = np.stack(
            np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1
        ).reshape(-1, 3)
        hit = np.zeros(len(centers), dtype=bool)
        # Shaft runs backwards along the needle direction until it leaves
        # the voxel-center hull.
        lo = origin
        hi = origin + (np.asarray(spec.dims) - 1) * spacing
        t_max = np.inf
        for ax in range(3):
            if d[ax] > 1e-12:
                t_max = min(t_max, (c[ax] - lo[ax]) / d[ax])
            elif d[ax] < -1e-12:
                t_max = min(t_max, (c[ax] - hi[ax]) / d[ax])
        if np.isfinite(t_max) and t_max > 0:
            entry = c - t_max * d
            hit |= _segment_distance(centers, entry, c) <= spec.needle.shaft_radius_mm
        for tdir in _tine_directions(d, spec.needle.tine_count):
            tip = c + spec.needle.tine_length_mm * tdir
            hit |= _segment_distance(centers, c, tip) <= spec.needle.shaft_radius_mm
        vol.reshape(-1)[hit] = float(spec.needle.value)

    if spec.noise_sigma > 0:
        noise = gaussian_field(spec.rng_seed, vol.size)
        flat = vol.reshape(-1, order="F") + spec.noise_sigma * noise
        vol = flat.reshape(spec.dims, order="F")
    data = np.clip(np.rint(vol), -32768, 32767).astype(np.int16)
    volume = Volume(spec.dims, spec.spacing, spec.origin, data)
    truth = BinaryMask(spec.dims, spec.spacing, spec.origin, lesion)
    return volume, truth
