"""Interactive segmentation pipeline.

One segmentation pass: average the intensities in a roughly one-cubic-
centimeter cube around the seed (diluting outliers such as a bright
needle), derive per-node costs |avg - intensity| along the ray lattice,
map costs to signed terminal weights, solve the min-cut, read off per-ray
cut indices, and voxelize the star-convex surface into a binary mask.

Sessions keep the current seed and any number of border seeds; dragging
the seed recomputes everything from scratch (well inside the interactive
budget) while border seeds stay fixed and keep constraining the cut.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConstraintOutOfRangeError,
    InfeasibleConstraintsError,
    OutOfVolumeError,
)
from .flowgraph import CutIndices, INF_CAP, build_graph, extract_cut, max_flow
from .geometry import (
    RayLattice,
    barycentric_on_faces,
    build_lattice,
    locate_faces,
    ray_template,
)
from .volume import BinaryMask, RegionStats, Volume, region_stats, trilinear_with_mask

# Cost assigned to lattice nodes outside the volume hull; larger than any
# possible |avg - intensity| for 16-bit data, so such nodes always lean
# background and seeds near the volume edge still segment.
OUT_OF_VOLUME_COST = 131072.0

RAY_COUNT_LEVELS = {12: 0, 32: 1, 92: 2, 272: 3, 812: 4, 2432: 5}


@dataclass(frozen=True)
class SegmentationParams:
    """Knobs of one segmentation; defaults give the real-time setup of
    812 rays x 40 nodes within a 50 mm radius."""

    refinement_level: int = 4
    nodes_per_ray: int = 40
    max_radius_mm: float = 50.0
    delta_r: int = 1
    tau_mode: str = "auto"  # "auto" | "fixed"
    tau_fixed: float = 50.0
    tau_k: float = 3.0
    tau_floor: float = 45.0
    strategy: str = "threshold"  # "threshold" | "derivative"

    def validate(self) -> None:
        if not 0 <= self.refinement_level <= 5:
            raise ValueError("refinement_level must be 0..5")
        if self.nodes_per_ray < 2:
            raise ValueError("nodes_per_ray must be >= 2")
        if self.max_radius_mm <= 0:
            raise ValueError("max_radius_mm must be > 0")
        if self.delta_r < 0:
            raise ValueError("delta_r must be >= 0")
        if self.tau_mode not in ("auto", "fixed"):
            raise ValueError(f"unknown tau_mode {self.tau_mode!r}")
        if self.tau_mode == "fixed" and self.tau_fixed <= 0:
            raise ValueError("tau_fixed must be > 0")
        if self.strategy not in ("threshold", "derivative"):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def to_dict(self) -> dict:
        return {
            "refinement_level": self.refinement_level,
            "nodes_per_ray": self.nodes_per_ray,
            "max_radius_mm": self.max_radius_mm,
            "delta_r": self.delta_r,
            "tau_mode": self.tau_mode,
            "tau_fixed": self.tau_fixed,
            "tau_k": self.tau_k,
            "tau_floor": self.tau_floor,
            "strategy": self.strategy,
        }

    @staticmethod
    def from_dict(d: dict) -> "SegmentationParams":
        params = SegmentationParams(**{
            k: d[k] for k in SegmentationParams().to_dict() if k in d
        })
        params.validate()
        return params


@dataclass(frozen=True)
class Segmentation:
    """Immutable result snapshot of one segmentation pass."""

    cut: CutIndices
    cut_radii_mm: np.ndarray = field(repr=False)
    surface_vertices: np.ndarray = field(repr=False)
    surface_faces: np.ndarray = field(repr=False)
    mask: BinaryMask
    avg_used: float
    tau_used: float
    elapsed_ms: float
    solve_ms: float
    voxelize_ms: float

    @property
    def volume_mm3(self) -> float:
        return self.mask.physical_volume_mm3


@dataclass
class Session:
    """Mutable interactive state over one immutable volume."""

    volume: Volume
    params: SegmentationParams = field(default_factory=SegmentationParams)
    seed: tuple[float, float, float] | None = None
    border_seeds: list[tuple[float, float, float]] = field(default_factory=list)
    stats: RegionStats | None = None
    last_result: Segmentation | None = None

    def require_seed(self) -> tuple[float, float, float]:
        if self.seed is None:
            raise OutOfVolumeError("no seed placed yet")
        return self.seed


def node_costs(volume: Volume, lattice: RayLattice, avg: float) -> np.ndarray:
    """|avg - intensity| per lattice node, shape (rays, nodes_per_ray);
    out-of-volume nodes get OUT_OF_VOLUME_COST."""
    positions = lattice.node_positions().reshape(-1, 3)
    values, inside = trilinear_with_mask(volume, positions)
    c = np.abs(avg - values)
    c[~inside] = OUT_OF_VOLUME_COST
    return c.reshape(lattice.ray_count, lattice.nodes_per_ray)


def terminal_weights(costs: np.ndarray, tau: float,
                     strategy: str = "threshold") -> np.ndarray:
    """Signed per-node terminal weights.

    threshold: w = tau - cost.  Positive weights pull toward the source
    (foreground), negative toward the sink, and the cut settles where the
    cost crosses tau, subject to smoothness.

    derivative: w(r, 0) is the infinity sentinel and w(r, i) =
    cost(r, i-1) - cost(r, i); the per-ray cut energy telescopes to the
    cost at the boundary node.
    """
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    c = np.asarray(costs, dtype=np.float64)
    if strategy == "threshold":
        return tau - c
    if strategy == "derivative":
        w = np.empty_like(c)
        w[:, 0] = INF_CAP
        w[:, 1:] = c[:, :-1] - c[:, 1:]
        return w
    raise ValueError(f"unknown strategy {strategy!r}")


def map_border_seed(lattice: RayLattice, point) -> tuple[int, int]:
    """Nearest (ray, node index) for a border point: the ray with maximal
    dot product against the seed-to-point direction, the node closest in
    radius."""
    p = np.asarray(point, dtype=float)
    d = p - np.asarray(lattice.seed)
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        raise ConstraintOutOfRangeError(
            "border seed coincides with the seed point"
        )
    if dist > lattice.max_radius_mm:
        raise ConstraintOutOfRangeError(
            f"border seed {dist:.2f} mm from the seed exceeds the lattice "
            f"radius {lattice.max_radius_mm:.2f} mm"
        )
    ray = int(np.argmax(lattice.directions @ (d / dist)))
    spacing = lattice.node_spacing_mm
    index = int(round(dist / spacing)) - 1
    index = min(max(index, 0), lattice.nodes_per_ray - 1)
    return ray, index


def border_constraints(lattice: RayLattice, border_seeds) -> list:
    """Forced assignments from border seeds: the nearest node is pinned to
    foreground, the next node outward to background.  Later seeds override
    earlier ones on the same ray."""
    per_ray: dict[int, int] = {}
    for point in border_seeds:
        ray, index = map_border_seed(lattice, point)
        per_ray[ray] = index
    constraints = []
    n = lattice.nodes_per_ray
    for ray, index in per_ray.items():
        constraints.append((ray, index, True))
        if index + 1 < n:
            constraints.append((ray, index + 1, False))
    return constraints


def _tau_for(params: SegmentationParams, stats: RegionStats) -> float:
    if params.tau_mode == "fixed":
        return float(params.tau_fixed)
    return float(max(params.tau_floor, params.tau_k * stats.stddev))


def segment(session: Session) -> Segmentation:
    """Run the full pipeline for the session's current seed and state."""
    session.params.validate()
    seed = session.require_seed()
    volume = session.volume
    if not volume.contains(seed):
        raise OutOfVolumeError(f"seed {seed} outside volume bounds")
    t0 = time.perf_counter()
    stats = region_stats(volume, seed)
    session.stats = stats
    avg = stats.mean
    tau = _tau_for(session.params, stats)
    lattice = build_lattice(
        seed,
        ray_template(session.params.refinement_level),
        session.params.max_radius_mm,
        session.params.nodes_per_ray,
    )
    costs = node_costs(volume, lattice, avg)
    weights = terminal_weights(costs, tau, session.params.strategy)
    # Out-of-volume nodes are definitely background: pin them with the
    # sentinel so they never enter the cut (and never dilute the integer
    # scaling budget of the large-instance solver).
    weights[costs >= OUT_OF_VOLUME_COST] = -INF_CAP
    constraints = border_constraints(lattice, session.border_seeds)
    graph = build_graph(lattice, weights, session.params.delta_r, constraints)
    result = max_flow(graph)
    cut = extract_cut(result, lattice)
    _check_smoothness(cut, lattice, session.params.delta_r)
    cut_radii = cut.cut_radii_mm(lattice)
    t1 = time.perf_counter()
    mask = voxelize(cut_radii, lattice, volume)
    t2 = time.perf_counter()
    surface_vertices = (np.asarray(seed)[None, :]
                        + lattice.directions * cut_radii[:, None])
    segmentation = Segmentation(
        cut=cut,
        cut_radii_mm=cut_radii,
        surface_vertices=surface_vertices,
        surface_faces=lattice.polyhedron.faces,
        mask=mask,
        avg_used=float(avg),
        tau_used=float(tau),
        elapsed_ms=(t2 - t0) * 1000.0,
        solve_ms=(t1 - t0) * 1000.0,
        voxelize_ms=(t2 - t1) * 1000.0,
    )
    session.last_result = segmentation
    return segmentation


def _check_smoothness(cut: CutIndices, lattice: RayLattice, delta_r: int) -> None:
    pairs = lattice.adjacency
    diff = np.abs(cut.k[pairs[:, 0]] - cut.k[pairs[:, 1]])
    if np.any(diff > delta_r):
        raise InfeasibleConstraintsError(
            "cut violates the smoothness bound; border constraints are "
            "mutually infeasible for this delta_r"
        )


def drag_seed(session: Session, new_seed) -> Segmentation:
    """Move the seed and recompute; border seeds persist.  An out-of-volume
    target is rejected without touching the session."""
    p = tuple(float(v) for v in np.asarray(new_seed, dtype=float))
    if not session.volume.contains(p):
        raise OutOfVolumeError(f"seed {p} outside volume bounds")
    session.seed = p
    return segment(session)


def add_border_seed(session: Session, point) -> Segmentation:
    """Pin the cut through ``point`` on its nearest ray and recompute."""
    p = tuple(float(v) for v in np.asarray(point, dtype=float))
    if not session.volume.contains(p):
        raise OutOfVolumeError(f"border seed {p} outside volume bounds")
    seed = session.require_seed()
    lattice = build_lattice(
        seed,
        ray_template(session.params.refinement_level),
        session.params.max_radius_mm,
        session.params.nodes_per_ray,
    )
    map_border_seed(lattice, p)  # validate before mutating
    session.border_seeds.append(p)
    return segment(session)


def clear_border_seeds(session: Session) -> None:
    session.border_seeds.clear()


def voxelize(cut_radii, lattice: RayLattice, grid) -> BinaryMask:
    """Star-convex mask on the grid geometry of ``grid``: a voxel center is
    set iff its distance from the seed is at most the cut radius
    interpolated barycentrically over the containing spherical triangle."""
    radii = np.asarray(cut_radii, dtype=np.float64)
    if len(radii) != lattice.ray_count:
        raise ValueError("one radius per ray required")
    dims = np.asarray(grid.dims)
    spacing = np.asarray(grid.spacing, dtype=float)
    origin = np.asarray(grid.origin, dtype=float)
    seed = np.asarray(lattice.seed)
    rmax = float(radii.max(initial=0.0))
    bits = np.zeros(tuple(dims), dtype=bool)
    lo = np.maximum(np.ceil((seed - rmax - origin) / spacing).astype(np.int64), 0)
    hi = np.minimum(np.floor((seed + rmax - origin) / spacing).astype(np.int64),
                    dims - 1)
    if np.any(hi < lo):
        return BinaryMask(grid.dims, grid.spacing, grid.origin, bits)
    axes = [origin[a] + spacing[a] * np.arange(lo[a], hi[a] + 1)
            for a in range(3)]
    centers = np.stack(
        np.meshgrid(*axes, indexing="ij"), axis=-1
    ).reshape(-1, 3)
    delta = centers - seed
    rho = np.linalg.norm(delta, axis=1)
    safe = np.where(rho > 0, rho, 1.0)
    dirs = delta / safe[:, None]
    dirs[rho == 0] = (1.0, 0.0, 0.0)
    faces = locate_faces(lattice.polyhedron, dirs)
    lam = barycentric_on_faces(lattice.polyhedron, faces, dirs)
    tri = lattice.polyhedron.faces[faces]
    limit = np.einsum("nj,nj->n", lam, radii[tri])
    include = rho <= limit + 1e-9 * np.maximum(limit, 1.0)
    block = include.reshape(hi[0] - lo[0] + 1, hi[1] - lo[1] + 1,
                            hi[2] - lo[2] + 1)
    bits[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] = block
    return BinaryMask(grid.dims, grid.spacing, grid.origin, bits)


def save_obj(path, vertices: np.ndarray, faces: np.ndarray) -> None:
    """ASCII OBJ export of the cut surface (1-based face indices)."""
    with open(path, "w", encoding="ascii") as fp:
        for v in vertices:
            fp.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in faces:
            fp.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
