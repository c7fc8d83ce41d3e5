"""Refined-polyhedron ray template and the lattice of sampled nodes.

Directions come from a regular icosahedron refined by centroid insertion:
each level appends every face centroid (projected to the unit sphere) and
splits the face into three.  Vertex counts follow 12, 32, 92, 272, 812,
2432 for levels 0..5; face counts triple per level.  This refinement (not
edge-midpoint subdivision, which would give 12, 42, 162, ...) is what
reproduces that vertex sequence.

Vertex ordering is deterministic: all parent vertices first, new centroid
vertices in face order.  Because vertices only ever get appended, face
index arrays of every intermediate level address the final vertex array
unchanged, which the point-in-face descent in the voxelizer relies on
(face f at level k has children 3f, 3f+1, 3f+2 at level k+1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

VERTEX_COUNTS = (12, 32, 92, 272, 812, 2432)


@dataclass(frozen=True)
class Polyhedron:
    """Closed triangulated unit-sphere sampling with outward-oriented faces.

    ``face_levels`` keeps the face array of every refinement generation,
    coarsest first; ``face_levels[-1]`` is ``faces``.
    """

    vertices: np.ndarray = field(repr=False)
    faces: np.ndarray = field(repr=False)
    face_levels: tuple[np.ndarray, ...] = field(repr=False, default=())

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        levels = self.face_levels or (f,)
        levels = tuple(np.ascontiguousarray(np.asarray(a, dtype=np.int64))
                       for a in levels)
        for a in (v, f) + levels:
            a.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "face_levels", levels)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    @property
    def edges(self) -> np.ndarray:
        """Unordered vertex-index pairs, lexicographically sorted."""
        f = self.faces
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        return np.unique(pairs, axis=0)


def icosahedron() -> Polyhedron:
    """Regular icosahedron from golden-ratio coordinates, normalized,
    faces oriented outward (positive triple product)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    raw = np.array(
        [
            [-1, 0, phi], [1, 0, phi], [-1, 0, -phi], [1, 0, -phi],
            [0, phi, 1], [0, phi, -1], [0, -phi, 1], [0, -phi, -1],
            [phi, 1, 0], [phi, -1, 0], [-phi, 1, 0], [-phi, -1, 0],
        ],
        dtype=np.float64,
    )
    vertices = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    faces = np.array(
        [
            [0, 11, 6], [0, 6, 1], [0, 1, 4], [0, 4, 10], [0, 10, 11],
            [1, 6, 9], [6, 11, 7], [11, 10, 2], [10, 4, 5], [4, 1, 8],
            [3, 9, 7], [3, 7, 2], [3, 2, 5], [3, 5, 8], [3, 8, 9],
            [7, 9, 6], [2, 7, 11], [5, 2, 10], [8, 5, 4], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    tri = np.linalg.det(vertices[faces])
    flip = tri < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return Polyhedron(vertices, faces)


def refine_polyhedron(base: Polyhedron, levels: int) -> Polyhedron:
    """Apply ``levels`` rounds of centroid insertion (V' = V + F, F' = 3F)."""
    if levels < 0:
        raise ValueError(f"levels must be >= 0, got {levels}")
    vertices = np.asarray(base.vertices)
    faces = np.asarray(base.faces)
    history = list(base.face_levels)
    for _ in range(levels):
        a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
        centroids = (vertices[a] + vertices[b] + vertices[c]) / 3.0
        centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
        m = len(vertices) + np.arange(len(faces))
        vertices = np.concatenate([vertices, centroids])
        # Children of face (a, b, c) are laid out consecutively so face f
        # has children 3f, 3f+1, 3f+2 in the next generation.
        children = np.empty((3 * len(faces), 3), dtype=np.int64)
        children[0::3] = np.stack([a, b, m], axis=1)
        children[1::3] = np.stack([b, c, m], axis=1)
        children[2::3] = np.stack([c, a, m], axis=1)
        faces = children
        history.append(faces)
    return Polyhedron(vertices, faces, tuple(history))


@lru_cache(maxsize=None)
def ray_template(level: int) -> Polyhedron:
    """Cached icosahedron refinement; level 0..5 give the published counts."""
    return refine_polyhedron(icosahedron(), level)


def ray_adjacency(polyhedron: Polyhedron) -> np.ndarray:
    """Adjacent ray pairs: the polyhedron's edge graph."""
    return polyhedron.edges


@dataclass(frozen=True)
class RayLattice:
    """Sampled node positions along rays from a seed point.

    Node i on ray r sits at ``seed + direction_r * (i + 1) * R / n``:
    spacing is uniform, the innermost node is one spacing away from the
    seed (a node exactly at the seed would belong to every ray) and the
    outermost node is exactly at ``max_radius_mm``.
    """

    seed: tuple[float, float, float]
    polyhedron: Polyhedron
    max_radius_mm: float
    nodes_per_ray: int

    def __post_init__(self):
        if self.max_radius_mm <= 0:
            raise ValueError("max_radius_mm must be > 0")
        if self.nodes_per_ray < 2:
            raise ValueError("nodes_per_ray must be >= 2")
        object.__setattr__(self, "seed", tuple(float(v) for v in self.seed))

    @property
    def directions(self) -> np.ndarray:
        return self.polyhedron.vertices

    @property
    def ray_count(self) -> int:
        return self.polyhedron.vertex_count

    @property
    def node_count(self) -> int:
        return self.ray_count * self.nodes_per_ray

    @property
    def node_spacing_mm(self) -> float:
        return self.max_radius_mm / self.nodes_per_ray

    @property
    def adjacency(self) -> np.ndarray:
        return self.polyhedron.edges

    def node_radii(self) -> np.ndarray:
        """Distance from the seed of node index i, shape (nodes_per_ray,)."""
        return (np.arange(self.nodes_per_ray) + 1) * self.node_spacing_mm

    def position(self, ray: int, index: int) -> np.ndarray:
        return (np.asarray(self.seed)
                + self.directions[ray] * (index + 1) * self.node_spacing_mm)

    def node_positions(self) -> np.ndarray:
        """All node positions, shape (ray_count, nodes_per_ray, 3)."""
        radii = self.node_radii()
        return (np.asarray(self.seed)[None, None, :]
                + self.directions[:, None, :] * radii[None, :, None])


def build_lattice(
    seed,
    polyhedron: Polyhedron,
    max_radius_mm: float,
    nodes_per_ray: int,
) -> RayLattice:
    return RayLattice(
        seed=tuple(float(v) for v in np.asarray(seed, dtype=float)),
        polyhedron=polyhedron,
        max_radius_mm=float(max_radius_mm),
        nodes_per_ray=int(nodes_per_ray),
    )


# ---------------------------------------------------------------------------
# Point location on the refined sphere
# ---------------------------------------------------------------------------

def _inward_signs(vertices, faces, dirs):
    """min over the 3 edge-plane tests of each (face, dir) pair; >= 0 means
    the direction lies in the face's spherical triangle."""
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    # det(a, b, d) = (a x b) . d, and cyclic.
    s0 = np.einsum("fk,nk->nf", np.cross(a, b), dirs)
    s1 = np.einsum("fk,nk->nf", np.cross(b, c), dirs)
    s2 = np.einsum("fk,nk->nf", np.cross(c, a), dirs)
    return np.minimum(np.minimum(s0, s1), s2)


def locate_faces(polyhedron: Polyhedron, dirs: np.ndarray) -> np.ndarray:
    """Index of the final-level face containing each unit direction.

    Descends the refinement hierarchy: the three children of a face
    partition its spherical triangle, so each level needs only three
    containment tests per point.  Ties on shared edges resolve to the
    first candidate, deterministically.
    """
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    vertices = polyhedron.vertices
    level0 = polyhedron.face_levels[0]
    signs = _inward_signs(vertices, level0, dirs)
    current = np.argmax(signs, axis=1)
    for faces in polyhedron.face_levels[1:]:
        candidates = (3 * current[:, None]
                      + np.arange(3, dtype=np.int64)[None, :])
        tri = faces[candidates.reshape(-1)]
        a = vertices[tri[:, 0]].reshape(len(dirs), 3, 3)
        b = vertices[tri[:, 1]].reshape(len(dirs), 3, 3)
        c = vertices[tri[:, 2]].reshape(len(dirs), 3, 3)
        d = dirs[:, None, :]
        s0 = np.einsum("nfk,nfk->nf", np.cross(a, b), np.broadcast_to(d, a.shape))
        s1 = np.einsum("nfk,nfk->nf", np.cross(b, c), np.broadcast_to(d, a.shape))
        s2 = np.einsum("nfk,nfk->nf", np.cross(c, a), np.broadcast_to(d, a.shape))
        best = np.argmax(np.minimum(np.minimum(s0, s1), s2), axis=1)
        current = candidates[np.arange(len(dirs)), best]
    return current


def barycentric_on_faces(
    polyhedron: Polyhedron, face_indices: np.ndarray, dirs: np.ndarray
) -> np.ndarray:
    """Barycentric weights of each direction within its face, normalized to
    sum to one (solve d = l0*A + l1*B + l2*C by Cramer's rule)."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    tri = polyhedron.faces[face_indices]
    a = polyhedron.vertices[tri[:, 0]]
    b = polyhedron.vertices[tri[:, 1]]
    c = polyhedron.vertices[tri[:, 2]]
    det = np.einsum("nk,nk->n", np.cross(a, b), c)
    l0 = np.einsum("nk,nk->n", np.cross(dirs, b), c)
    l1 = np.einsum("nk,nk->n", np.cross(a, dirs), c)
    l2 = np.einsum("nk,nk->n", np.cross(a, b), dirs)
    lam = np.stack([l0, l1, l2], axis=1) / det[:, None]
    lam = np.clip(lam, 0.0, None)
    total = lam.sum(axis=1, keepdims=True)
    total[total == 0] = 1.0
    return lam / total
