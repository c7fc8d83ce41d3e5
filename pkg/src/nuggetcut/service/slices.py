"""Slice rendering and contour overlays for the three orthogonal planes.

Pixel conventions (u = column, v = row of the rendered bitmap):

* axial    (z = index): u = x, v = y, image size (nx, ny)
* sagittal (x = index): u = y, v = z, image size (ny, nz)
* coronal  (y = index): u = x, v = z, image size (nx, nz)

Pixel coordinates are continuous voxel indices of the two in-plane axes;
world = origin + pixel * spacing along each axis.

Contours trace the boundary of the segmentation mask on the slice
(marching squares on the binary slice), which is exactly what the mask
download contains.  The triangle mesh itself is not used here: centroid
refinement keeps the original coarse edges in the mesh forever, so
planar mesh-plane sections can dip well below the star-convex surface
those triangles sample.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

PLANE_AXES = {"axial": 2, "sagittal": 0, "coronal": 1}
# In-plane world axes (u, v) per plane.
PLANE_UV = {"axial": (0, 1), "sagittal": (1, 2), "coronal": (0, 2)}


def plane_axis(plane: str) -> int:
    if plane not in PLANE_AXES:
        raise ValueError(f"unknown plane {plane!r}; expected one of "
                         f"{sorted(PLANE_AXES)}")
    return PLANE_AXES[plane]


def slice_array(volume, plane: str, index: int) -> np.ndarray:
    """2D array of the slice with shape (rows, cols) = (v extent, u extent)."""
    axis = plane_axis(plane)
    if not 0 <= index < volume.dims[axis]:
        raise IndexError(
            f"slice index {index} outside 0..{volume.dims[axis] - 1}"
        )
    if plane == "axial":
        return volume.data[:, :, index].T
    if plane == "sagittal":
        return volume.data[index, :, :].T
    return volume.data[:, index, :].T


def render_slice_png(volume, plane: str, index: int,
                     window_center: float, window_width: float) -> bytes:
    """8-bit grayscale PNG with linear window/level mapping."""
    if window_width <= 0:
        raise ValueError("window_width must be > 0")
    arr = slice_array(volume, plane, index).astype(np.float64)
    lower = window_center - window_width / 2.0
    scaled = np.clip((arr - lower) / window_width, 0.0, 1.0)
    img = Image.fromarray((scaled * 255.0).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def world_to_pixel(volume, plane: str, points: np.ndarray) -> np.ndarray:
    """Project world points onto the (u, v) pixel frame of a plane."""
    ua, va = PLANE_UV[plane]
    origin = np.asarray(volume.origin)
    spacing = np.asarray(volume.spacing)
    pts = np.atleast_2d(points)
    u = (pts[:, ua] - origin[ua]) / spacing[ua]
    v = (pts[:, va] - origin[va]) / spacing[va]
    return np.stack([u, v], axis=1)


# Marching-squares segment table.  Cell corners: A=(i,j), B=(i+1,j),
# C=(i+1,j+1), D=(i,j+1); bitmask A | B<<1 | C<<2 | D<<3.  Entries name
# crossed cell edges by midpoint: ab=(i+.5,j), bc=(i+1,j+.5),
# cd=(i+.5,j+1), da=(i,j+.5).  Ambiguous diagonals keep corners apart.
_MS_TABLE = {
    1: (("da", "ab"),),
    2: (("ab", "bc"),),
    3: (("da", "bc"),),
    4: (("bc", "cd"),),
    5: (("da", "ab"), ("bc", "cd")),
    6: (("ab", "cd"),),
    7: (("da", "cd"),),
    8: (("cd", "da"),),
    9: (("cd", "ab"),),
    10: (("ab", "bc"), ("cd", "da")),
    11: (("bc", "cd"),),
    12: (("da", "bc"),),
    13: (("ab", "bc"),),
    14: (("da", "ab"),),
}


def mask_slice_contours(bits2d: np.ndarray) -> list[np.ndarray]:
    """Closed polylines around the set regions of a binary 2D slice.

    Marching squares at the 0.5 level over pixel centers; vertices sit on
    cell-edge midpoints, so coordinates are exact halves and loop chaining
    is exact.  The slice is padded so regions touching the border close.
    """
    padded = np.zeros((bits2d.shape[0] + 2, bits2d.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = bits2d
    a = padded[:-1, :-1]
    b = padded[1:, :-1]
    c = padded[1:, 1:]
    d = padded[:-1, 1:]
    case = (a.astype(np.int8) | (b.astype(np.int8) << 1)
            | (c.astype(np.int8) << 2) | (d.astype(np.int8) << 3))
    cells = np.argwhere((case != 0) & (case != 15))
    if len(cells) == 0:
        return []
    adjacency: dict[tuple[float, float], list[tuple[float, float]]] = {}
    for i, j in cells:
        mids = {
            "ab": (i + 0.5, float(j)),
            "bc": (i + 1.0, j + 0.5),
            "cd": (i + 0.5, j + 1.0),
            "da": (float(i), j + 0.5),
        }
        for e1, e2 in _MS_TABLE[int(case[i, j])]:
            p, q = mids[e1], mids[e2]
            adjacency.setdefault(p, []).append(q)
            adjacency.setdefault(q, []).append(p)
    loops = []
    visited: set[tuple[float, float]] = set()
    for start in adjacency:
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        prev = None
        current = start
        while True:
            nxt = [p for p in adjacency[current] if p != prev]
            if not nxt:
                break
            prev, current = current, nxt[0]
            if current == start:
                break
            loop.append(current)
            visited.add(current)
        if len(loop) >= 3:
            # un-pad and return in (u, v) pixel coordinates
            loops.append(np.asarray(loop) - 1.0)
    return loops


def _mask_slice(mask, plane: str, index: int) -> np.ndarray:
    """Binary slice indexed [u, v] for the plane conventions above."""
    if plane == "axial":
        return mask.bits[:, :, index]
    if plane == "sagittal":
        return mask.bits[index, :, :]
    return mask.bits[:, index, :]


def contour_overlay(volume, segmentation, plane: str, index: int,
                    seed, border_seeds) -> dict:
    """ContourOverlay document for one slice: closed pixel-space polylines
    around the mask plus seed and border-seed projection markers."""
    axis = plane_axis(plane)
    if not 0 <= index < volume.dims[axis]:
        raise IndexError(
            f"slice index {index} outside 0..{volume.dims[axis] - 1}"
        )
    polylines = []
    if segmentation is not None:
        for loop in mask_slice_contours(
                _mask_slice(segmentation.mask, plane, index)):
            polylines.append([[round(float(u), 3), round(float(v), 3)]
                              for u, v in loop])
    markers = []
    for point in border_seeds:
        u, v = world_to_pixel(volume, plane, np.asarray(point))[0]
        markers.append([round(float(u), 3), round(float(v), 3)])
    seed_marker = None
    if seed is not None:
        u, v = world_to_pixel(volume, plane, np.asarray(seed))[0]
        seed_marker = [round(float(u), 3), round(float(v), 3)]
    return {
        "plane": plane,
        "slice_index": index,
        "polylines": polylines,
        "seed": seed_marker,
        "border_seeds": markers,
        "empty": len(polylines) == 0,
    }
