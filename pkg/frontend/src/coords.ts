import type { Geometry, Plane } from './types.js';

// In-plane world axes (u, v) and the slicing axis w per plane, matching
// the server's rendering conventions: axial u=x v=y w=z, sagittal u=y
// v=z w=x, coronal u=x v=z w=y.  Pixel coordinates are continuous voxel
// indices along the two in-plane axes.
const PLANE_AXES: Record<Plane, [number, number, number]> = {
  axial: [0, 1, 2],
  sagittal: [1, 2, 0],
  coronal: [0, 2, 1],
};

export function planeAxes(plane: Plane): [number, number, number] {
  return PLANE_AXES[plane];
}

export function sliceCount(geom: Geometry, plane: Plane): number {
  return geom.dims[PLANE_AXES[plane][2]]!;
}

export function imageSize(geom: Geometry, plane: Plane): [number, number] {
  const [u, v] = PLANE_AXES[plane];
  return [geom.dims[u]!, geom.dims[v]!];
}

export function pixelToWorld(
  geom: Geometry,
  plane: Plane,
  sliceIndex: number,
  u: number,
  v: number,
): [number, number, number] {
  const [ua, va, wa] = PLANE_AXES[plane];
  const world: [number, number, number] = [0, 0, 0];
  world[ua] = geom.origin[ua]! + u * geom.spacing[ua]!;
  world[va] = geom.origin[va]! + v * geom.spacing[va]!;
  world[wa] = geom.origin[wa]! + sliceIndex * geom.spacing[wa]!;
  return world;
}

export function worldToPixel(
  geom: Geometry,
  plane: Plane,
  world: [number, number, number],
): { u: number; v: number } {
  const [ua, va] = PLANE_AXES[plane];
  return {
    u: (world[ua]! - geom.origin[ua]!) / geom.spacing[ua]!,
    v: (world[va]! - geom.origin[va]!) / geom.spacing[va]!,
  };
}

export function worldToSliceIndex(
  geom: Geometry,
  plane: Plane,
  world: [number, number, number],
): number {
  const wa = PLANE_AXES[plane][2];
  const index = Math.round((world[wa]! - geom.origin[wa]!) / geom.spacing[wa]!);
  return Math.min(Math.max(index, 0), geom.dims[wa]! - 1);
}

export function clampToVolume(
  geom: Geometry,
  world: [number, number, number],
): [number, number, number] {
  const out: [number, number, number] = [...world];
  for (let a = 0; a < 3; a++) {
    const lo = geom.origin[a]!;
    const hi = geom.origin[a]! + (geom.dims[a]! - 1) * geom.spacing[a]!;
    out[a] = Math.min(Math.max(out[a]!, lo), hi);
  }
  return out;
}
