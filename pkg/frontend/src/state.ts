import { sliceCount, worldToSliceIndex } from './coords.js';
import type {
  ContourOverlay,
  Geometry,
  LiveResult,
  Plane,
  SegmentationSummary,
  SessionDocument,
} from './types.js';
import { PLANES } from './types.js';

export interface WindowPreset {
  name: string;
  center: number;
  width: number;
}

// The extreme preset squeezes the window onto the bright shell around a
// lesion so a thin rim becomes visible.
export const WINDOW_PRESETS: WindowPreset[] = [
  { name: 'default', center: 75, width: 400 },
  { name: 'soft', center: 60, width: 200 },
  { name: 'extreme', center: 150, width: 80 },
];

export interface ViewerState {
  volumeId: string | null;
  sessionId: string | null;
  geometry: Geometry | null;
  sliceIndex: Record<Plane, number>;
  windowCenter: number;
  windowWidth: number;
  seed: [number, number, number] | null;
  borderSeeds: [number, number, number][];
  overlays: Partial<Record<Plane, ContourOverlay>>;
  volumeMm3: number | null;
  elapsedMs: number | null;
  committedMasks: string[];
  dragInFlight: boolean;
}

export function initialViewerState(): ViewerState {
  return {
    volumeId: null,
    sessionId: null,
    geometry: null,
    sliceIndex: { axial: 0, sagittal: 0, coronal: 0 },
    windowCenter: WINDOW_PRESETS[0]!.center,
    windowWidth: WINDOW_PRESETS[0]!.width,
    seed: null,
    borderSeeds: [],
    overlays: {},
    volumeMm3: null,
    elapsedMs: null,
    committedMasks: [],
    dragInFlight: false,
  };
}

/**
 * Rebuild the client state from the server's session document (page
 * reload, reconnect): the server is the only authority.  Slice indices
 * center on the seed when one exists, else on the volume middle.
 */
export function stateFromServer(
  doc: SessionDocument,
  geometry: Geometry,
): ViewerState {
  const state = initialViewerState();
  state.volumeId = doc.volume_id;
  state.sessionId = doc.session_id;
  state.geometry = geometry;
  state.seed = doc.seed;
  state.borderSeeds = [...doc.border_seeds];
  state.committedMasks = [...doc.committed_masks];
  for (const plane of PLANES) {
    state.sliceIndex[plane] = doc.seed
      ? worldToSliceIndex(geometry, plane, doc.seed)
      : Math.floor(sliceCount(geometry, plane) / 2);
  }
  return state;
}

export function applySummary(
  state: ViewerState,
  summary: SegmentationSummary,
): void {
  state.seed = summary.seed;
  state.volumeMm3 = summary.volume_mm3;
  state.elapsedMs = summary.elapsed_ms;
}

/** Apply a live result: readouts plus the overlays it carries. */
export function applyLiveResult(state: ViewerState, reply: LiveResult): void {
  applySummary(state, reply);
  for (const overlay of reply.contours) {
    state.overlays[overlay.plane] = overlay;
  }
}

export function setOverlay(state: ViewerState, overlay: ContourOverlay): void {
  state.overlays[overlay.plane] = overlay;
}

/** Overlays become stale (still drawn, visually flagged) during a drag. */
export function overlayStale(state: ViewerState): boolean {
  return state.dragInFlight;
}
