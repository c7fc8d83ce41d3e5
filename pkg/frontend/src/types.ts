export type Plane = 'axial' | 'sagittal' | 'coronal';

export const PLANES: Plane[] = ['axial', 'sagittal', 'coronal'];

export interface Geometry {
  dims: [number, number, number];
  spacing: [number, number, number];
  origin: [number, number, number];
}

export interface ContourOverlay {
  plane: Plane;
  slice_index: number;
  polylines: [number, number][][];
  seed: [number, number] | null;
  border_seeds: [number, number][];
  empty: boolean;
}

export interface SegmentationSummary {
  session_id: string;
  seed: [number, number, number];
  border_seed_count: number;
  voxel_count: number;
  volume_mm3: number;
  avg_used: number;
  tau_used: number;
  elapsed_ms: number;
  cut_k: number[];
  cut_radius_mm: { min: number; max: number; mean: number };
}

export interface SessionDocument {
  session_id: string;
  volume_id: string;
  params: Record<string, unknown>;
  seed: [number, number, number] | null;
  border_seeds: [number, number, number][];
  committed_masks: string[];
}

export interface LiveResult extends SegmentationSummary {
  type: 'result';
  request_id: number;
  contours: ContourOverlay[];
}

export interface LiveSuperseded {
  type: 'superseded';
  request_id: number;
}

export interface LiveError {
  type: 'error';
  request_id?: number;
  message: string;
}

export type LiveReply = LiveResult | LiveSuperseded | LiveError;

export interface MetricsReply {
  dsc: number;
  dsc_percent: number;
  reference_voxels: number;
  reference_volume_mm3: number;
  segmentation_voxels: number;
  segmentation_volume_mm3: number;
}
