import type {
  ContourOverlay,
  Geometry,
  MetricsReply,
  Plane,
  SegmentationSummary,
  SessionDocument,
} from './types.js';

/** Thin REST client over the segmentation service. */
export class ApiClient {
  constructor(
    private readonly base: string = '',
    private readonly fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = `${response.status}: ${body.detail}`;
      } catch {
        // non-JSON error body; keep the status code
      }
      throw new Error(detail);
    }
    return (await response.json()) as T;
  }

  async uploadVolume(data: ArrayBuffer): Promise<string> {
    const reply = await this.json<{ volume_id: string }>('/volumes', {
      method: 'POST',
      body: data,
      headers: { 'Content-Type': 'application/octet-stream' },
    });
    return reply.volume_id;
  }

  volumeMeta(volumeId: string): Promise<Geometry & { volume_id: string }> {
    return this.json(`/volumes/${volumeId}/meta`);
  }

  sliceUrl(
    volumeId: string,
    plane: Plane,
    index: number,
    center: number,
    width: number,
  ): string {
    return `${this.base}/volumes/${volumeId}/slice?plane=${plane}` +
      `&index=${index}&window_center=${center}&window_width=${width}`;
  }

  async createSession(
    volumeId: string,
    params?: Record<string, unknown>,
  ): Promise<string> {
    const reply = await this.json<{ session_id: string }>('/sessions', {
      method: 'POST',
      body: JSON.stringify({ volume_id: volumeId, params }),
      headers: { 'Content-Type': 'application/json' },
    });
    return reply.session_id;
  }

  sessionState(sessionId: string): Promise<SessionDocument> {
    return this.json(`/sessions/${sessionId}`);
  }

  putSeed(
    sessionId: string,
    seed: [number, number, number],
  ): Promise<SegmentationSummary> {
    return this.json(`/sessions/${sessionId}/seed`, {
      method: 'PUT',
      body: JSON.stringify({ x: seed[0], y: seed[1], z: seed[2] }),
      headers: { 'Content-Type': 'application/json' },
    });
  }

  addBorderSeed(
    sessionId: string,
    point: [number, number, number],
  ): Promise<SegmentationSummary> {
    return this.json(`/sessions/${sessionId}/border-seeds`, {
      method: 'POST',
      body: JSON.stringify({ x: point[0], y: point[1], z: point[2] }),
      headers: { 'Content-Type': 'application/json' },
    });
  }

  clearBorderSeeds(sessionId: string): Promise<unknown> {
    return this.json(`/sessions/${sessionId}/border-seeds`,
                     { method: 'DELETE' });
  }

  contour(
    sessionId: string,
    plane: Plane,
    index: number,
  ): Promise<ContourOverlay> {
    return this.json(
      `/sessions/${sessionId}/contour?plane=${plane}&index=${index}`);
  }

  async commit(sessionId: string): Promise<string> {
    const reply = await this.json<{ mask_id: string }>(
      `/sessions/${sessionId}/commit`, { method: 'POST' });
    return reply.mask_id;
  }

  maskUrl(maskId: string): string {
    return `${this.base}/masks/${maskId}`;
  }

  metrics(sessionId: string, referenceMaskId: string): Promise<MetricsReply> {
    return this.json(
      `/sessions/${sessionId}/metrics?reference=${referenceMaskId}`);
  }

  liveUrl(sessionId: string, loc: Location): string {
    const proto = loc.protocol === 'https:' ? 'wss' : 'ws';
    return `${proto}://${loc.host}${this.base}/sessions/${sessionId}/live`;
  }
}
