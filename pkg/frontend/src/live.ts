import type { LiveReply, LiveResult, Plane } from './types.js';

export interface SliceSubscription {
  plane: Plane;
  index: number;
}

export interface LiveHandlers {
  // Called only for results newer than anything rendered before.
  onResult: (reply: LiveResult) => void;
  onError?: (message: string) => void;
  onStatusChange?: (inFlight: boolean) => void;
  // Fired after a (re)connect so the owner can resync state.
  onOpen?: () => void;
}

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

/**
 * Seed-drag channel with latest-wins rendering.
 *
 * Every outgoing seed move gets a monotonically increasing request id;
 * replies are delivered to the owner only when their id is newer than
 * the newest already-rendered one, so a rapid drag can never paint an
 * overlay older than what is already on screen.  The channel reconnects
 * with a short backoff and replays the slice subscriptions.
 */
export class LiveChannel {
  private ws: WebSocketLike | null = null;
  private nextRequestId = 1;
  private lastRenderedId = 0;
  private lastSentId = 0;
  private subscriptions: SliceSubscription[] = [];
  private closed = false;
  private reconnectDelayMs = 250;

  constructor(
    private readonly url: string,
    private readonly handlers: LiveHandlers,
    private readonly factory: WebSocketFactory,
    private readonly scheduleReconnect: (fn: () => void, ms: number) => void
      = (fn, ms) => { setTimeout(fn, ms); },
  ) {
    this.connect();
  }

  get inFlight(): boolean {
    return this.lastSentId > this.lastRenderedId;
  }

  private connect(): void {
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.reconnectDelayMs = 250;
      if (this.subscriptions.length > 0) {
        ws.send(JSON.stringify({ type: 'subscribe', slices: this.subscriptions }));
      }
      this.handlers.onOpen?.();
    };
    ws.onmessage = (ev) => this.handleMessage(ev.data);
    ws.onclose = () => {
      this.ws = null;
      if (!this.closed) {
        this.scheduleReconnect(() => this.connect(), this.reconnectDelayMs);
        this.reconnectDelayMs = Math.min(this.reconnectDelayMs * 2, 5000);
      }
    };
  }

  subscribe(slices: SliceSubscription[]): void {
    this.subscriptions = slices;
    this.ws?.send(JSON.stringify({ type: 'subscribe', slices }));
  }

  /** Send a seed move; returns its request id (0 when disconnected). */
  sendSeed(x: number, y: number, z: number): number {
    if (!this.ws) return 0;
    const requestId = this.nextRequestId++;
    this.lastSentId = requestId;
    this.ws.send(JSON.stringify({ type: 'seed', request_id: requestId, x, y, z }));
    this.handlers.onStatusChange?.(this.inFlight);
    return requestId;
  }

  private handleMessage(text: string): void {
    let reply: LiveReply;
    try {
      reply = JSON.parse(text) as LiveReply;
    } catch {
      this.handlers.onError?.('unparseable frame from server');
      return;
    }
    if (reply.type === 'error') {
      this.handlers.onError?.(reply.message);
      return;
    }
    const id = reply.request_id;
    if (reply.type === 'result') {
      if (id > this.lastRenderedId) {
        this.lastRenderedId = id;
        this.handlers.onResult(reply);
      }
    } else if (id > this.lastRenderedId - 1 && id === this.lastSentId) {
      // The newest request was answered as superseded (it never is under
      // latest-wins, but a well-behaved client treats it as settled).
      this.lastRenderedId = Math.max(this.lastRenderedId, id);
    }
    this.handlers.onStatusChange?.(this.inFlight);
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
    this.ws = null;
  }
}
