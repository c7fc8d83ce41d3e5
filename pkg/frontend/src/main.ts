import { ApiClient } from './api.js';
import {
  clampToVolume,
  imageSize,
  pixelToWorld,
  sliceCount,
  worldToSliceIndex,
} from './coords.js';
import { LiveChannel } from './live.js';
import { drawOverlay } from './overlay.js';
import {
  applyLiveResult,
  applySummary,
  initialViewerState,
  setOverlay,
  stateFromServer,
  WINDOW_PRESETS,
} from './state.js';
import type {
  ContourOverlay,
  Geometry,
  Plane,
  SegmentationSummary,
} from './types.js';
import { PLANES } from './types.js';

const CANVAS_SCALE = 5;

class PlaneView {
  readonly canvas: HTMLCanvasElement;
  readonly slider: HTMLInputElement;
  readonly label: HTMLElement;
  private image: HTMLImageElement | null = null;

  constructor(readonly plane: Plane, container: HTMLElement) {
    const panel = document.createElement('div');
    panel.className = 'plane-panel';
    panel.innerHTML = `
      <div class="plane-title">${plane}
        <span class="slice-label"></span></div>
      <canvas></canvas>
      <input type="range" min="0" max="0" value="0">
    `;
    container.appendChild(panel);
    this.canvas = panel.querySelector('canvas')!;
    this.slider = panel.querySelector('input')!;
    this.label = panel.querySelector('.slice-label')!;
  }

  setImage(img: HTMLImageElement): void {
    this.image = img;
  }

  draw(overlay: ContourOverlay | undefined, stale: boolean): void {
    const ctx = this.canvas.getContext('2d');
    if (!ctx) return;
    ctx.fillStyle = '#111';
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image && this.image.complete) {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(this.image, 0, 0, this.canvas.width, this.canvas.height);
    }
    if (overlay && overlay.slice_index === Number(this.slider.value)) {
      drawOverlay(ctx, overlay, { stale, scale: CANVAS_SCALE });
    }
  }
}

class ViewerApp {
  private readonly api = new ApiClient();
  private state = initialViewerState();
  private views = new Map<Plane, PlaneView>();
  private live: LiveChannel | null = null;
  private dragging = false;
  private statusEl: HTMLElement;
  private readoutEl: HTMLElement;

  constructor(private readonly root: HTMLElement) {
    this.root.innerHTML = `
      <header>
        <h1>nuggetcut viewer</h1>
        <span id="status" class="status"></span>
      </header>
      <section class="toolbar">
        <label class="file-label">volume (.mhd)
          <input id="volume-file" type="file" accept=".mhd"></label>
        <label>window center
          <input id="win-center" type="range" min="-500" max="1600" value="75">
        </label>
        <label>window width
          <input id="win-width" type="range" min="1" max="2000" value="400">
        </label>
        <span id="presets"></span>
        <button id="clear-borders" disabled>clear border seeds</button>
        <button id="commit" disabled>commit &amp; download</button>
        <label>reference mask id
          <input id="reference-id" type="text" size="22"></label>
        <button id="compute-dsc" disabled>DSC</button>
      </section>
      <section id="planes" class="planes"></section>
      <section id="readout" class="readout">
        click places the seed and drags it live; shift-click adds a border
        seed on the lesion rim
      </section>
    `;
    this.statusEl = this.root.querySelector('#status')!;
    this.readoutEl = this.root.querySelector('#readout')!;
    const planesEl = this.root.querySelector<HTMLElement>('#planes')!;
    for (const plane of PLANES) {
      const view = new PlaneView(plane, planesEl);
      this.views.set(plane, view);
      view.slider.addEventListener('input', () => {
        this.state.sliceIndex[plane] = Number(view.slider.value);
        void this.refreshPlane(plane);
      });
      view.canvas.addEventListener('mousedown', (ev) => {
        void this.onCanvasDown(plane, ev);
      });
      view.canvas.addEventListener('mousemove', (ev) => {
        if (this.dragging) this.onCanvasDrag(plane, ev);
      });
      window.addEventListener('mouseup', () => {
        this.dragging = false;
        this.state.dragInFlight = this.live?.inFlight ?? false;
      });
    }
    this.wireToolbar();
  }

  private wireToolbar(): void {
    const fileInput = this.root.querySelector<HTMLInputElement>('#volume-file')!;
    fileInput.addEventListener('change', () => {
      const file = fileInput.files?.[0];
      if (file) void this.loadVolume(file);
    });
    const center = this.root.querySelector<HTMLInputElement>('#win-center')!;
    const width = this.root.querySelector<HTMLInputElement>('#win-width')!;
    const rewindow = () => {
      this.state.windowCenter = Number(center.value);
      this.state.windowWidth = Number(width.value);
      void this.refreshAllPlanes();
    };
    center.addEventListener('change', rewindow);
    width.addEventListener('change', rewindow);
    const presets = this.root.querySelector<HTMLElement>('#presets')!;
    for (const preset of WINDOW_PRESETS) {
      const button = document.createElement('button');
      button.textContent = preset.name;
      button.addEventListener('click', () => {
        center.value = String(preset.center);
        width.value = String(preset.width);
        rewindow();
      });
      presets.appendChild(button);
    }
    this.root.querySelector('#clear-borders')!.addEventListener('click',
      () => void this.clearBorders());
    this.root.querySelector('#commit')!.addEventListener('click',
      () => void this.commit());
    this.root.querySelector('#compute-dsc')!.addEventListener('click',
      () => void this.computeDsc());
  }

  private setStatus(text: string, isError = false): void {
    this.statusEl.textContent = text;
    this.statusEl.classList.toggle('error', isError);
    if (isError) {
      setTimeout(() => {
        if (this.statusEl.textContent === text) this.setStatus('');
      }, 6000);
    }
  }

  private async loadVolume(file: File): Promise<void> {
    try {
      this.setStatus('uploading volume...');
      const volumeId = await this.api.uploadVolume(await file.arrayBuffer());
      const meta = await this.api.volumeMeta(volumeId);
      const geometry: Geometry = {
        dims: meta.dims as Geometry['dims'],
        spacing: meta.spacing as Geometry['spacing'],
        origin: meta.origin as Geometry['origin'],
      };
      const sessionId = await this.api.createSession(volumeId);
      const doc = await this.api.sessionState(sessionId);
      this.state = stateFromServer(doc, geometry);
      for (const plane of PLANES) {
        const view = this.views.get(plane)!;
        const [w, h] = imageSize(geometry, plane);
        view.canvas.width = w * CANVAS_SCALE;
        view.canvas.height = h * CANVAS_SCALE;
        view.slider.max = String(sliceCount(geometry, plane) - 1);
        view.slider.value = String(this.state.sliceIndex[plane]);
      }
      this.openLiveChannel(sessionId);
      await this.refreshAllPlanes();
      this.enableControls();
      this.setStatus(`session ${sessionId} on ${volumeId}`);
    } catch (err) {
      this.setStatus(`upload failed: ${String(err)}`, true);
    }
  }

  private enableControls(): void {
    for (const id of ['#clear-borders', '#commit', '#compute-dsc']) {
      this.root.querySelector<HTMLButtonElement>(id)!.disabled = false;
    }
  }

  private openLiveChannel(sessionId: string): void {
    this.live?.close();
    this.live = new LiveChannel(
      this.api.liveUrl(sessionId, window.location),
      {
        onResult: (reply) => {
          applyLiveResult(this.state, reply);
          this.state.dragInFlight = this.live?.inFlight ?? false;
          this.updateReadout(reply);
          this.redrawOverlays();
        },
        onError: (message) => this.setStatus(message, true),
        onStatusChange: (inFlight) => {
          this.state.dragInFlight = inFlight;
          this.redrawOverlays();
        },
        onOpen: () => void this.resyncFromServer(sessionId),
      },
      (url) => new WebSocket(url) as unknown as
        import('./live.js').WebSocketLike,
    );
  }

  /** After connect / reconnect the server state is re-fetched so the UI
   *  never trusts client-only state. */
  private async resyncFromServer(sessionId: string): Promise<void> {
    try {
      const doc = await this.api.sessionState(sessionId);
      if (!this.state.geometry) return;
      const geometry = this.state.geometry;
      const windowCenter = this.state.windowCenter;
      const windowWidth = this.state.windowWidth;
      this.state = stateFromServer(doc, geometry);
      this.state.windowCenter = windowCenter;
      this.state.windowWidth = windowWidth;
      this.subscribeVisibleSlices();
      await this.refreshAllPlanes();
    } catch (err) {
      this.setStatus(`resync failed: ${String(err)}`, true);
    }
  }

  private subscribeVisibleSlices(): void {
    this.live?.subscribe(PLANES.map((plane) => ({
      plane,
      index: this.state.sliceIndex[plane],
    })));
  }

  private canvasToWorld(
    plane: Plane,
    ev: MouseEvent,
  ): [number, number, number] | null {
    if (!this.state.geometry) return null;
    const view = this.views.get(plane)!;
    const rect = view.canvas.getBoundingClientRect();
    const u = ((ev.clientX - rect.left) / rect.width)
      * view.canvas.width / CANVAS_SCALE - 0.5;
    const v = ((ev.clientY - rect.top) / rect.height)
      * view.canvas.height / CANVAS_SCALE - 0.5;
    const world = pixelToWorld(this.state.geometry, plane,
                               this.state.sliceIndex[plane], u, v);
    return clampToVolume(this.state.geometry, world);
  }

  private async onCanvasDown(plane: Plane, ev: MouseEvent): Promise<void> {
    const world = this.canvasToWorld(plane, ev);
    if (!world || !this.state.sessionId) return;
    if (ev.shiftKey) {
      try {
        const summary = await this.api.addBorderSeed(this.state.sessionId,
                                                     world);
        this.state.borderSeeds.push(world);
        applySummary(this.state, summary);
        this.updateReadout(summary);
        await this.refreshOverlays();
      } catch (err) {
        this.setStatus(`border seed rejected: ${String(err)}`, true);
      }
      return;
    }
    this.dragging = true;
    this.subscribeVisibleSlices();
    this.live?.sendSeed(world[0], world[1], world[2]);
    this.redrawOverlays();
  }

  private onCanvasDrag(plane: Plane, ev: MouseEvent): void {
    const world = this.canvasToWorld(plane, ev);
    if (world) {
      this.live?.sendSeed(world[0], world[1], world[2]);
      this.redrawOverlays();
    }
  }

  private async clearBorders(): Promise<void> {
    if (!this.state.sessionId) return;
    try {
      await this.api.clearBorderSeeds(this.state.sessionId);
      this.state.borderSeeds = [];
      await this.refreshOverlays();
      this.setStatus('border seeds cleared');
    } catch (err) {
      this.setStatus(String(err), true);
    }
  }

  private async commit(): Promise<void> {
    if (!this.state.sessionId) return;
    try {
      const maskId = await this.api.commit(this.state.sessionId);
      this.state.committedMasks.push(maskId);
      this.setStatus(`committed ${maskId}`);
      const link = document.createElement('a');
      link.href = this.api.maskUrl(maskId);
      link.download = `${maskId}.mhd`;
      link.click();
    } catch (err) {
      this.setStatus(`commit failed: ${String(err)}`, true);
    }
  }

  private async computeDsc(): Promise<void> {
    const reference = this.root
      .querySelector<HTMLInputElement>('#reference-id')!.value.trim();
    if (!reference || !this.state.sessionId) return;
    try {
      const metrics = await this.api.metrics(this.state.sessionId, reference);
      this.setStatus(
        `DSC ${metrics.dsc_percent.toFixed(2)} % against ${reference}`);
    } catch (err) {
      this.setStatus(`metrics failed: ${String(err)}`, true);
    }
  }

  private updateReadout(summary: SegmentationSummary): void {
    const cm3 = summary.volume_mm3 / 1000.0;
    this.readoutEl.textContent =
      `volume ${cm3.toFixed(2)} cm3 (${summary.voxel_count} voxels)  |  ` +
      `avg ${summary.avg_used.toFixed(1)}  tau ${summary.tau_used.toFixed(1)}` +
      `  |  recomputed in ${summary.elapsed_ms.toFixed(0)} ms`;
  }

  private async refreshPlane(plane: Plane): Promise<void> {
    if (!this.state.volumeId || !this.state.geometry) return;
    const view = this.views.get(plane)!;
    const index = this.state.sliceIndex[plane];
    view.label.textContent = ` ${index}`;
    const img = new Image();
    img.onload = () => {
      view.setImage(img);
      view.draw(this.state.overlays[plane], this.state.dragInFlight);
    };
    img.src = this.api.sliceUrl(this.state.volumeId, plane, index,
                                this.state.windowCenter,
                                this.state.windowWidth);
    this.subscribeVisibleSlices();
    if (this.state.sessionId && this.state.seed) {
      try {
        const overlay = await this.api.contour(this.state.sessionId, plane,
                                               index);
        setOverlay(this.state, overlay);
        view.draw(overlay, this.state.dragInFlight);
      } catch {
        // no contour yet (no seed or slice outside mask): keep the image
      }
    }
  }

  private refreshAllPlanes(): Promise<void[]> {
    return Promise.all(PLANES.map((plane) => this.refreshPlane(plane)));
  }

  private async refreshOverlays(): Promise<void> {
    for (const plane of PLANES) {
      if (!this.state.sessionId) break;
      try {
        const overlay = await this.api.contour(
          this.state.sessionId, plane, this.state.sliceIndex[plane]);
        setOverlay(this.state, overlay);
      } catch {
        // slice without contour
      }
    }
    this.redrawOverlays();
  }

  private redrawOverlays(): void {
    for (const plane of PLANES) {
      this.views.get(plane)!.draw(this.state.overlays[plane],
                                  this.state.dragInFlight);
    }
  }
}

const root = document.getElementById('app');
if (root) {
  new ViewerApp(root);
}
