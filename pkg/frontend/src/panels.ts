// Panel logic, DOM-free: each panel talks to the API client and pushes the
// fetched PNG bytes verbatim into an injected sink. Rendering the bytes is
// the DOM layer's job (src/dom.ts); keeping them untouched here is what the
// golden byte-equality tests pin down.

import { ApiClient, SphericalVoxel, VolumeInfo, VoxelPayload } from "./api.js";
import { Vec3, normalize } from "./direction.js";
import { Debouncer, LatestGate } from "./sequence.js";

export interface ImageSink {
  show(bytes: Uint8Array): void;
}

export interface Banner {
  error(message: string): void;
}

const silentBanner: Banner = { error: () => undefined };

export class VolumePicker {
  volumes: VolumeInfo[] = [];
  selected: VolumeInfo | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly onSelect: (v: VolumeInfo) => void,
    private readonly banner: Banner = silentBanner,
  ) {}

  async load(): Promise<VolumeInfo[]> {
    try {
      this.volumes = await this.api.listVolumes();
    } catch (e) {
      this.banner.error(`failed to list volumes: ${e}`);
      this.volumes = [];
    }
    return this.volumes;
  }

  select(id: string): void {
    const v = this.volumes.find((x) => x.id === id);
    if (!v) {
      this.banner.error(`unknown volume ${id}`);
      return;
    }
    this.selected = v;
    this.onSelect(v);
  }
}

export class SlicePanel {
  index = 0;
  mode = "mean";
  private volume: VolumeInfo | null = null;
  private readonly gate = new LatestGate();

  constructor(
    private readonly api: ApiClient,
    private readonly sink: ImageSink,
    public plane: string = "axial",
    private readonly banner: Banner = silentBanner,
  ) {}

  /** Number of slices along the scrub axis for the current volume. */
  maxIndex(): number {
    if (!this.volume) return 0;
    const axis = this.plane === "axial" ? 2 : 0;
    return this.volume.dims[axis] - 1;
  }

  async setVolume(v: VolumeInfo, mode: string): Promise<void> {
    this.volume = v;
    this.mode = mode;
    this.index = Math.min(this.index, this.maxIndex());
    await this.refresh();
  }

  /**
   * Scrub to an index; values beyond the volume clamp. Returns whether a
   * request was issued (a scrub that clamps back to the current index is a
   * no-op and must not refetch).
   */
  async setIndex(i: number): Promise<boolean> {
    if (!this.volume) return false;
    const clamped = Math.max(0, Math.min(this.maxIndex(), i));
    if (clamped === this.index) return false;
    this.index = clamped;
    await this.refresh();
    return true;
  }

  scrub(delta: number): Promise<boolean> {
    return this.setIndex(this.index + delta);
  }

  private async refresh(): Promise<void> {
    if (!this.volume) return;
    const seq = this.gate.next();
    try {
      const bytes = await this.api.fetchSlice(this.volume.id, this.plane, this.index, this.mode);
      if (this.gate.isCurrent(seq)) this.sink.show(bytes);
    } catch (e) {
      this.banner.error(`slice fetch failed: ${e}`);
    }
  }
}

export class FreeviewPanel {
  direction: Vec3 | null = null;
  index = 0;
  private volume: VolumeInfo | null = null;
  private readonly gate = new LatestGate();

  constructor(
    private readonly api: ApiClient,
    private readonly sink: ImageSink,
    private readonly referenceSink: ImageSink,
    public plane: string = "axial",
    private readonly debouncer: Debouncer = new Debouncer(),
    private readonly banner: Banner = silentBanner,
  ) {}

  /**
   * Activate a volume; the side-by-side reference pane shows the image for
   * the acquisition direction so free-view choices can be compared with it.
   */
  async setVolume(v: VolumeInfo, index: number, referenceDirection: Vec3): Promise<void> {
    this.volume = v;
    this.index = index;
    try {
      const bytes = await this.api.fetchFreeview(
        v.id, normalize(referenceDirection), this.plane, index,
      );
      this.referenceSink.show(bytes);
    } catch (e) {
      this.banner.error(`reference fetch failed: ${e}`);
    }
  }

  /** Debounced: rapid drags collapse to at most one request per interval. */
  setDirection(d: Vec3): void {
    this.direction = normalize(d);
    this.debouncer.run(() => void this.fetchCurrent());
  }

  private async fetchCurrent(): Promise<void> {
    if (!this.volume || !this.direction) return;
    const seq = this.gate.next();
    try {
      const bytes = await this.api.fetchFreeview(
        this.volume.id, this.direction, this.plane, this.index,
      );
      if (this.gate.isCurrent(seq)) this.sink.show(bytes);
    } catch (e) {
      this.banner.error(`free-view fetch failed: ${e}`);
    }
  }
}

export interface RoseSegment {
  u: number; // widget-plane components of the cell direction
  v: number;
  length: number; // value-scaled radius
  value: number;
}

export class VoxelInspector {
  payload: VoxelPayload | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly banner: Banner = silentBanner,
  ) {}

  async inspect(volumeId: string, x: number, y: number, z: number): Promise<VoxelPayload | null> {
    try {
      this.payload = await this.api.fetchVoxel(volumeId, x, y, z);
    } catch (e) {
      this.banner.error(`voxel fetch failed: ${e}`);
      this.payload = null;
    }
    return this.payload;
  }

  /**
   * Project the non-empty cell directions of a spherical voxel onto the
   * plane spanned by (e1, e2), with lengths proportional to the cell value;
   * the drawing layer renders these as a directional rose.
   */
  roseSegments(payload: SphericalVoxel, e1: Vec3, e2: Vec3, radius = 1.0): RoseSegment[] {
    const b1 = normalize(e1);
    const b2 = normalize(e2);
    const maxValue = Math.max(...payload.cells.map((c) => c.value), 1e-12);
    return payload.cells.map((c) => {
      const d = normalize(c.direction);
      return {
        u: d[0] * b1[0] + d[1] * b1[1] + d[2] * b1[2],
        v: d[0] * b2[0] + d[1] * b2[1] + d[2] * b2[2],
        length: (radius * c.value) / maxValue,
        value: c.value,
      };
    });
  }
}
