// Typed client for the volume service API. The transport is injected so
// tests can replay recorded fixture responses byte for byte.

export interface HttpResponse {
  status: number;
  bytes: Uint8Array;
}

export type Http = (url: string) => Promise<HttpResponse>;

export interface GridInfo {
  scheme: string;
  param: number;
  n_cells: number;
}

export interface VolumeInfo {
  id: string;
  kind: string;
  dims: [number, number, number];
  spacing: number;
  grid: GridInfo | null;
}

export interface ScalarVoxel {
  kind: string;
  value: number;
  empty: boolean;
}

export interface TensorVoxel {
  kind: string;
  coeffs: number[];
  valid: boolean;
}

export interface SphericalCell {
  k: number;
  direction: [number, number, number];
  value: number;
}

export interface SphericalVoxel {
  kind: string;
  cells: SphericalCell[];
}

export type VoxelPayload = ScalarVoxel | TensorVoxel | SphericalVoxel;

export class ApiError extends Error {
  constructor(public readonly status: number, url: string) {
    super(`request failed with ${status}: ${url}`);
  }
}

const decoder = new TextDecoder();

export class ApiClient {
  constructor(
    private readonly http: Http,
    private readonly base: string = "",
  ) {}

  private async json<T>(url: string): Promise<T> {
    const r = await this.http(this.base + url);
    if (r.status !== 200) throw new ApiError(r.status, url);
    return JSON.parse(decoder.decode(r.bytes)) as T;
  }

  private async png(url: string): Promise<Uint8Array> {
    const r = await this.http(this.base + url);
    if (r.status !== 200) throw new ApiError(r.status, url);
    return r.bytes;
  }

  listVolumes(): Promise<VolumeInfo[]> {
    return this.json("/api/volumes");
  }

  sliceUrl(id: string, plane: string, index: number, mode: string): string {
    return `/api/volumes/${id}/slice?plane=${plane}&index=${index}&mode=${mode}`;
  }

  fetchSlice(id: string, plane: string, index: number, mode: string): Promise<Uint8Array> {
    return this.png(this.sliceUrl(id, plane, index, mode));
  }

  freeviewUrl(id: string, d: [number, number, number], plane: string, index: number): string {
    return `/api/volumes/${id}/freeview?dx=${d[0]}&dy=${d[1]}&dz=${d[2]}&plane=${plane}&index=${index}`;
  }

  fetchFreeview(
    id: string, d: [number, number, number], plane: string, index: number,
  ): Promise<Uint8Array> {
    return this.png(this.freeviewUrl(id, d, plane, index));
  }

  fetchVoxel(id: string, x: number, y: number, z: number): Promise<VoxelPayload> {
    return this.json(`/api/volumes/${id}/voxel?x=${x}&y=${y}&z=${z}`);
  }
}

/** Adapter from the browser fetch API to the injected transport shape. */
export function browserHttp(base = ""): Http {
  return async (url: string) => {
    const r = await fetch(base + url);
    return { status: r.status, bytes: new Uint8Array(await r.arrayBuffer()) };
  };
}
