// Fixture-backed transport: replays the recorded service responses (see
// scripts/make_viewer_fixtures.py at the repository root) byte for byte.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { Http, HttpResponse } from "../src/api.js";
import { ImageSink } from "../src/panels.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export interface FreeviewCase {
  direction: [number, number, number];
  file: string;
}

export interface Manifest {
  freeview: {
    volume: string;
    plane: string;
    index: number;
    cases: FreeviewCase[];
    reference: FreeviewCase;
  };
  slice: {
    volume: string;
    plane: string;
    mode: string;
    index: number;
    file: string;
    second_index: number;
    second_file: string;
  };
  voxel: { volume: string; x: number; y: number; z: number; file: string };
}

export const manifest: Manifest = JSON.parse(
  readFileSync(join(FIXTURES, "manifest.json"), "utf-8"),
);

export function fixtureBytes(name: string): Uint8Array {
  return new Uint8Array(readFileSync(join(FIXTURES, name)));
}

function ok(bytes: Uint8Array): HttpResponse {
  return { status: 200, bytes };
}

function matchDirection(params: URLSearchParams): FreeviewCase | undefined {
  const d = [Number(params.get("dx")), Number(params.get("dy")), Number(params.get("dz"))];
  const all = [...manifest.freeview.cases, manifest.freeview.reference];
  return all.find(
    (c) => Math.hypot(c.direction[0] - d[0], c.direction[1] - d[1], c.direction[2] - d[2]) < 1e-9,
  );
}

/** In-process stand-in for the fixture service; counts requests per route. */
export function fixtureService(): { http: Http; calls: string[] } {
  const calls: string[] = [];
  const http: Http = async (url: string) => {
    calls.push(url);
    const u = new URL(url, "http://fixture");
    if (u.pathname === "/api/volumes") return ok(fixtureBytes("volumes.json"));
    const freeview = u.pathname.match(/^\/api\/volumes\/(\w+)\/freeview$/);
    if (freeview && freeview[1] === manifest.freeview.volume) {
      if (Number(u.searchParams.get("index")) !== manifest.freeview.index) {
        return { status: 404, bytes: new Uint8Array() };
      }
      const hit = matchDirection(u.searchParams);
      return hit ? ok(fixtureBytes(hit.file)) : { status: 404, bytes: new Uint8Array() };
    }
    const slice = u.pathname.match(/^\/api\/volumes\/(\w+)\/slice$/);
    if (slice && slice[1] === manifest.slice.volume) {
      const idx = Number(u.searchParams.get("index"));
      if (idx === manifest.slice.index) return ok(fixtureBytes(manifest.slice.file));
      if (idx === manifest.slice.second_index) return ok(fixtureBytes(manifest.slice.second_file));
      return { status: 400, bytes: new Uint8Array() };
    }
    const voxel = u.pathname.match(/^\/api\/volumes\/(\w+)\/voxel$/);
    if (voxel && voxel[1] === manifest.voxel.volume) return ok(fixtureBytes(manifest.voxel.file));
    return { status: 404, bytes: new Uint8Array() };
  };
  return { http, calls };
}

/** Records what the viewer would hand to the canvas/img element. */
export class RecordingSink implements ImageSink {
  shown: Uint8Array[] = [];

  show(bytes: Uint8Array): void {
    this.shown.push(bytes);
  }

  get last(): Uint8Array | null {
    return this.shown.length ? this.shown[this.shown.length - 1] : null;
  }
}

export function bytesEqual(a: Uint8Array | null, b: Uint8Array): boolean {
  if (!a || a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) if (a[i] !== b[i]) return false;
  return true;
}

/** Drain the microtask queue so in-flight fetch chains settle. */
export async function settle(ticks = 25): Promise<void> {
  for (let i = 0; i < ticks; i++) await Promise.resolve();
}

/** A debounce scheduler that fires synchronously on demand. */
export class ManualScheduler {
  private pending: (() => void) | null = null;

  schedule = (fn: () => void): unknown => {
    this.pending = fn;
    return fn;
  };

  cancel = (): void => {
    this.pending = null;
  };

  flush(): void {
    const fn = this.pending;
    this.pending = null;
    if (fn) fn();
  }
}
