// Viewer round trip against the recorded fixture service: the bytes each
// panel hands to its display sink must equal the goldens byte for byte
// (the goldens were verified equal to the offline renderings when they
// were generated, so viewer == service == offline rendering).

import { describe, expect, it } from "vitest";

import { ApiClient, Http, SphericalVoxel, VolumeInfo } from "../src/api.js";
import { Vec3 } from "../src/direction.js";
import { Debouncer } from "../src/sequence.js";
import { FreeviewPanel, SlicePanel, VolumePicker, VoxelInspector } from "../src/panels.js";
import {
  ManualScheduler,
  RecordingSink,
  bytesEqual,
  fixtureBytes,
  fixtureService,
  manifest,
  settle,
} from "./helpers.js";

async function pickerWith(http: Http) {
  const api = new ApiClient(http);
  let selected: VolumeInfo | null = null;
  const picker = new VolumePicker(api, (v) => {
    selected = v;
  });
  await picker.load();
  return { api, picker, selected: () => selected };
}

describe("VolumePicker", () => {
  it("lists the service volumes and selects by id", async () => {
    const { picker, selected } = await pickerWith(fixtureService().http);
    expect(picker.volumes.length).toBe(3);
    picker.select(manifest.freeview.volume);
    expect(selected()?.kind).toBe("tensor");
  });

  it("surfaces API failures as a banner, not an exception", async () => {
    const errors: string[] = [];
    const api = new ApiClient(async () => ({ status: 500, bytes: new Uint8Array() }));
    const picker = new VolumePicker(api, () => undefined, { error: (m) => void errors.push(m) });
    await picker.load();
    expect(picker.volumes).toEqual([]);
    expect(errors.length).toBe(1);
  });
});

describe("FreeviewPanel", () => {
  async function freeviewSetup() {
    const svc = fixtureService();
    const { api, picker } = await pickerWith(svc.http);
    const sink = new RecordingSink();
    const refSink = new RecordingSink();
    const sched = new ManualScheduler();
    const panel = new FreeviewPanel(
      api, sink, refSink, manifest.freeview.plane,
      new Debouncer(100, sched.schedule, sched.cancel),
    );
    const volume = picker.volumes.find((v) => v.id === manifest.freeview.volume)!;
    await panel.setVolume(volume, manifest.freeview.index,
      manifest.freeview.reference.direction);
    return { panel, sink, refSink, sched, calls: svc.calls };
  }

  it("shows the acquisition-direction reference image verbatim", async () => {
    const { refSink } = await freeviewSetup();
    expect(bytesEqual(refSink.last, fixtureBytes(manifest.freeview.reference.file))).toBe(true);
  });

  it("renders the three scripted directions byte-equal to the offline goldens", async () => {
    const { panel, sink, sched } = await freeviewSetup();
    for (const c of manifest.freeview.cases) {
      panel.setDirection(c.direction as Vec3);
      sched.flush();
      await settle();
      expect(bytesEqual(sink.last, fixtureBytes(c.file))).toBe(true);
    }
    expect(sink.shown.length).toBe(manifest.freeview.cases.length);
  });

  it("debounces a drag burst into a single request", async () => {
    const { panel, sink, sched, calls } = await freeviewSetup();
    const before = calls.length;
    for (let i = 0; i < 20; i++) {
      panel.setDirection(manifest.freeview.cases[0].direction as Vec3);
    }
    sched.flush();
    await settle();
    expect(calls.length - before).toBe(1);
    expect(sink.shown.length).toBe(1);
  });

  it("discards stale responses when fetches complete out of order", async () => {
    const first = manifest.freeview.cases[1]; // distinct non-zero dx components
    const second = manifest.freeview.cases[2];
    let releaseFirst: (() => void) | null = null;
    const inner = fixtureService().http;
    const http: Http = async (url) => {
      const u = new URL(url, "http://x");
      if (u.searchParams.get("dx") === String(first.direction[0]) &&
          u.pathname.endsWith("/freeview")) {
        await new Promise<void>((resolve) => {
          releaseFirst = resolve;
        });
      }
      return inner(url);
    };
    const api = new ApiClient(http);
    const sink = new RecordingSink();
    const refSink = new RecordingSink();
    const sched = new ManualScheduler();
    const panel = new FreeviewPanel(
      api, sink, refSink, manifest.freeview.plane,
      new Debouncer(100, sched.schedule, sched.cancel),
    );
    const volumes = await api.listVolumes();
    await panel.setVolume(
      volumes.find((v) => v.id === manifest.freeview.volume)!,
      manifest.freeview.index, manifest.freeview.reference.direction,
    );
    panel.setDirection(first.direction as Vec3);
    sched.flush(); // first request now hangs
    panel.setDirection(second.direction as Vec3);
    sched.flush();
    await settle();
    expect(bytesEqual(sink.last, fixtureBytes(second.file))).toBe(true);
    releaseFirst!();
    await settle();
    // the late first response must not replace the newer image
    expect(bytesEqual(sink.last, fixtureBytes(second.file))).toBe(true);
    expect(sink.shown.length).toBe(1);
  });
});

describe("SlicePanel", () => {
  async function sliceSetup() {
    const svc = fixtureService();
    const { api, picker } = await pickerWith(svc.http);
    const sink = new RecordingSink();
    const panel = new SlicePanel(api, sink, manifest.slice.plane);
    const volume = picker.volumes.find((v) => v.id === manifest.slice.volume)!;
    panel.index = manifest.slice.index;
    await panel.setVolume(volume, manifest.slice.mode);
    return { panel, sink, calls: svc.calls, volume };
  }

  it("displays the slice bytes verbatim", async () => {
    const { sink } = await sliceSetup();
    expect(bytesEqual(sink.last, fixtureBytes(manifest.slice.file))).toBe(true);
  });

  it("scrubs to the next slice", async () => {
    const { panel, sink } = await sliceSetup();
    const moved = await panel.scrub(1);
    expect(moved).toBe(true);
    expect(panel.index).toBe(manifest.slice.second_index);
    expect(bytesEqual(sink.last, fixtureBytes(manifest.slice.second_file))).toBe(true);
  });

  it("clamps beyond the last index and issues no request", async () => {
    const { panel, calls, volume } = await sliceSetup();
    await panel.setIndex(volume.dims[2] - 1);
    const before = calls.length;
    const moved = await panel.scrub(5);
    expect(moved).toBe(false);
    expect(panel.index).toBe(volume.dims[2] - 1);
    expect(calls.length).toBe(before);
  });

  it("clamps below zero as well", async () => {
    const { panel, calls } = await sliceSetup();
    await panel.setIndex(0);
    const before = calls.length;
    expect(await panel.scrub(-1)).toBe(false);
    expect(calls.length).toBe(before);
  });
});

describe("VoxelInspector", () => {
  it("fetches the voxel payload and builds a value-scaled rose", async () => {
    const svc = fixtureService();
    const inspector = new VoxelInspector(new ApiClient(svc.http));
    const payload = (await inspector.inspect(
      manifest.voxel.volume, manifest.voxel.x, manifest.voxel.y, manifest.voxel.z,
    )) as SphericalVoxel;
    expect(payload.kind).toBe("spherical");
    expect(payload.cells.length).toBeGreaterThanOrEqual(2);
    const rose = inspector.roseSegments(payload, [1, 0, 0], [0, 0, 1], 10);
    expect(rose.length).toBe(payload.cells.length);
    const maxValue = Math.max(...payload.cells.map((c) => c.value));
    for (let i = 0; i < rose.length; i++) {
      expect(rose[i].length).toBeCloseTo((10 * payload.cells[i].value) / maxValue, 9);
      expect(Math.abs(rose[i].u)).toBeLessThanOrEqual(1 + 1e-12);
      expect(Math.abs(rose[i].v)).toBeLessThanOrEqual(1 + 1e-12);
    }
    // the longest spoke belongs to the strongest cell
    const strongest = rose.reduce((a, b) => (b.length > a.length ? b : a));
    expect(strongest.value).toBeCloseTo(maxValue, 12);
  });
});
