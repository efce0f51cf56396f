import { ApiClient, VolumeInfo, browserHttp } from "./api.js";
import { Vec3, diskToDirection, directionToDisk, formatAngles } from "./direction.js";
import { BannerBar, ImgSink, trackDrag } from "./dom.js";
import { FreeviewPanel, SlicePanel, VolumePicker, VoxelInspector } from "./panels.js";

const MODES_BY_KIND: Record<string, string[]> = {
  scalar_mean: ["mean"],
  scalar_median: ["median"],
  tensor: ["trace", "dominant"],
  spherical: ["cell_mean", "cell_max", "normal_color"],
};

const ACQUISITION_DIRECTION: Vec3 = [0, 1, 0]; // beam axis of the probe

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function drawWidget(canvas: HTMLCanvasElement, d: Vec3): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const s = canvas.width;
  ctx.clearRect(0, 0, s, s);
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.arc(s / 2, s / 2, s / 2 - 2, 0, 2 * Math.PI);
  ctx.stroke();
  const [u, v] = directionToDisk(d);
  ctx.fillStyle = "#d33";
  ctx.beginPath();
  ctx.arc(((u + 1) / 2) * s, ((1 - v) / 2) * s, 6, 0, 2 * Math.PI);
  ctx.fill();
}

async function start(): Promise<void> {
  const banner = new BannerBar(el("banner"));
  const api = new ApiClient(browserHttp());
  const freeview = new FreeviewPanel(
    api,
    new ImgSink(el<HTMLImageElement>("freeview-img")),
    new ImgSink(el<HTMLImageElement>("reference-img")),
    "axial",
    undefined,
    banner,
  );
  const slices = new SlicePanel(api, new ImgSink(el<HTMLImageElement>("slice-img")), "axial", banner);
  const inspector = new VoxelInspector(api, banner);
  const widget = el<HTMLCanvasElement>("direction-widget");
  const angles = el("direction-angles");
  const indexLabel = el("slice-index");
  let direction: Vec3 = ACQUISITION_DIRECTION;

  const picker = new VolumePicker(api, (v: VolumeInfo) => {
    const mid = Math.floor(v.dims[2] / 2);
    void slices.setVolume(v, (MODES_BY_KIND[v.kind] ?? ["mean"])[0]);
    indexLabel.textContent = String(slices.index);
    if (v.kind === "tensor" || v.kind === "spherical") {
      void freeview.setVolume(v, mid, ACQUISITION_DIRECTION).then(() => {
        freeview.setDirection(direction);
      });
    }
  }, banner);

  const select = el<HTMLSelectElement>("volume-select");
  for (const v of await picker.load()) {
    const opt = document.createElement("option");
    opt.value = v.id;
    opt.textContent = `${v.id} (${v.kind})`;
    select.appendChild(opt);
  }
  select.addEventListener("change", () => picker.select(select.value));
  if (picker.volumes.length) picker.select(picker.volumes[0].id);

  trackDrag(widget, (u, v) => {
    direction = diskToDirection(u, v);
    angles.textContent = formatAngles(direction);
    drawWidget(widget, direction);
    freeview.setDirection(direction);
  });
  drawWidget(widget, direction);
  angles.textContent = formatAngles(direction);

  document.addEventListener("keydown", (ev) => {
    if (ev.key === "ArrowRight" || ev.key === "ArrowLeft") {
      void slices.scrub(ev.key === "ArrowRight" ? 1 : -1).then(() => {
        indexLabel.textContent = String(slices.index);
      });
    }
  });

  el("slice-img").addEventListener("click", (ev) => {
    const img = ev.target as HTMLImageElement;
    const v = picker.selected;
    if (!v || !img.naturalWidth) return;
    const r = img.getBoundingClientRect();
    const px = Math.floor(((ev.clientX - r.left) / r.width) * img.naturalWidth);
    const py = Math.floor(((ev.clientY - r.top) / r.height) * img.naturalHeight);
    void inspector.inspect(v.id, px, py, slices.index).then((payload) => {
      el("voxel-json").textContent = JSON.stringify(payload, null, 2);
    });
  });
}

void start();
