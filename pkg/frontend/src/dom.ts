// Thin DOM bindings. The fetched PNG bytes are handed to an <img> through a
// blob URL, unmodified, so what the browser decodes is exactly what the
// service sent.

import { Banner, ImageSink } from "./panels.js";

export class ImgSink implements ImageSink {
  lastBytes: Uint8Array | null = null;
  private url: string | null = null;

  constructor(private readonly img: HTMLImageElement) {}

  show(bytes: Uint8Array): void {
    this.lastBytes = bytes;
    if (this.url) URL.revokeObjectURL(this.url);
    this.url = URL.createObjectURL(new Blob([bytes.buffer as ArrayBuffer], { type: "image/png" }));
    this.img.src = this.url;
  }
}

export class BannerBar implements Banner {
  constructor(private readonly el: HTMLElement) {}

  error(message: string): void {
    this.el.textContent = message;
    this.el.classList.add("visible");
    setTimeout(() => this.el.classList.remove("visible"), 4000);
  }
}

/** Pointer-drag tracking over the hemisphere widget, in [-1, 1] coords. */
export function trackDrag(
  el: HTMLElement,
  onPoint: (u: number, v: number) => void,
): void {
  let dragging = false;
  const report = (ev: PointerEvent) => {
    const r = el.getBoundingClientRect();
    const u = ((ev.clientX - r.left) / r.width) * 2 - 1;
    const v = 1 - ((ev.clientY - r.top) / r.height) * 2;
    onPoint(u, v);
  };
  el.addEventListener("pointerdown", (ev) => {
    dragging = true;
    el.setPointerCapture(ev.pointerId);
    report(ev);
  });
  el.addEventListener("pointermove", (ev) => {
    if (dragging) report(ev);
  });
  el.addEventListener("pointerup", () => {
    dragging = false;
  });
}
