// Direction-widget math: a draggable point on the projected upper
// hemisphere maps to a unit view direction. Pure functions, no DOM.

export type Vec3 = [number, number, number];

export function normalize(d: Vec3): Vec3 {
  const n = Math.hypot(d[0], d[1], d[2]);
  if (n < 1e-12) throw new Error("cannot normalize a zero direction");
  return [d[0] / n, d[1] / n, d[2] / n];
}

/**
 * Map widget coordinates (u, v) in the unit disk to a unit direction on the
 * upper hemisphere; points outside the disk clamp to the rim (z = 0).
 * Always returns a unit vector.
 */
export function diskToDirection(u: number, v: number): Vec3 {
  const r2 = u * u + v * v;
  if (r2 >= 1.0) {
    const r = Math.sqrt(r2);
    return normalize([u / r, v / r, 0]);
  }
  return normalize([u, v, Math.sqrt(1.0 - r2)]);
}

export function directionToDisk(d: Vec3): [number, number] {
  const u = normalize(d);
  return [u[0], u[1]];
}

/** Elevation from +z and azimuth in the x-y plane, in degrees. */
export function sphericalAngles(d: Vec3): { thetaDeg: number; phiDeg: number } {
  const u = normalize(d);
  const theta = (Math.acos(Math.min(1, Math.max(-1, u[2]))) * 180) / Math.PI;
  let phi = (Math.atan2(u[1], u[0]) * 180) / Math.PI;
  if (phi < 0) phi += 360;
  return { thetaDeg: theta, phiDeg: phi };
}

export function formatAngles(d: Vec3): string {
  const { thetaDeg, phiDeg } = sphericalAngles(d);
  return `θ ${thetaDeg.toFixed(1)}°  φ ${phiDeg.toFixed(1)}°`;
}

/**
 * Saturation of the direction color-map legend: deviation from the main
 * direction over 90 degrees, clamped to [0, 1]. Mirrors the server-side
 * color map so the legend next to the widget matches rendered colors.
 */
export function legendSaturation(d: Vec3, main: Vec3): number {
  const a = normalize(d);
  const b = normalize(main);
  const cos = Math.min(1, Math.max(-1, a[0] * b[0] + a[1] * b[1] + a[2] * b[2]));
  const deg = (Math.acos(cos) * 180) / Math.PI;
  return Math.min(1, Math.max(0, deg / 90));
}
