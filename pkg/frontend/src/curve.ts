/**
 * Client-side trajectory math for previews: weighted curve evaluation via the
 * projective de Casteljau recursion plus quaternion helpers. Deliberately a
 * separate implementation from the server's closed-form evaluation, so the
 * streamed desired points double as a cross-check of the preview.
 */

export type Vec3 = [number, number, number];
export type QuatWXYZ = [number, number, number, number];

/** Weighted curve point by homogeneous de Casteljau at phase t in [0, 1]. */
export function curvePoint(points: number[][], weights: number[], t: number): Vec3 {
  const n = points.length;
  if (weights.length !== n || n < 2) throw new Error("need one weight per control point");
  if (t < 0 || t > 1) throw new Error(`phase ${t} outside [0, 1]`);
  const h: number[][] = points.map((p, i) => [
    p[0] * weights[i],
    p[1] * weights[i],
    p[2] * weights[i],
    weights[i],
  ]);
  for (let m = n - 1; m > 0; m--) {
    for (let i = 0; i < m; i++) {
      for (let k = 0; k < 4; k++) h[i][k] = (1 - t) * h[i][k] + t * h[i + 1][k];
    }
  }
  return [h[0][0] / h[0][3], h[0][1] / h[0][3], h[0][2] / h[0][3]];
}

export function sampleCurve(points: number[][], weights: number[], count = 64): Vec3[] {
  const out: Vec3[] = [];
  for (let i = 0; i < count; i++) out.push(curvePoint(points, weights, i / (count - 1)));
  return out;
}

export function quatNormalize(q: QuatWXYZ): QuatWXYZ {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  if (n < 1e-12) throw new Error("zero-norm quaternion");
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export function quatRotate(q: QuatWXYZ, v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  const tx = 2 * (y * v[2] - z * v[1]);
  const ty = 2 * (z * v[0] - x * v[2]);
  const tz = 2 * (x * v[1] - y * v[0]);
  return [
    v[0] + w * tx + y * tz - z * ty,
    v[1] + w * ty + z * tx - x * tz,
    v[2] + w * tz + x * ty - y * tx,
  ];
}

export function slerp(a: QuatWXYZ, b: QuatWXYZ, t: number): QuatWXYZ {
  const qa = quatNormalize(a);
  let qb = quatNormalize(b);
  let dot = qa[0] * qb[0] + qa[1] * qb[1] + qa[2] * qb[2] + qa[3] * qb[3];
  if (dot < 0) {
    qb = [-qb[0], -qb[1], -qb[2], -qb[3]];
    dot = -dot;
  }
  dot = Math.min(1, dot);
  const theta = Math.acos(dot);
  if (theta < 1e-6) {
    return quatNormalize([
      (1 - t) * qa[0] + t * qb[0],
      (1 - t) * qa[1] + t * qb[1],
      (1 - t) * qa[2] + t * qb[2],
      (1 - t) * qa[3] + t * qb[3],
    ]);
  }
  const s = Math.sin(theta);
  const ka = Math.sin((1 - t) * theta) / s;
  const kb = Math.sin(t * theta) / s;
  return [
    ka * qa[0] + kb * qb[0],
    ka * qa[1] + kb * qb[1],
    ka * qa[2] + kb * qb[2],
    ka * qa[3] + kb * qb[3],
  ];
}

/**
 * Orientation from the hemisphere widget: yaw about z, tilt about y with
 * cos(tilt) in [0, 1], then spin about the direction axis (the same
 * construction the parameter sampler uses).
 */
export function hemisphereQuat(yaw: number, cosTilt: number, spin: number): QuatWXYZ {
  const tilt = Math.acos(Math.max(0, Math.min(1, cosTilt)));
  const qz = axisAngle([0, 0, 1], yaw);
  const qy = axisAngle([0, 1, 0], tilt);
  const qs = axisAngle([0, 0, 1], spin);
  return quatMul(quatMul(qz, qy), qs);
}

export function axisAngle(axis: Vec3, angle: number): QuatWXYZ {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  const s = Math.sin(angle / 2) / n;
  return [Math.cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s];
}

export function quatMul(a: QuatWXYZ, b: QuatWXYZ): QuatWXYZ {
  const [w1, x1, y1, z1] = a;
  const [w2, x2, y2, z2] = b;
  return quatNormalize([
    w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
    w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
    w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
    w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
  ]);
}
