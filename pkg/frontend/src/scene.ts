/**
 * Scene building and projection: pure geometry in, draw primitives out.
 * Rendering to a canvas happens in main.ts; everything here is testable
 * without a DOM.
 */

import { QuatWXYZ, Vec3, quatRotate, sampleCurve } from "./curve.js";
import { StateFrame, flatPoints, flatWeights } from "./protocol.js";

export interface Camera {
  yaw: number; // radians about world z
  pitch: number; // elevation
  scale: number; // pixels per meter
  cx: number; // screen center
  cy: number;
  targetX: number; // world point the camera looks at
  targetY: number;
}

export interface Segment {
  a: [number, number];
  b: [number, number];
  color: string;
  width?: number;
}

export interface Marker {
  at: [number, number];
  radius: number;
  color: string;
  fill: boolean;
  label?: string;
  handleIndex?: number; // set for draggable control-point handles
}

export interface SceneDrawing {
  segments: Segment[];
  markers: Marker[];
  curve: [number, number][];
}

export function defaultCamera(): Camera {
  return { yaw: -2.4, pitch: 0.45, scale: 220, cx: 480, cy: 300, targetX: 0.8, targetY: 0 };
}

export function project(cam: Camera, p: Vec3 | number[]): [number, number] {
  const dx = p[0] - cam.targetX;
  const dy = p[1] - cam.targetY;
  const cz = Math.cos(cam.yaw);
  const sz = Math.sin(cam.yaw);
  const x = cz * dx - sz * dy;
  const y = sz * dx + cz * dy;
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  const v = cp * p[2] - sp * y;
  return [cam.cx + cam.scale * x, cam.cy - cam.scale * v];
}

/**
 * Inverse of `project` restricted to a horizontal plane at height z: maps a
 * screen point back to the world, which is what dragging a handle uses.
 */
export function unprojectOnPlane(cam: Camera, sx: number, sy: number, z: number): Vec3 {
  const x = (sx - cam.cx) / cam.scale;
  const v = (cam.cy - sy) / cam.scale;
  const sp = Math.sin(cam.pitch);
  const cp = Math.cos(cam.pitch);
  const y = (cp * z - v) / (sp || 1e-9);
  const cz = Math.cos(-cam.yaw);
  const sz = Math.sin(-cam.yaw);
  return [cz * x - sz * y + cam.targetX, sz * x + cz * y + cam.targetY, z];
}

function boxCorners(pose: number[], size: [number, number, number], zBase: number): Vec3[] {
  const q: QuatWXYZ = [pose[3], pose[4], pose[5], pose[6]];
  const out: Vec3[] = [];
  for (const dx of [-0.5, 0.5]) {
    for (const dy of [-0.5, 0.5]) {
      for (const dz of [0, 1]) {
        const local: Vec3 = [dx * size[0], dy * size[1], zBase + dz * size[2]];
        const r = quatRotate(q, local);
        out.push([r[0] + pose[0], r[1] + pose[1], r[2] + pose[2]]);
      }
    }
  }
  return out;
}

const BOX_EDGES: [number, number][] = [
  [0, 1], [2, 3], [4, 5], [6, 7],
  [0, 2], [1, 3], [4, 6], [5, 7],
  [0, 4], [1, 5], [2, 6], [3, 7],
];

export function buildScene(frame: StateFrame, cam: Camera, selectedHandle: number | null): SceneDrawing {
  const segments: Segment[] = [];
  const markers: Marker[] = [];

  // Ground grid around the camera target.
  for (let i = -2; i <= 4; i++) {
    segments.push({ a: project(cam, [i, -2, 0]), b: project(cam, [i, 2, 0]), color: "#223", width: 1 });
    if (i <= 2) {
      segments.push({ a: project(cam, [-2, i, 0]), b: project(cam, [4, i, 0]), color: "#223", width: 1 });
    }
  }

  // Robot: base box plus a line from each shoulder to its toe.
  const base = frame.base_pose;
  const baseQ: QuatWXYZ = [base[3], base[4], base[5], base[6]];
  const body = boxCorners(base, [0.55, 0.25, 0.1], -0.05);
  for (const [i, j] of BOX_EDGES) {
    segments.push({ a: project(cam, body[i]), b: project(cam, body[j]), color: "#8ab4ff", width: 2 });
  }
  const shoulders: Vec3[] = [
    [0.24, 0.13, 0], [0.24, -0.13, 0], [-0.24, 0.13, 0], [-0.24, -0.13, 0],
  ];
  frame.toe_poses.forEach((toe, leg) => {
    const s = quatRotate(baseQ, shoulders[leg]);
    const shoulder: Vec3 = [s[0] + base[0], s[1] + base[1], s[2] + base[2]];
    segments.push({
      a: project(cam, shoulder),
      b: project(cam, toe),
      color: leg === Math.round(frame.params[0]) ? "#ffd166" : "#5c7",
      width: leg === Math.round(frame.params[0]) ? 3 : 2,
    });
    markers.push({ at: project(cam, toe), radius: 4, color: "#5c7", fill: true });
  });

  // Scene objects as simple footprints with a vertical stem.
  for (const obj of frame.objects) {
    const p = obj.pose;
    const top: Vec3 = [p[0], p[1], Math.max(p[2] + 0.05, 0.25)];
    segments.push({ a: project(cam, [p[0], p[1], 0]), b: project(cam, top), color: "#e07a5f", width: 2 });
    markers.push({
      at: project(cam, [p[0], p[1], p[2]]),
      radius: 7,
      color: obj.contact ? "#ffd166" : "#e07a5f",
      fill: obj.contact,
      label: obj.id,
    });
  }

  // Active curve (client-side evaluation) and its draggable handles.
  const pts = flatPoints(frame.params);
  const weights = flatWeights(frame.params);
  const curve = sampleCurve(pts, weights, 64).map((p) => project(cam, p));
  pts.forEach((p, i) => {
    markers.push({
      at: project(cam, p),
      radius: i === selectedHandle ? 8 : 5,
      color: i === selectedHandle ? "#fff" : "#bb86fc",
      fill: i === selectedHandle,
      label: `p${i}`,
      handleIndex: i,
    });
  });

  // Desired point and orientation arrow.
  const desired = frame.desired_point;
  markers.push({ at: project(cam, desired), radius: 5, color: "#ffd166", fill: true });
  const dq: QuatWXYZ = [
    frame.desired_orientation[0],
    frame.desired_orientation[1],
    frame.desired_orientation[2],
    frame.desired_orientation[3],
  ];
  const dir = quatRotate(dq, [0, 0, 0.18]);
  segments.push({
    a: project(cam, desired),
    b: project(cam, [desired[0] + dir[0], desired[1] + dir[1], desired[2] + dir[2]]),
    color: "#ffd166",
    width: 3,
  });

  return { segments, markers, curve };
}

/** Nearest handle within `radius` pixels of a screen point, or null. */
export function hitTestHandle(drawing: SceneDrawing, sx: number, sy: number, radius = 12): number | null {
  let best: number | null = null;
  let bestDist = radius;
  for (const marker of drawing.markers) {
    if (marker.handleIndex === undefined) continue;
    const d = Math.hypot(marker.at[0] - sx, marker.at[1] - sy);
    if (d <= bestDist) {
      bestDist = d;
      best = marker.handleIndex;
    }
  }
  return best;
}
