import { describe, expect, it } from "vitest";

import { curvePoint, hemisphereQuat, quatRotate, sampleCurve, slerp } from "../src/curve.js";
import fixtures from "./curve_fixtures.json";

describe("curvePoint", () => {
  it("matches the server implementation on recorded fixtures", () => {
    for (const c of fixtures as Array<{ points: number[][]; weights: number[]; t: number; expected: number[] }>) {
      const got = curvePoint(c.points, c.weights, c.t);
      for (let k = 0; k < 3; k++) {
        expect(Math.abs(got[k] - c.expected[k])).toBeLessThan(1e-9);
      }
    }
  });

  it("interpolates the endpoints", () => {
    const pts = [[0, 0, 0.2], [1, 0, 0.2], [2, 1, 0.2], [3, 0, 0.4], [4, 0, 0.2], [5, 0, 0.2], [6, 0, 0.2]];
    const w = [1, 10, 100, 1000, 100, 10, 1];
    expect(curvePoint(pts, w, 0)).toEqual([0, 0, 0.2]);
    expect(curvePoint(pts, w, 1)).toEqual([6, 0, 0.2]);
  });

  it("rejects out-of-range phases", () => {
    const pts = [[0, 0, 0], [1, 0, 0]];
    expect(() => curvePoint(pts, [1, 1], 1.5)).toThrow();
  });

  it("samples the requested count", () => {
    const pts = [[0, 0, 0], [1, 0, 0], [2, 0, 0]];
    const samples = sampleCurve(pts, [1, 1, 1], 64);
    expect(samples).toHaveLength(64);
    expect(samples[0]).toEqual([0, 0, 0]);
    expect(samples[63][0]).toBeCloseTo(2, 12);
  });
});

describe("quaternions", () => {
  it("slerp hits the endpoints", () => {
    const a: [number, number, number, number] = [1, 0, 0, 0];
    const b: [number, number, number, number] = [Math.SQRT1_2, 0, 0, Math.SQRT1_2];
    expect(slerp(a, b, 0)).toEqual(a);
    const end = slerp(a, b, 1);
    for (let i = 0; i < 4; i++) expect(end[i]).toBeCloseTo(b[i], 12);
  });

  it("hemisphere quat keeps the tracked direction on the upper hemisphere", () => {
    for (const yaw of [0, 1.2, 3.0, 5.5]) {
      for (const cosTilt of [0, 0.3, 0.7, 1]) {
        const q = hemisphereQuat(yaw, cosTilt, 0.8);
        const dir = quatRotate(q, [0, 0, 1]);
        expect(dir[2]).toBeGreaterThanOrEqual(-1e-9);
        expect(dir[2]).toBeCloseTo(cosTilt, 9);
      }
    }
  });
});
