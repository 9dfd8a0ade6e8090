/**
 * End-to-end against the real bridge: spawn `pedi serve`, connect over the
 * TCP frame protocol, run the scripted edit sequence (valid weight edit,
 * out-of-bounds p_z edit, record start/stop), and verify the recorded
 * trajectory file loads back on the Python side.
 */

import { execFile, spawn, ChildProcess } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { curvePoint } from "../src/curve.js";
import { UiSessionModel } from "../src/model.js";
import { flatPoints, flatWeights, StateFrame } from "../src/protocol.js";
import { buildScene, defaultCamera } from "../src/scene.js";
import { TcpBridgeClient } from "../src/tcp.js";

const PYTHON = process.env.PEDIKIT_PYTHON ?? "python3";

let server: ChildProcess;
let port = 0;
let recordDir = "";

function waitForPort(proc: ChildProcess): Promise<number> {
  return new Promise((resolve, reject) => {
    let buffer = "";
    const timer = setTimeout(() => reject(new Error(`bridge never announced a port: ${buffer}`)), 30000);
    proc.stdout!.on("data", (chunk) => {
      buffer += String(chunk);
      const m = buffer.match(/on 127\.0\.0\.1:(\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(Number(m[1]));
      }
    });
    proc.on("exit", (code) => reject(new Error(`bridge exited early (${code}): ${buffer}`)));
  });
}

function pythonCheck(code: string): Promise<string> {
  return new Promise((resolve, reject) => {
    execFile(PYTHON, ["-c", code], (err, stdout, stderr) => {
      if (err) reject(new Error(stderr || String(err)));
      else resolve(stdout.trim());
    });
  });
}

beforeAll(async () => {
  recordDir = fs.mkdtempSync(path.join(os.tmpdir(), "pedikit-ui-"));
  server = spawn(
    PYTHON,
    ["-m", "pedikit.cli", "serve", "--task", "press_button", "--port", "0", "--seed", "3",
     "--record-dir", recordDir],
    { stdio: ["ignore", "pipe", "pipe"], env: { ...process.env, PYTHONUNBUFFERED: "1" } },
  );
  port = await waitForPort(server);
}, 40000);

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("teleop panel against the live bridge", () => {
  it("connects, renders, edits, reverts, and records", { timeout: 60000 }, async () => {
    const model = new UiSessionModel();
    const client = new TcpBridgeClient();
    await client.connect("127.0.0.1", port);
    model.onConnected();

    // hello
    const hello = await client.nextOfKind("hello");
    model.onFrame(hello);
    expect(hello.task).toBe("press_button");
    expect(hello.bounds.p_z).toEqual([0.01, 1.2]);

    // first state frame renders a full scene
    const first = await client.nextOfKind("state");
    model.onFrame(first);
    const drawing = buildScene(first, defaultCamera(), null);
    expect(drawing.curve).toHaveLength(64);
    expect(drawing.markers.filter((m) => m.handleIndex !== undefined)).toHaveLength(7);

    // client-side curve preview agrees with the server's desired point
    const pts = flatPoints(first.params);
    const w = flatWeights(first.params);
    const preview = curvePoint(pts, w, first.phase);
    for (let k = 0; k < 3; k++) {
      expect(Math.abs(preview[k] - first.desired_point[k])).toBeLessThan(1e-4);
    }

    // valid weight edit: ack, then reflected within two stream frames
    const editId = model.allocateId();
    model.track({ kind: "set_params", id: editId, weight: { index: 3, value: 2000 } }, Date.now());
    client.send({ kind: "set_params", id: editId, weight: { index: 3, value: 2000 } });
    const ack = await client.nextOfKind("ack");
    model.onFrame(ack);
    expect(ack.id).toBe(editId);
    expect(model.pending.size).toBe(0);
    let reflected: StateFrame | null = null;
    let framesAfterAck = 0;
    while (reflected === null) {
      const frame = await client.nextOfKind("state");
      model.onFrame(frame);
      if (frame.tick <= (ack.applied_tick ?? 0)) continue;
      framesAfterAck += 1;
      expect(framesAfterAck).toBeLessThanOrEqual(2);
      if (flatWeights(frame.params)[3] === 2000) reflected = frame;
    }

    // invalid p_z edit: optimistic preview, server rejection names the
    // bound, overlay reverts
    const badId = model.allocateId();
    const badEdit = { kind: "set_params" as const, id: badId, point: { index: 2, value: [0, 0, 1.5] as [number, number, number] } };
    model.track(badEdit, Date.now());
    expect(flatPoints(model.activeParams()!)[2][2]).toBe(1.5);
    client.send(badEdit);
    const rejection = await client.nextOfKind("error");
    model.onFrame(rejection);
    expect(rejection.message).toContain("[0.01, 1.2]");
    expect(model.lastRejection?.message).toContain("[0.01, 1.2]");
    expect(flatPoints(model.activeParams()!)[2][2]).not.toBe(1.5);

    // record start -> wait for a few planner blocks -> stop -> file loads
    const startId = model.allocateId();
    client.send({ kind: "record", id: startId, action: "start" });
    await client.nextOfKind("ack");
    for (let i = 0; i < 8; i++) {
      model.onFrame(await client.nextOfKind("state"));
    }
    const stopId = model.allocateId();
    client.send({ kind: "record", id: stopId, action: "stop" });
    const stopAck = await client.nextOfKind("ack");
    model.onFrame(stopAck);
    expect(stopAck.records ?? 0).toBeGreaterThanOrEqual(1);
    expect(stopAck.path).toBeTruthy();
    expect(model.lastRecording?.path).toBe(stopAck.path);

    const verdict = await pythonCheck(
      `from pedikit.dataset import load\n` +
        `ds = load(${JSON.stringify(stopAck.path)})\n` +
        `print(ds.header["provenance"], ds.n_trajectories, ds.records_per_trajectory)`,
    );
    expect(verdict.startsWith("teleop 1 ")).toBe(true);

    client.close();
  });
});
