/** Browser panel wiring: canvas scene, edits, charts, gamepad. */

import { BridgeClient } from "./client.js";
import { hemisphereQuat } from "./curve.js";
import { DEFAULT_MAPPING, readSticks, stickDisplacement } from "./gamepad.js";
import { UiSessionModel } from "./model.js";
import { flatPoints, flatWeights } from "./protocol.js";
import { Camera, buildScene, defaultCamera, hitTestHandle, project, unprojectOnPlane } from "./scene.js";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const chartCanvas = document.getElementById("chart") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const chartCtx = chartCanvas.getContext("2d")!;
const banner = document.getElementById("banner")!;
const status = document.getElementById("status")!;
const weightSlider = document.getElementById("weight") as HTMLInputElement;
const weightLabel = document.getElementById("weight-label")!;
const flagSelect = document.getElementById("flag") as HTMLSelectElement;
const yawSlider = document.getElementById("ori-yaw") as HTMLInputElement;
const tiltSlider = document.getElementById("ori-tilt") as HTMLInputElement;
const spinSlider = document.getElementById("ori-spin") as HTMLInputElement;
const oriTarget = document.getElementById("ori-target") as HTMLSelectElement;
const hemi = document.getElementById("hemisphere") as HTMLCanvasElement;
const hemiCtx = hemi.getContext("2d")!;
const recordButton = document.getElementById("record") as HTMLButtonElement;
const downloads = document.getElementById("downloads")!;

const model = new UiSessionModel();
const cam: Camera = defaultCamera();
let selected: number | null = null;
let dragging = false;
let lastDrawing = buildSceneSafe();

const client = new BridgeClient(model, render);
const wsUrl = `ws://${location.host}/bridge`;
client.connect(wsUrl);

function buildSceneSafe() {
  if (model.snapshot === null) return { segments: [], markers: [], curve: [] as [number, number][] };
  const frame = { ...model.snapshot, params: model.activeParams() ?? model.snapshot.params };
  return buildScene(frame, cam, selected);
}

function render(): void {
  banner.style.display = model.connected ? "none" : "block";
  const snap = model.snapshot;
  if (model.lastRejection !== null) {
    status.textContent = `rejected: ${model.lastRejection.message}`;
    status.className = "bad";
  } else if (snap !== null) {
    status.textContent =
      `tick ${snap.tick}  phase ${snap.phase.toFixed(3)}  ` +
      `pos err ${snap.pos_error.toFixed(4)} m  ori err ${snap.ori_error.toFixed(3)} rad` +
      (snap.recording ? "  REC" : "");
    status.className = "ok";
  }
  if (model.lastRecording !== null) {
    downloads.textContent = `saved ${model.lastRecording.path} (${model.lastRecording.records} records)`;
    recordButton.textContent = snap?.recording ? "stop recording" : "start recording";
  }
  if (snap !== null) {
    recordButton.textContent = snap.recording ? "stop recording" : "start recording";
  }

  ctx.clearRect(0, 0, canvas.width, canvas.height);
  lastDrawing = buildSceneSafe();
  for (const seg of lastDrawing.segments) {
    ctx.strokeStyle = seg.color;
    ctx.lineWidth = seg.width ?? 1;
    ctx.beginPath();
    ctx.moveTo(seg.a[0], seg.a[1]);
    ctx.lineTo(seg.b[0], seg.b[1]);
    ctx.stroke();
  }
  if (lastDrawing.curve.length > 1) {
    ctx.strokeStyle = "#bb86fc";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(lastDrawing.curve[0][0], lastDrawing.curve[0][1]);
    for (const p of lastDrawing.curve.slice(1)) ctx.lineTo(p[0], p[1]);
    ctx.stroke();
  }
  for (const m of lastDrawing.markers) {
    ctx.strokeStyle = m.color;
    ctx.fillStyle = m.color;
    ctx.beginPath();
    ctx.arc(m.at[0], m.at[1], m.radius, 0, 2 * Math.PI);
    if (m.fill) ctx.fill();
    else ctx.stroke();
    if (m.label) {
      ctx.fillStyle = "#889";
      ctx.fillText(m.label, m.at[0] + 8, m.at[1] - 8);
    }
  }

  drawChart();
  drawHemisphere();
  syncSliders();
}

function drawChart(): void {
  chartCtx.clearRect(0, 0, chartCanvas.width, chartCanvas.height);
  const data = model.chart;
  if (data.length < 2) return;
  const w = chartCanvas.width;
  const h = chartCanvas.height;
  const maxErr = Math.max(0.05, ...data.map((d) => d.posError));
  chartCtx.strokeStyle = "#ffd166";
  chartCtx.beginPath();
  data.forEach((d, i) => {
    const x = (i / (data.length - 1)) * w;
    const y = h - (d.posError / maxErr) * (h - 4) - 2;
    if (i === 0) chartCtx.moveTo(x, y);
    else chartCtx.lineTo(x, y);
  });
  chartCtx.stroke();
  chartCtx.strokeStyle = "#8ab4ff";
  chartCtx.beginPath();
  data.forEach((d, i) => {
    const x = (i / (data.length - 1)) * w;
    const y = h - (d.oriError / Math.PI) * (h - 4) - 2;
    if (i === 0) chartCtx.moveTo(x, y);
    else chartCtx.lineTo(x, y);
  });
  chartCtx.stroke();
}

function drawHemisphere(): void {
  const w = hemi.width;
  const h = hemi.height;
  hemiCtx.clearRect(0, 0, w, h);
  hemiCtx.strokeStyle = "#556";
  hemiCtx.beginPath();
  hemiCtx.arc(w / 2, h / 2, h / 2 - 4, 0, 2 * Math.PI);
  hemiCtx.stroke();
  const yaw = Number(yawSlider.value);
  const cosTilt = Number(tiltSlider.value);
  const r = (h / 2 - 4) * Math.sqrt(Math.max(0, 1 - cosTilt * cosTilt));
  hemiCtx.fillStyle = "#ffd166";
  hemiCtx.beginPath();
  hemiCtx.arc(w / 2 + r * Math.cos(yaw), h / 2 - r * Math.sin(yaw), 5, 0, 2 * Math.PI);
  hemiCtx.fill();
}

function syncSliders(): void {
  const params = model.activeParams();
  if (params === null || selected === null) {
    weightLabel.textContent = "select a handle";
    return;
  }
  const weights = flatWeights(params);
  weightLabel.textContent = `w${selected} = ${weights[selected].toFixed(0)}`;
  if (!draggingWeight) weightSlider.value = String(weights[selected]);
}

// -- mouse: select and drag handles in the ground plane (shift: vertical) ----

let dragPlaneZ = 0;
canvas.addEventListener("pointerdown", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const hit = hitTestHandle(lastDrawing, ev.clientX - rect.left, ev.clientY - rect.top);
  selected = hit;
  if (hit !== null && model.activeParams() !== null) {
    dragging = true;
    dragPlaneZ = flatPoints(model.activeParams()!)[hit][2];
  }
  render();
});

canvas.addEventListener("pointermove", (ev) => {
  if (!dragging || selected === null) return;
  const rect = canvas.getBoundingClientRect();
  const world = unprojectOnPlane(cam, ev.clientX - rect.left, ev.clientY - rect.top, dragPlaneZ);
  sendPointEdit(selected, ev.shiftKey ? shiftVertical(world, ev) : world);
});

function shiftVertical(world: [number, number, number], ev: PointerEvent): [number, number, number] {
  const params = model.activeParams();
  if (params === null || selected === null) return world;
  const p = flatPoints(params)[selected];
  const rect = canvas.getBoundingClientRect();
  const screen = project(cam, p);
  const dz = (screen[1] - (ev.clientY - rect.top)) / cam.scale;
  return [p[0], p[1], Math.min(1.2, Math.max(0.01, p[2] + dz))];
}

canvas.addEventListener("pointerup", () => {
  dragging = false;
});

let lastEditAt = 0;
function sendPointEdit(index: number, world: [number, number, number]): void {
  const now = performance.now();
  if (now - lastEditAt < 80) return; // throttle to the stream cadence
  lastEditAt = now;
  const clamped: [number, number, number] = [
    Math.min(2, Math.max(-2, world[0])),
    Math.min(2, Math.max(-2, world[1])),
    Math.min(1.2, Math.max(0.01, world[2])),
  ];
  client.send({ kind: "set_params", id: model.allocateId(), point: { index, value: clamped } });
}

// -- control widgets ---------------------------------------------------------

let draggingWeight = false;
weightSlider.addEventListener("pointerdown", () => (draggingWeight = true));
weightSlider.addEventListener("pointerup", () => (draggingWeight = false));
weightSlider.addEventListener("change", () => {
  if (selected === null) return;
  client.send({
    kind: "set_params",
    id: model.allocateId(),
    weight: { index: selected, value: Number(weightSlider.value) },
  });
});

flagSelect.addEventListener("change", () => {
  client.send({ kind: "set_params", id: model.allocateId(), flag: Number(flagSelect.value) as 0 | 1 });
});

function sendOrientation(): void {
  const q = hemisphereQuat(Number(yawSlider.value), Number(tiltSlider.value), Number(spinSlider.value));
  const msg =
    oriTarget.value === "start"
      ? { kind: "set_params" as const, id: model.allocateId(), q_start: q }
      : { kind: "set_params" as const, id: model.allocateId(), q_end: q };
  client.send(msg);
}
for (const slider of [yawSlider, tiltSlider, spinSlider]) {
  slider.addEventListener("change", sendOrientation);
}

recordButton.addEventListener("click", () => {
  const action = model.snapshot?.recording ? "stop" : "start";
  client.send({ kind: "record", id: model.allocateId(), action });
});

// -- gamepad: sticks displace the selected handle -----------------------------

let lastPadTime = performance.now();
function pollGamepad(): void {
  const now = performance.now();
  const dt = (now - lastPadTime) / 1000;
  lastPadTime = now;
  const pads = navigator.getGamepads ? navigator.getGamepads() : [];
  const pad = pads && pads[0];
  if (pad && selected !== null && model.activeParams() !== null) {
    const d = stickDisplacement(readSticks(pad), dt, DEFAULT_MAPPING);
    if (d[0] !== 0 || d[1] !== 0 || d[2] !== 0) {
      const p = flatPoints(model.activeParams()!)[selected];
      sendPointEdit(selected, [p[0] + d[0], p[1] + d[1], p[2] + d[2]]);
    }
  }
  model.expire(Date.now());
  requestAnimationFrame(pollGamepad);
}
requestAnimationFrame(pollGamepad);
