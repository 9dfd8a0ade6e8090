/**
 * Bridge wire protocol: message shapes and client-side schema validation.
 *
 * Frames are UTF-8 JSON. Over raw TCP (Node relay, tests) each frame is
 * preceded by a 4-byte big-endian length; over the browser relay each
 * WebSocket text message carries exactly one frame. The panel never sends a
 * frame that fails `validateOutgoing`, so every message on the wire matches
 * the documented schema; value bounds (the randomization table) are the
 * server's call and its rejections are surfaced to the operator.
 */

export const CURVE_POINTS = 7;
export const PARAMS_FLAT_SIZE = 39;

export interface HelloFrame {
  kind: "hello";
  session: string;
  tick: number;
  task: string;
  model_config_hash: string;
  control_hz: number;
  stream_hz: number;
  protocol: number;
  bounds: { p_xy: [number, number]; p_z: [number, number]; w: [number, number] };
}

export interface ObjectState {
  id: string;
  pose: number[]; // x y z qw qx qy qz
  value: number;
  contact: boolean;
}

export interface StateFrame {
  kind: "state";
  session: string;
  tick: number;
  t: number;
  phase: number;
  base_pose: number[];
  q: number[];
  toe_poses: number[][];
  desired_point: number[];
  desired_orientation: number[];
  pos_error: number;
  ori_error: number;
  reward_terms: Record<string, number>;
  params: number[]; // 39-slot flat record
  objects: ObjectState[];
  recording: boolean;
}

export interface AckFrame {
  kind: "ack";
  session: string;
  tick: number;
  id: number;
  applied_tick?: number;
  path?: string;
  records?: number;
}

export interface ErrorFrame {
  kind: "error";
  session: string;
  tick: number;
  id?: number;
  message: string;
}

export type ServerFrame = HelloFrame | StateFrame | AckFrame | ErrorFrame;

export interface SetParamsMessage {
  kind: "set_params";
  id: number;
  point?: { index: number; value: [number, number, number] };
  weight?: { index: number; value: number };
  flag?: 0 | 1;
  q_start?: [number, number, number, number];
  q_end?: [number, number, number, number];
  duration?: number;
  restart?: boolean;
}

export interface RecordMessage {
  kind: "record";
  id: number;
  action: "start" | "stop";
}

export type ClientMessage = SetParamsMessage | RecordMessage;

const isNum = (v: unknown): v is number => typeof v === "number" && Number.isFinite(v);
const isVec = (v: unknown, n: number): boolean => Array.isArray(v) && v.length === n && v.every(isNum);

/** Structural validation of an outgoing message; returns a problem or null. */
export function validateOutgoing(msg: ClientMessage): string | null {
  if (!isNum(msg.id)) return "message id must be a number";
  if (msg.kind === "record") {
    return msg.action === "start" || msg.action === "stop" ? null : "record action must be start|stop";
  }
  if (msg.kind !== "set_params") return `unknown kind ${(msg as { kind?: string }).kind}`;
  const m = msg as SetParamsMessage;
  if (m.point !== undefined) {
    if (!Number.isInteger(m.point.index) || m.point.index < 0 || m.point.index >= CURVE_POINTS)
      return `point index must be an integer in [0, ${CURVE_POINTS - 1}]`;
    if (!isVec(m.point.value, 3)) return "point value must be [x, y, z]";
  }
  if (m.weight !== undefined) {
    if (!Number.isInteger(m.weight.index) || m.weight.index < 0 || m.weight.index >= CURVE_POINTS)
      return `weight index must be an integer in [0, ${CURVE_POINTS - 1}]`;
    if (!isNum(m.weight.value)) return "weight value must be a number";
  }
  if (m.flag !== undefined && m.flag !== 0 && m.flag !== 1) return "flag must be 0 or 1";
  for (const key of ["q_start", "q_end"] as const) {
    const q = m[key];
    if (q !== undefined && !isVec(q, 4)) return `${key} must be a wxyz quaternion`;
  }
  if (m.duration !== undefined && (!isNum(m.duration) || m.duration <= 0)) return "duration must be positive";
  if (
    m.point === undefined &&
    m.weight === undefined &&
    m.flag === undefined &&
    m.q_start === undefined &&
    m.q_end === undefined &&
    m.duration === undefined &&
    m.restart === undefined
  )
    return "set_params carries no fields";
  return null;
}

export function isServerFrame(doc: unknown): doc is ServerFrame {
  if (typeof doc !== "object" || doc === null) return false;
  const kind = (doc as { kind?: unknown }).kind;
  return kind === "hello" || kind === "state" || kind === "ack" || kind === "error";
}

/** Slices of the 39-slot flat parameter record. */
export const FLAT = {
  flag: 0,
  points: [1, 22] as const, // 7x3 row-major
  weights: [22, 29] as const,
  qStart: [29, 33] as const,
  qEnd: [33, 37] as const,
  duration: 37,
  frame: 38,
};

export function flatPoints(params: number[]): number[][] {
  const pts: number[][] = [];
  for (let i = 0; i < CURVE_POINTS; i++) {
    pts.push(params.slice(FLAT.points[0] + 3 * i, FLAT.points[0] + 3 * i + 3));
  }
  return pts;
}

export function flatWeights(params: number[]): number[] {
  return params.slice(FLAT.weights[0], FLAT.weights[1]);
}
