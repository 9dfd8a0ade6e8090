/**
 * UI session state: the latest server snapshot, optimistic pending edits,
 * and a bounded ring buffer of tracking errors for the charts.
 *
 * Pending edits overlay the server's parameter record until the server acks
 * (the next snapshot then carries the change) or rejects (the overlay is
 * dropped and the bound message surfaces). An edit a newer ack already
 * covers never wins over the server value: overlays are cleared on ack, so
 * only genuinely unconfirmed edits are shown optimistically.
 */

import {
  ClientMessage,
  FLAT,
  HelloFrame,
  PARAMS_FLAT_SIZE,
  ServerFrame,
  SetParamsMessage,
  StateFrame,
} from "./protocol.js";

export interface PendingEdit {
  id: number;
  message: SetParamsMessage;
  sentAtMs: number;
}

export interface ErrorSample {
  tick: number;
  posError: number;
  oriError: number;
}

export interface RejectedEdit {
  id: number;
  message: string;
}

export class UiSessionModel {
  hello: HelloFrame | null = null;
  snapshot: StateFrame | null = null;
  pending = new Map<number, PendingEdit>();
  lastRejection: RejectedEdit | null = null;
  lastRecording: { path: string; records: number } | null = null;
  connected = false;
  readonly chart: ErrorSample[] = [];
  private readonly chartCapacity: number;
  private nextId = 1;
  private readonly timeoutMs: number;

  constructor(chartCapacity = 512, editTimeoutMs = 2000) {
    this.chartCapacity = chartCapacity;
    this.timeoutMs = editTimeoutMs;
  }

  allocateId(): number {
    return this.nextId++;
  }

  onConnected(): void {
    this.connected = true;
  }

  onDisconnected(): void {
    this.connected = false; // the view shows a stale-state banner
  }

  onFrame(frame: ServerFrame): void {
    switch (frame.kind) {
      case "hello":
        this.hello = frame;
        break;
      case "state":
        this.snapshot = frame;
        this.chart.push({ tick: frame.tick, posError: frame.pos_error, oriError: frame.ori_error });
        if (this.chart.length > this.chartCapacity) {
          this.chart.splice(0, this.chart.length - this.chartCapacity);
        }
        break;
      case "ack":
        if (frame.path !== undefined) {
          this.lastRecording = { path: frame.path, records: frame.records ?? 0 };
        }
        this.pending.delete(frame.id);
        break;
      case "error":
        if (frame.id !== undefined && this.pending.has(frame.id)) {
          this.pending.delete(frame.id); // revert the optimistic overlay
        }
        this.lastRejection = { id: frame.id ?? -1, message: frame.message };
        break;
    }
  }

  /** Drop pending edits older than the timeout; returns the reverted ids. */
  expire(nowMs: number): number[] {
    const dropped: number[] = [];
    for (const [id, edit] of this.pending) {
      if (nowMs - edit.sentAtMs > this.timeoutMs) {
        this.pending.delete(id);
        dropped.push(id);
      }
    }
    return dropped;
  }

  track(message: ClientMessage, nowMs: number): void {
    if (message.kind === "set_params") {
      this.pending.set(message.id, { id: message.id, message, sentAtMs: nowMs });
    }
  }

  /**
   * The parameter record the view should draw: the server's latest record
   * with still-unacknowledged edits overlaid.
   */
  activeParams(): number[] | null {
    if (this.snapshot === null) return null;
    const params = this.snapshot.params.slice();
    if (params.length !== PARAMS_FLAT_SIZE) return params;
    for (const edit of this.pending.values()) {
      const m = edit.message;
      if (m.point !== undefined) {
        const base = FLAT.points[0] + 3 * m.point.index;
        params[base] = m.point.value[0];
        params[base + 1] = m.point.value[1];
        params[base + 2] = m.point.value[2];
      }
      if (m.weight !== undefined) params[FLAT.weights[0] + m.weight.index] = m.weight.value;
      if (m.flag !== undefined) params[FLAT.flag] = m.flag;
      if (m.q_start !== undefined) params.splice(FLAT.qStart[0], 4, ...m.q_start);
      if (m.q_end !== undefined) params.splice(FLAT.qEnd[0], 4, ...m.q_end);
      if (m.duration !== undefined) params[FLAT.duration] = m.duration;
    }
    return params;
  }
}
