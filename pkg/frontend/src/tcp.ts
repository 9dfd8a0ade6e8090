/**
 * Node-side bridge client: 4-byte big-endian length-prefixed JSON frames on
 * a TCP socket. Used by the test suite and the WebSocket relay; the browser
 * panel talks WebSocket to the relay instead.
 */

import * as net from "node:net";

import { ClientMessage, ServerFrame, isServerFrame, validateOutgoing } from "./protocol.js";

export class FrameDecoder {
  private buffer = Buffer.alloc(0);

  push(chunk: Buffer): ServerFrame[] {
    this.buffer = Buffer.concat([this.buffer, chunk]);
    const frames: ServerFrame[] = [];
    while (this.buffer.length >= 4) {
      const length = this.buffer.readUInt32BE(0);
      if (this.buffer.length < 4 + length) break;
      const body = this.buffer.subarray(4, 4 + length).toString("utf-8");
      this.buffer = this.buffer.subarray(4 + length);
      const doc = JSON.parse(body);
      if (!isServerFrame(doc)) throw new Error(`unexpected frame: ${body.slice(0, 80)}`);
      frames.push(doc);
    }
    return frames;
  }
}

export function encodeFrame(msg: ClientMessage): Buffer {
  const problem = validateOutgoing(msg);
  if (problem !== null) throw new Error(`refusing to send invalid frame: ${problem}`);
  const body = Buffer.from(JSON.stringify(msg), "utf-8");
  const out = Buffer.alloc(4 + body.length);
  out.writeUInt32BE(body.length, 0);
  body.copy(out, 4);
  return out;
}

export class TcpBridgeClient {
  private socket: net.Socket | null = null;
  private readonly decoder = new FrameDecoder();
  private readonly queue: ServerFrame[] = [];
  private waiter: ((frame: ServerFrame) => void) | null = null;
  private closed = false;

  async connect(host: string, port: number): Promise<void> {
    await new Promise<void>((resolve, reject) => {
      const socket = net.createConnection({ host, port }, () => {
        socket.setNoDelay(true);
        this.socket = socket;
        resolve();
      });
      socket.on("error", reject);
      socket.on("data", (chunk: Buffer) => {
        for (const frame of this.decoder.push(chunk)) {
          if (this.waiter !== null) {
            const w = this.waiter;
            this.waiter = null;
            w(frame);
          } else {
            this.queue.push(frame);
          }
        }
      });
      socket.on("close", () => {
        this.closed = true;
        if (this.waiter !== null) {
          const w = this.waiter;
          this.waiter = null;
          w({ kind: "error", session: "", tick: -1, message: "connection closed" });
        }
      });
    });
  }

  send(msg: ClientMessage): void {
    if (this.socket === null) throw new Error("not connected");
    this.socket.write(encodeFrame(msg));
  }

  async next(timeoutMs = 10000): Promise<ServerFrame> {
    const queued = this.queue.shift();
    if (queued !== undefined) return queued;
    if (this.closed) throw new Error("connection closed");
    return await new Promise<ServerFrame>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.waiter = null;
        reject(new Error("timed out waiting for a frame"));
      }, timeoutMs);
      this.waiter = (frame) => {
        clearTimeout(timer);
        resolve(frame);
      };
    });
  }

  async nextOfKind<K extends ServerFrame["kind"]>(
    kind: K,
    limit = 200,
  ): Promise<Extract<ServerFrame, { kind: K }>> {
    for (let i = 0; i < limit; i++) {
      const frame = await this.next();
      if (frame.kind === kind) return frame as Extract<ServerFrame, { kind: K }>;
    }
    throw new Error(`no ${kind} frame within ${limit} frames`);
  }

  close(): void {
    this.socket?.destroy();
  }
}
