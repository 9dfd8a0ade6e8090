/**
 * Browser bridge client over WebSocket (via the bundled relay, which pipes
 * WebSocket text messages to the TCP frame protocol one-to-one).
 */

import { UiSessionModel } from "./model.js";
import { ClientMessage, isServerFrame, validateOutgoing } from "./protocol.js";

export class BridgeClient {
  private ws: WebSocket | null = null;

  constructor(readonly model: UiSessionModel, readonly onUpdate: () => void) {}

  connect(url: string): void {
    const ws = new WebSocket(url);
    this.ws = ws;
    ws.onopen = () => {
      this.model.onConnected();
      this.onUpdate();
    };
    ws.onmessage = (event) => {
      const doc = JSON.parse(String(event.data));
      if (isServerFrame(doc)) {
        this.model.onFrame(doc);
        this.onUpdate();
      }
    };
    ws.onclose = () => {
      this.model.onDisconnected();
      this.onUpdate();
    };
    ws.onerror = () => {
      this.model.onDisconnected();
      this.onUpdate();
    };
  }

  send(msg: ClientMessage): boolean {
    const problem = validateOutgoing(msg);
    if (problem !== null || this.ws === null || this.ws.readyState !== WebSocket.OPEN) {
      return false;
    }
    this.model.track(msg, Date.now());
    this.ws.send(JSON.stringify(msg));
    return true;
  }
}
