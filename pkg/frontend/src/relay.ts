/**
 * Development relay: serves the panel and pipes browser WebSocket messages
 * to the bridge's TCP frame protocol one-to-one (browsers cannot open raw
 * TCP sockets). Usage:
 *
 *   node dist/relay.js [--bridge host:port] [--listen port]
 *
 * then open http://localhost:<listen>/ while `pedi serve` is running.
 */

import * as fs from "node:fs";
import * as http from "node:http";
import * as net from "node:net";
import * as path from "node:path";
import * as url from "node:url";

import { WebSocketServer, WebSocket } from "ws";

const here = path.dirname(url.fileURLToPath(import.meta.url));

function arg(name: string, fallback: string): string {
  const i = process.argv.indexOf(name);
  return i >= 0 && process.argv[i + 1] !== undefined ? process.argv[i + 1] : fallback;
}

const [bridgeHost, bridgePort] = arg("--bridge", "127.0.0.1:7777").split(":");
const listenPort = Number(arg("--listen", "8080"));

const server = http.createServer((req, res) => {
  const file = req.url === "/" || req.url === undefined ? "/index.html" : req.url;
  const candidates = [path.join(here, "..", file), path.join(here, file)];
  for (const p of candidates) {
    if (fs.existsSync(p) && fs.statSync(p).isFile()) {
      const type = p.endsWith(".html") ? "text/html" : p.endsWith(".js") ? "text/javascript" : "text/plain";
      res.writeHead(200, { "content-type": type });
      res.end(fs.readFileSync(p));
      return;
    }
  }
  res.writeHead(404);
  res.end("not found");
});

const wss = new WebSocketServer({ server, path: "/bridge" });

wss.on("connection", (ws: WebSocket) => {
  const tcp = net.createConnection({ host: bridgeHost, port: Number(bridgePort) });
  tcp.setNoDelay(true);
  let buffer = Buffer.alloc(0);
  tcp.on("data", (chunk: Buffer) => {
    buffer = Buffer.concat([buffer, chunk]);
    while (buffer.length >= 4) {
      const length = buffer.readUInt32BE(0);
      if (buffer.length < 4 + length) break;
      ws.send(buffer.subarray(4, 4 + length).toString("utf-8"));
      buffer = buffer.subarray(4 + length);
    }
  });
  tcp.on("close", () => ws.close());
  tcp.on("error", () => ws.close());
  ws.on("message", (data: Buffer | string) => {
    const body = Buffer.from(String(data), "utf-8");
    const head = Buffer.alloc(4);
    head.writeUInt32BE(body.length, 0);
    tcp.write(Buffer.concat([head, body]));
  });
  ws.on("close", () => tcp.destroy());
});

server.listen(listenPort, () => {
  console.log(`panel on http://localhost:${listenPort}/ (bridge ${bridgeHost}:${bridgePort})`);
});
