/**
 * Browser bridge: serves the console page and relays between the browser
 * and the engine's TCP session protocol.
 *
 * Browsers cannot open raw TCP sockets, so each browser session gets one
 * engine connection relayed over plain HTTP: engine messages stream out on
 * a Server-Sent-Events channel (GET /events) and client messages come back
 * as POST /send bodies.  No third-party packages required.
 *
 *   node dist/bridge.js [--engine host:port] [--port 8080]
 */

import * as http from "node:http";
import * as net from "node:net";
import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

const here = path.dirname(fileURLToPath(import.meta.url));
const PUBLIC_DIR = path.resolve(here, "..", "public");
const DIST_DIR = path.resolve(here);

interface Args {
  engineHost: string;
  enginePort: number;
  port: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { engineHost: "127.0.0.1", enginePort: 7641, port: 8080 };
  for (let i = 0; i < argv.length; i++) {
    if (argv[i] === "--engine") {
      const [host, port] = argv[++i].split(":");
      args.engineHost = host || "127.0.0.1";
      args.enginePort = parseInt(port, 10);
    } else if (argv[i] === "--port") {
      args.port = parseInt(argv[++i], 10);
    }
  }
  return args;
}

interface Relay {
  socket: net.Socket;
  sse: http.ServerResponse;
}

const relays = new Map<string, Relay>();

function openRelay(id: string, args: Args, res: http.ServerResponse): void {
  const socket = net.createConnection(args.enginePort, args.engineHost);
  socket.setEncoding("utf8");
  res.writeHead(200, {
    "Content-Type": "text/event-stream",
    "Cache-Control": "no-cache",
    Connection: "keep-alive",
  });
  let buffer = "";
  socket.on("data", (chunk: string) => {
    buffer += chunk;
    let idx: number;
    while ((idx = buffer.indexOf("\n")) >= 0) {
      const line = buffer.slice(0, idx);
      buffer = buffer.slice(idx + 1);
      if (line.trim()) res.write(`data: ${line}\n\n`);
    }
  });
  socket.on("error", () => {
    res.write(`data: {"type":"error","message":"engine connection lost"}\n\n`);
    res.end();
    relays.delete(id);
  });
  socket.on("close", () => {
    res.end();
    relays.delete(id);
  });
  res.on("close", () => {
    socket.destroy();
    relays.delete(id);
  });
  relays.set(id, { socket, sse: res });
}

const MIME: Record<string, string> = {
  ".html": "text/html",
  ".js": "text/javascript",
  ".css": "text/css",
  ".png": "image/png",
};

function serveStatic(url: string, res: http.ServerResponse): void {
  const rel = url === "/" ? "/index.html" : url;
  for (const root of [PUBLIC_DIR, DIST_DIR]) {
    const file = path.join(root, path.normalize(rel));
    if (file.startsWith(root) && fs.existsSync(file) && fs.statSync(file).isFile()) {
      res.writeHead(200, { "Content-Type": MIME[path.extname(file)] ?? "text/plain" });
      fs.createReadStream(file).pipe(res);
      return;
    }
  }
  res.writeHead(404);
  res.end("not found");
}

export function startBridge(args: Args): http.Server {
  const server = http.createServer((req, res) => {
    const url = new URL(req.url ?? "/", "http://localhost");
    if (url.pathname === "/events") {
      openRelay(url.searchParams.get("session") ?? "default", args, res);
      return;
    }
    if (url.pathname === "/send" && req.method === "POST") {
      const id = url.searchParams.get("session") ?? "default";
      const relay = relays.get(id);
      let body = "";
      req.on("data", (c) => (body += c));
      req.on("end", () => {
        if (!relay) {
          res.writeHead(409);
          res.end("no session");
          return;
        }
        relay.socket.write(body.endsWith("\n") ? body : body + "\n");
        res.writeHead(204);
        res.end();
      });
      return;
    }
    serveStatic(url.pathname, res);
  });
  server.listen(args.port, () => {
    console.log(
      `console on http://127.0.0.1:${args.port} -> engine ` +
        `${args.engineHost}:${args.enginePort}`,
    );
  });
  return server;
}

const entry = process.argv[1] ? path.resolve(process.argv[1]) : "";
if (entry === fileURLToPath(import.meta.url)) {
  startBridge(parseArgs(process.argv.slice(2)));
}
