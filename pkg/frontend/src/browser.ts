/**
 * Console page wiring: canvas with frame + overlays, transcript pane, chat
 * box, transfer zone, and the attention-word / overlay toggles.
 *
 * Rendering is a pure function of the ViewState; all interaction goes
 * straight to the engine through the bridge and comes back as messages.
 */

import { EngineClient, type Transport } from "./protocol.js";
import {
  applyMessage,
  initialView,
  inTransferZone,
  perceptAt,
  userSaid,
  type ViewState,
} from "./state.js";

function sseTransport(session: string): Transport {
  let handler: (chunk: string) => void = () => undefined;
  const source = new EventSource(`/events?session=${session}`);
  source.onmessage = (ev) => handler(ev.data + "\n");
  return {
    send(line: string) {
      void fetch(`/send?session=${session}`, { method: "POST", body: line });
    },
    onData(h) {
      handler = h;
    },
    close() {
      source.close();
    },
  };
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const COLORS: Record<string, string> = {
  red: "#d44", orange: "#d84", yellow: "#cc3", green: "#4a4",
  blue: "#46c", violet: "#a4c", black: "#222", gray: "#888", white: "#eee",
};

function render(view: ViewState, canvas: HTMLCanvasElement, showOverlays: boolean): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  canvas.width = view.width;
  canvas.height = view.height;
  const done = () => {
    if (view.transferZone) {
      const [x0, y0, x1, y1] = view.transferZone;
      ctx.strokeStyle = "#b4e";
      ctx.setLineDash([6, 4]);
      ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
      ctx.setLineDash([]);
      ctx.fillStyle = "#b4e";
      ctx.fillText("transfer", x0 + 4, y0 + 12);
    }
    if (!showOverlays) return;
    for (const p of view.percepts) {
      const [x0, y0, x1, y1] = p.bbox;
      ctx.strokeStyle = p.id === view.highlight ? "#ff0" : "#f0f";
      ctx.lineWidth = p.id === view.highlight ? 3 : 1;
      ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
      ctx.fillStyle = COLORS[p.dominant[0]] ?? "#fff";
      ctx.beginPath();
      ctx.arc(p.base_pt[0], p.base_pt[1], 4, 0, Math.PI * 2);
      ctx.fill();
      ctx.fillStyle = "#ff6";
      ctx.fillText(`${p.id}${p.name ? ":" + p.name : ""}`, x0, Math.max(10, y0 - 3));
    }
  };
  if (view.frame) {
    const img = new Image();
    img.onload = () => {
      ctx.drawImage(img, 0, 0);
      done();
    };
    img.src = `data:image/png;base64,${view.frame}`;
  } else {
    ctx.fillStyle = "#123";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    done();
  }
}

function renderTranscript(view: ViewState, pane: HTMLElement): void {
  pane.innerHTML = "";
  for (const row of view.transcript) {
    const div = document.createElement("div");
    div.className = `row ${row.who}${row.ask ? " ask" : ""}`;
    div.textContent = (row.who === "user" ? "you: " : row.who === "robot" ? "eli: " : "· ") + row.text;
    pane.appendChild(div);
  }
  pane.scrollTop = pane.scrollHeight;
}

export function boot(): void {
  const canvas = el<HTMLCanvasElement>("view");
  const transcript = el<HTMLDivElement>("transcript");
  const input = el<HTMLInputElement>("chat");
  const autoAttn = el<HTMLInputElement>("auto-attn");
  const overlays = el<HTMLInputElement>("overlays");
  const status = el<HTMLSpanElement>("status");

  let view = initialView();
  const session = Math.random().toString(36).slice(2);
  const client = new EngineClient(sseTransport(session));

  const repaint = () => {
    render(view, canvas, overlays.checked);
    renderTranscript(view, transcript);
    status.textContent =
      (view.held ? `holding ${view.held} · ` : "") +
      (view.recording ? "recording · " : "") +
      `t=${view.clock}`;
  };

  client.onMessage((msg) => {
    view = applyMessage(view, msg);
    view.connected = true;
    repaint();
  });

  input.addEventListener("keydown", (ev) => {
    if (ev.key !== "Enter" || !input.value.trim()) return;
    const text = input.value.trim();
    input.value = "";
    view = userSaid(view, text);
    repaint();
    client.utter(text, autoAttn.checked);
  });

  canvas.addEventListener("click", (ev) => {
    const rect = canvas.getBoundingClientRect();
    const x = ((ev.clientX - rect.left) / rect.width) * canvas.width;
    const y = ((ev.clientY - rect.top) / rect.height) * canvas.height;
    if (inTransferZone(view, x, y)) {
      client.transferClick();
      return;
    }
    const hit = perceptAt(view, x, y);
    view = {
      ...view,
      transcript: [...view.transcript,
                   { who: "system" as const,
                     text: `point at (${Math.round(x)},${Math.round(y)})` +
                           (hit ? ` near object ${hit.id}` : "") }],
    };
    repaint();
    client.click(x, y);
  });

  overlays.addEventListener("change", repaint);
  el<HTMLButtonElement>("reset").addEventListener("click", () => client.reset());
}

boot();
