/**
 * Session wire protocol client.
 *
 * The engine speaks newline-delimited JSON over a stream connection.
 * Engine -> client: state (base64 PNG frame + percept overlays), say, ask,
 * point, macro_state, error.  Client -> engine: utter, click,
 * transfer_click, reset, load_scene.
 *
 * The client is transport-agnostic: node tests feed it a net.Socket, the
 * browser page feeds it an SSE/POST shim from the bridge.  Either way the
 * engine remains the single source of truth.
 */

// ------------------------------------------------------------------ types

export interface PerceptOverlay {
  id: number;
  bbox: [number, number, number, number];
  base_pt: [number, number];
  dominant: string[];
  name: string | null;
}

export interface StateMsg {
  type: "state";
  frame: string; // base64 PNG
  width: number;
  height: number;
  percepts: PerceptOverlay[];
  held: string | null;
  clock: number;
  recording: boolean;
  last_action: string | null;
  transfer_zone: [number, number, number, number];
}

export interface SayMsg {
  type: "say" | "ask";
  text: string;
}

export interface PointMsg {
  type: "point";
  id: number;
}

export interface MacroStateMsg {
  type: "macro_state";
  open: boolean;
  pending: string | null;
  steps: number;
}

export interface ErrorMsg {
  type: "error";
  message: string;
}

export type EngineMsg = StateMsg | SayMsg | PointMsg | MacroStateMsg | ErrorMsg;

export type ClientMsg =
  | { type: "utter"; text: string }
  | { type: "click"; x: number; y: number }
  | { type: "transfer_click" }
  | { type: "reset" }
  | { type: "load_scene"; name: string };

// ---------------------------------------------------------------- framing

/** Incremental newline-JSON decoder; tolerates arbitrary chunk splits. */
export class LineCodec {
  private buffer = "";

  push(chunk: string): EngineMsg[] {
    this.buffer += chunk;
    const out: EngineMsg[] = [];
    let idx: number;
    while ((idx = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, idx).trim();
      this.buffer = this.buffer.slice(idx + 1);
      if (!line) continue;
      out.push(JSON.parse(line) as EngineMsg);
    }
    return out;
  }
}

export function encode(msg: ClientMsg): string {
  return JSON.stringify(msg) + "\n";
}

// ----------------------------------------------------------------- client

export interface Transport {
  send(line: string): void;
  onData(handler: (chunk: string) => void): void;
  close(): void;
}

export class EngineClient {
  private codec = new LineCodec();
  private handlers: Array<(msg: EngineMsg) => void> = [];

  constructor(private transport: Transport) {
    transport.onData((chunk) => {
      for (const msg of this.codec.push(chunk)) {
        for (const h of this.handlers) h(msg);
      }
    });
  }

  onMessage(handler: (msg: EngineMsg) => void): void {
    this.handlers.push(handler);
  }

  utter(text: string, autoAttention = false, attentionWord = "Eli"): void {
    let out = text;
    if (autoAttention && !hasAttentionWord(text, attentionWord)) {
      out = `${attentionWord}, ${text}`;
    }
    this.transport.send(encode({ type: "utter", text: out }));
  }

  click(x: number, y: number): void {
    this.transport.send(encode({ type: "click", x, y }));
  }

  transferClick(): void {
    this.transport.send(encode({ type: "transfer_click" }));
  }

  reset(): void {
    this.transport.send(encode({ type: "reset" }));
  }

  loadScene(name: string): void {
    this.transport.send(encode({ type: "load_scene", name }));
  }

  close(): void {
    this.transport.close();
  }
}

/** True when the utterance already starts or ends with an attention word. */
export function hasAttentionWord(text: string, word = "Eli"): boolean {
  const tokens = text
    .toLowerCase()
    .replace(/[.,!?;:"()]/g, " ")
    .split(/\s+/)
    .filter(Boolean);
  if (tokens.length === 0) return false;
  const attn = new Set([word.toLowerCase(), "eli", "robot"]);
  return attn.has(tokens[0]) || attn.has(tokens[tokens.length - 1]);
}
