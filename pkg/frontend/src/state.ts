/**
 * Console view state: a pure reducer over engine messages.
 *
 * The console holds no truth of its own.  Every displayed fact (frame,
 * overlays, held object, recording flag, transcript) comes from an engine
 * message, overlays always belong to the frame they arrived with, and a
 * forced re-render from the same ViewState is pixel-identical.
 */

import type { EngineMsg, PerceptOverlay, StateMsg } from "./protocol.js";

export interface TranscriptRow {
  who: "user" | "robot" | "system";
  text: string;
  ask?: boolean;
}

export interface ViewState {
  frame: string | null; // base64 PNG, paired with the overlays below
  width: number;
  height: number;
  percepts: PerceptOverlay[];
  held: string | null;
  clock: number;
  recording: boolean;
  lastAction: string | null;
  transferZone: [number, number, number, number] | null;
  transcript: TranscriptRow[];
  highlight: number | null; // percept id flashed by a robot point
  pendingAsk: string | null; // clarification awaiting an answer
  connected: boolean;
}

export function initialView(): ViewState {
  return {
    frame: null,
    width: 640,
    height: 480,
    percepts: [],
    held: null,
    clock: 0,
    recording: false,
    lastAction: null,
    transferZone: null,
    transcript: [],
    highlight: null,
    pendingAsk: null,
    connected: false,
  };
}

function applyState(view: ViewState, msg: StateMsg): ViewState {
  const rows = [...view.transcript];
  if (msg.last_action) {
    rows.push({ who: "system", text: msg.last_action });
  }
  return {
    ...view,
    frame: msg.frame,
    width: msg.width,
    height: msg.height,
    percepts: msg.percepts,
    held: msg.held,
    clock: msg.clock,
    recording: msg.recording,
    lastAction: msg.last_action,
    transferZone: msg.transfer_zone,
    transcript: rows,
  };
}

export function applyMessage(view: ViewState, msg: EngineMsg): ViewState {
  switch (msg.type) {
    case "state":
      return applyState(view, msg);
    case "say":
      return {
        ...view,
        pendingAsk: null,
        transcript: [...view.transcript, { who: "robot", text: msg.text }],
      };
    case "ask":
      return {
        ...view,
        pendingAsk: msg.text,
        transcript: [...view.transcript, { who: "robot", text: msg.text, ask: true }],
      };
    case "point":
      return { ...view, highlight: msg.id };
    case "macro_state":
      return {
        ...view,
        recording: msg.open,
        transcript: [
          ...view.transcript,
          {
            who: "system",
            text: msg.open
              ? `recording ${msg.pending ?? "a new action"} (${msg.steps} steps)`
              : "recording closed",
          },
        ],
      };
    case "error":
      return {
        ...view,
        transcript: [...view.transcript, { who: "system", text: `error: ${msg.message}` }],
      };
    default:
      return view;
  }
}

export function userSaid(view: ViewState, text: string): ViewState {
  return {
    ...view,
    highlight: null,
    transcript: [...view.transcript, { who: "user", text }],
  };
}

/** Percept containing the click, or nearest by bounding-box distance. */
export function perceptAt(view: ViewState, x: number, y: number): PerceptOverlay | null {
  let best: PerceptOverlay | null = null;
  let bestDist = Infinity;
  for (const p of view.percepts) {
    const [x0, y0, x1, y1] = p.bbox;
    const dx = Math.max(x0 - x, 0, x - x1);
    const dy = Math.max(y0 - y, 0, y - y1);
    const d = Math.hypot(dx, dy);
    if (d < bestDist || (d === bestDist && best !== null && p.id < best.id)) {
      best = p;
      bestDist = d;
    }
  }
  return best;
}

export function inTransferZone(view: ViewState, x: number, y: number): boolean {
  if (!view.transferZone) return false;
  const [x0, y0, x1, y1] = view.transferZone;
  return x >= x0 && x <= x1 && y >= y0 && y <= y1;
}
