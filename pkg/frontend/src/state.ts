/** Session state and its reducer.
 *
 * The view is a pure function of (session, last server responses), and
 * every request the UI can issue is a pure function of the session, so a
 * recorded event sequence replays to an identical request sequence.
 * Slider clamps mirror server-side validation.
 */

import {
  ApiRequest,
  CheckpointInfo,
  editRequest,
  generateRequest,
  mixRequest,
  transitionRequest,
} from "./api.js";

export type PanelName = "generate" | "transition" | "mix" | "edit";
export type SliderName =
  | "psi"
  | "truncation"
  | "alpha"
  | "boundary"
  | "direction"
  | "strength";

export interface SliderState {
  psi: number;
  truncation: number;
  alpha: number; // transition weight on the source code, 1 = pure source
  boundary: number; // style layers taken from the source code
  direction: number; // 1-based index into the top-k directions
  strength: number;
}

export interface CodeSlot {
  code: number[];
  space: "z" | "w";
  volumeId: string | null;
}

export interface SliceCursor {
  axis: 0 | 1 | 2;
  index: number | null; // null renders the center slice
}

export interface SessionView {
  checkpoint: CheckpointInfo | null;
  panel: PanelName;
  source: CodeSlot | null;
  target: CodeSlot | null;
  sliders: SliderState;
  cursor: SliceCursor;
  seed: number;
  validationMessage: string | null;
}

export type SessionEvent =
  | { t: number; kind: "checkpoint"; info: CheckpointInfo }
  | { t: number; kind: "panel"; panel: PanelName }
  | { t: number; kind: "slider"; name: SliderName; value: number }
  | { t: number; kind: "preset"; boundary: number }
  | { t: number; kind: "seed"; value: number }
  | { t: number; kind: "adopt"; role: "source" | "target" }
  | { t: number; kind: "paste"; role: "source" | "target"; text: string }
  | { t: number; kind: "cursor"; axis: 0 | 1 | 2; index: number | null };

export function initialSession(): SessionView {
  return {
    checkpoint: null,
    panel: "generate",
    source: null,
    target: null,
    sliders: {
      psi: 1.0,
      truncation: 1.8,
      alpha: 0.5,
      boundary: 7,
      direction: 1,
      strength: 4.0,
    },
    cursor: { axis: 0, index: null },
    seed: 0,
    validationMessage: null,
  };
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

function clampSlider(name: SliderName, value: number): number {
  switch (name) {
    case "psi":
      return clamp(value, 0, 1);
    case "truncation":
      return clamp(value, 0.05, 5);
    case "alpha":
      return clamp(value, 0, 1);
    case "boundary":
      return Math.round(clamp(value, 0, 15));
    case "direction":
      return Math.round(clamp(value, 1, 4));
    case "strength":
      return clamp(value, -10, 10);
  }
}

function parseCode(text: string): number[] | null {
  let values: unknown;
  try {
    values = JSON.parse(text);
  } catch {
    return null;
  }
  if (!Array.isArray(values) || values.length === 0) return null;
  if (!values.every((v) => typeof v === "number" && Number.isFinite(v))) return null;
  return values as number[];
}

/** Pure state transition; never touches the network. */
export function reduce(state: SessionView, ev: SessionEvent): SessionView {
  switch (ev.kind) {
    case "checkpoint":
      // codes are checkpoint-specific, so switching drops them
      return {
        ...state,
        checkpoint: ev.info,
        source: null,
        target: null,
        validationMessage: null,
      };
    case "panel":
      return { ...state, panel: ev.panel };
    case "slider":
      return {
        ...state,
        sliders: { ...state.sliders, [ev.name]: clampSlider(ev.name, ev.value) },
      };
    case "preset":
      return {
        ...state,
        panel: "mix",
        sliders: { ...state.sliders, boundary: clampSlider("boundary", ev.boundary) },
      };
    case "seed":
      return { ...state, seed: Math.max(0, Math.round(ev.value)) };
    case "adopt":
      return state; // resolved by the explorer, which holds the last response
    case "paste": {
      const code = parseCode(ev.text);
      if (code === null) {
        return { ...state, validationMessage: "code must be a JSON array of finite numbers" };
      }
      const space = state.checkpoint?.arch === "stylegan" ? "w" : "z";
      const slot: CodeSlot = { code, space, volumeId: null };
      return {
        ...state,
        [ev.role]: slot,
        validationMessage: null,
      };
    }
    case "cursor":
      return { ...state, cursor: { axis: ev.axis, index: ev.index } };
  }
}

/** Which panel's request a given event commits, if any. */
export function panelFor(ev: SessionEvent): PanelName | null {
  if (ev.kind === "checkpoint") return "generate";
  if (ev.kind === "preset") return "mix";
  if (ev.kind === "seed") return "generate";
  if (ev.kind !== "slider") return null;
  switch (ev.name) {
    case "psi":
    case "truncation":
      return "generate";
    case "alpha":
      return "transition";
    case "boundary":
      return "mix";
    case "direction":
    case "strength":
      return "edit";
  }
}

/** The single API call a panel commit maps to, or null when the session
 * does not yet satisfy its preconditions. */
export function requestForPanel(state: SessionView, panel: PanelName): ApiRequest | null {
  const ck = state.checkpoint;
  if (ck === null) return null;
  switch (panel) {
    case "generate":
      return generateRequest({
        checkpoint: ck.name,
        arch: ck.arch,
        psi: state.sliders.psi,
        truncation: state.sliders.truncation,
        seed: state.seed,
      });
    case "transition": {
      if (state.source === null || state.target === null) return null;
      if (state.source.space !== state.target.space) return null;
      return transitionRequest({
        checkpoint: ck.name,
        codeA: state.source.code,
        codeB: state.target.code,
        space: state.source.space,
      });
    }
    case "mix": {
      if (ck.arch !== "stylegan") return null;
      if (state.source === null || state.target === null) return null;
      return mixRequest({
        checkpoint: ck.name,
        sourceCode: state.source.code,
        targetCode: state.target.code,
        boundary: state.sliders.boundary,
      });
    }
    case "edit": {
      if (state.source === null) return null;
      return editRequest({
        checkpoint: ck.name,
        code: state.source.code,
        directionIndex: state.sliders.direction,
        strength: state.sliders.strength,
      });
    }
  }
}
