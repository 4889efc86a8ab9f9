/** View models: pure projections of (session, last responses).
 *
 * Nothing here issues requests or touches the DOM; the browser entry
 * point paints these objects and the tests assert on them directly.
 */

import { EditResponse, GenerateResponse, MixResponse, TransitionResponse, volumePath } from "./api.js";
import { SlicePane, orthogonalViews } from "./slices.js";
import { SessionView } from "./state.js";

export interface GenerateView {
  volumeId: string;
  panes: [SlicePane, SlicePane, SlicePane];
  downloadUrl: string;
  code: number[];
  codeSpace: "z" | "w";
}

export function generateView(state: SessionView, resp: GenerateResponse | undefined): GenerateView | null {
  if (state.checkpoint === null || resp === undefined) return null;
  const vol = resp.volumes[0];
  const code = resp.codes[0];
  if (vol === undefined || code === undefined) return null;
  return {
    volumeId: vol.id,
    panes: orthogonalViews(vol.id, state.checkpoint.full_shape, state.cursor),
    downloadUrl: volumePath(vol.id),
    code,
    codeSpace: resp.code_space,
  };
}

export interface StripFrame {
  alpha: number; // weight on the source code: 1 = source, 0 = target
  volumeId: string | null; // endpoints may predate any stored volume
  url: string | null;
}

export interface TransitionView {
  frames: StripFrame[];
  selected: StripFrame;
}

/** Five-frame strip ordered source to target, so left to right runs from
 * alpha 1 down to 0. The endpoints reuse the volumes their codes came
 * from; scrubbing selects a frame without issuing another request. */
export function transitionView(
  state: SessionView,
  resp: TransitionResponse | undefined,
): TransitionView | null {
  if (resp === undefined || state.source === null || state.target === null) return null;
  const interior = resp.frames
    .map((f) => ({ alpha: f.alpha, volumeId: f.id, url: f.preview as string | null }))
    .sort((a, b) => b.alpha - a.alpha);
  const endpoint = (slot: { volumeId: string | null }, alpha: number): StripFrame => ({
    alpha,
    volumeId: slot.volumeId,
    url: slot.volumeId === null ? null : orthogonalViews(slot.volumeId, shapeOf(state), state.cursor)[0].url,
  });
  const frames = [endpoint(state.source, 1), ...interior, endpoint(state.target, 0)];
  const scrub = state.sliders.alpha;
  let selected = frames[0]!;
  for (const frame of frames) {
    if (Math.abs(frame.alpha - scrub) < Math.abs(selected.alpha - scrub)) selected = frame;
  }
  return { frames, selected };
}

function shapeOf(state: SessionView): [number, number, number] {
  return state.checkpoint?.full_shape ?? [32, 64, 64];
}

export interface MixView {
  volumeId: string;
  boundary: number;
  panes: [SlicePane, SlicePane, SlicePane];
}

export function mixView(state: SessionView, resp: MixResponse | undefined): MixView | null {
  if (resp === undefined) return null;
  return {
    volumeId: resp.id,
    boundary: resp.boundary,
    panes: orthogonalViews(resp.id, shapeOf(state), state.cursor),
  };
}

export interface EditView {
  editedId: string;
  residualId: string;
  originalId: string;
  panes: [SlicePane, SlicePane, SlicePane];
  /** Slice pairs the overlay composites; same axis and index per pair. */
  overlayPairs: { original: string; edited: string }[];
}

export function editView(state: SessionView, resp: EditResponse | undefined): EditView | null {
  if (resp === undefined) return null;
  const shape = shapeOf(state);
  const edited = orthogonalViews(resp.edited_id, shape, state.cursor);
  const original = orthogonalViews(resp.original_id, shape, state.cursor);
  return {
    editedId: resp.edited_id,
    residualId: resp.residual_id,
    originalId: resp.original_id,
    panes: edited,
    overlayPairs: edited.map((pane, i) => ({ original: original[i]!.url, edited: pane.url })),
  };
}

export const BOUNDARY_PRESETS = [3, 7, 12] as const;
