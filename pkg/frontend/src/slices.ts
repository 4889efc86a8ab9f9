/** Slice preview addressing and residual overlay compositing.
 *
 * The client does no image math beyond 8-bit display and this overlay:
 * slices arrive as server-rendered PNGs, and the edit panel composites
 * the signed difference of two 8-bit planes into a red/blue tint over
 * the original grayscale.
 */

import { SliceCursor } from "./state.js";

export function centerIndex(dim: number): number {
  return Math.floor(dim / 2);
}

export function sliceUrl(volumeId: string, axis: 0 | 1 | 2, index: number): string {
  return `/slice/${volumeId}?axis=${axis}&index=${index}`;
}

export interface SlicePane {
  axis: 0 | 1 | 2;
  index: number;
  url: string;
}

/** Three synchronized orthogonal planes. The cursor overrides the index
 * on its own axis; the other two stay at the volume center. */
export function orthogonalViews(
  volumeId: string,
  shape: readonly [number, number, number],
  cursor: SliceCursor,
): [SlicePane, SlicePane, SlicePane] {
  const panes = [0, 1, 2].map((axis) => {
    const dim = shape[axis]!;
    let index = centerIndex(dim);
    if (axis === cursor.axis && cursor.index !== null) {
      index = Math.min(dim - 1, Math.max(0, cursor.index));
    }
    return { axis: axis as 0 | 1 | 2, index, url: sliceUrl(volumeId, axis as 0 | 1 | 2, index) };
  });
  return panes as [SlicePane, SlicePane, SlicePane];
}

export const OVERLAY_GAIN = 2;

function clampByte(v: number): number {
  return Math.min(255, Math.max(0, v));
}

/** RGBA overlay of edited minus original: voxels that brightened tint
 * red, voxels that darkened tint blue, unchanged ones stay gray. */
export function composeResidualOverlay(
  original: Uint8Array,
  edited: Uint8Array,
): Uint8ClampedArray {
  if (original.length !== edited.length) {
    throw new Error("overlay planes must have the same size");
  }
  const out = new Uint8ClampedArray(original.length * 4);
  for (let i = 0; i < original.length; i++) {
    const v = original[i]!;
    const d = edited[i]! - v;
    const up = d > 0 ? d : 0;
    const down = d < 0 ? -d : 0;
    out[4 * i] = clampByte(v + OVERLAY_GAIN * up);
    out[4 * i + 1] = clampByte(v - OVERLAY_GAIN * (up + down));
    out[4 * i + 2] = clampByte(v + OVERLAY_GAIN * down);
    out[4 * i + 3] = 255;
  }
  return out;
}

/** Hex SHA-256 of a payload; used to pin previews in the UI and tests. */
export async function payloadHash(bytes: Uint8Array): Promise<string> {
  const digest = await crypto.subtle.digest("SHA-256", bytes as BufferSource);
  return [...new Uint8Array(digest)].map((b) => b.toString(16).padStart(2, "0")).join("");
}
