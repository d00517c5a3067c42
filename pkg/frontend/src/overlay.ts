/** Pure pixel operations for the slice canvas (testable without a browser). */

export const MASK_COLOR: [number, number, number] = [255, 64, 32];
export const MASK_ALPHA = 0.45;

/**
 * Tint masked pixels of an RGBA buffer in place.
 * An empty mask leaves the buffer untouched; a full mask tints uniformly.
 */
export function compositeOverlay(
  rgba: Uint8ClampedArray,
  mask: Uint8Array,
  alpha: number = MASK_ALPHA,
  color: [number, number, number] = MASK_COLOR,
): Uint8ClampedArray {
  if (rgba.length !== mask.length * 4) {
    throw new Error(`buffer is ${rgba.length} bytes for ${mask.length} mask pixels`);
  }
  for (let i = 0; i < mask.length; i++) {
    if (!mask[i]) continue;
    const o = i * 4;
    rgba[o] = Math.round((1 - alpha) * rgba[o] + alpha * color[0]);
    rgba[o + 1] = Math.round((1 - alpha) * rgba[o + 1] + alpha * color[1]);
    rgba[o + 2] = Math.round((1 - alpha) * rgba[o + 2] + alpha * color[2]);
  }
  return rgba;
}

/** Project a voxel onto the current slice plane; null when on another slice. */
export function voxelToPlane(
  pos: [number, number, number],
  axis: 0 | 1 | 2,
  index: number,
): { row: number; col: number } | null {
  if (pos[axis] !== index) return null;
  if (axis === 0) return { row: pos[1], col: pos[2] };
  if (axis === 1) return { row: pos[0], col: pos[2] };
  return { row: pos[0], col: pos[1] };
}
