/**
 * Run-length mask transport, mirroring the server's wire format:
 * alternating run lengths over the flattened z-major array, first run
 * counting zeros (possibly zero-length when the mask starts with ones).
 */

export type Shape3 = [number, number, number];

export function decodeRle(counts: number[], shape: Shape3): Uint8Array {
  const total = shape[0] * shape[1] * shape[2];
  let sum = 0;
  for (const c of counts) sum += c;
  if (sum !== total) {
    throw new Error(`RLE counts sum to ${sum}, expected ${total}`);
  }
  const out = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const c of counts) {
    if (value) out.fill(1, pos, pos + c);
    pos += c;
    value ^= 1;
  }
  return out;
}

export function encodeRle(mask: Uint8Array): number[] {
  const counts: number[] = [];
  if (mask.length === 0) return counts;
  let current = 0;
  let run = 0;
  for (let i = 0; i < mask.length; i++) {
    const v = mask[i] ? 1 : 0;
    if (v === current) {
      run++;
    } else {
      counts.push(run);
      current = v;
      run = 1;
    }
  }
  counts.push(run);
  return counts;
}

/** Extract one 2D slice (row-major) from a flat z-major mask. */
export function sliceMask(
  mask: Uint8Array,
  shape: Shape3,
  axis: 0 | 1 | 2,
  index: number,
): { rows: number; cols: number; data: Uint8Array } {
  const [nz, ny, nx] = shape;
  if (axis === 0) {
    const data = mask.subarray(index * ny * nx, (index + 1) * ny * nx);
    return { rows: ny, cols: nx, data: new Uint8Array(data) };
  }
  if (axis === 1) {
    const out = new Uint8Array(nz * nx);
    for (let z = 0; z < nz; z++) {
      const base = z * ny * nx + index * nx;
      out.set(mask.subarray(base, base + nx), z * nx);
    }
    return { rows: nz, cols: nx, data: out };
  }
  const out = new Uint8Array(nz * ny);
  for (let z = 0; z < nz; z++) {
    for (let y = 0; y < ny; y++) {
      out[z * ny + y] = mask[z * ny * nx + y * nx + index];
    }
  }
  return { rows: nz, cols: ny, data: out };
}

/** Voxel count per z-slice; cross-checkable against the server's debug counts. */
export function sliceCounts(mask: Uint8Array, shape: Shape3): number[] {
  const [nz, ny, nx] = shape;
  const per = ny * nx;
  const out: number[] = [];
  for (let z = 0; z < nz; z++) {
    let n = 0;
    const base = z * per;
    for (let i = 0; i < per; i++) n += mask[base + i];
    out.push(n);
  }
  return out;
}
