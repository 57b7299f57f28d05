/**
 * Minimal decoder for the 16-bit grayscale PNGs the annotation API serves.
 *
 * Depth heightmaps travel as non-interlaced grayscale PNGs with 16-bit
 * samples (0.1 mm per unit). Inflate goes through the platform's
 * DecompressionStream, so this works in browsers and in Node without
 * dependencies.
 */

export interface GrayImage {
  width: number;
  height: number;
  /** row-major samples, one uint16 per pixel */
  data: Uint16Array;
}

const PNG_SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

function u32(bytes: Uint8Array, off: number): number {
  return (
    ((bytes[off] << 24) >>> 0) + (bytes[off + 1] << 16) + (bytes[off + 2] << 8) + bytes[off + 3]
  );
}

async function inflate(compressed: Uint8Array): Promise<Uint8Array> {
  const ds = new DecompressionStream("deflate");
  const stream = new Blob([compressed as BlobPart]).stream().pipeThrough(ds);
  const buf = await new Response(stream).arrayBuffer();
  return new Uint8Array(buf);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

/** Undo PNG scanline filtering in place; returns the raw sample bytes. */
function unfilter(raw: Uint8Array, width: number, height: number, bpp: number): Uint8Array {
  const stride = width * bpp;
  const out = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const line = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const prev = y > 0 ? out.subarray((y - 1) * stride, y * stride) : null;
    const cur = out.subarray(y * stride, (y + 1) * stride);
    for (let x = 0; x < stride; x++) {
      const a = x >= bpp ? cur[x - bpp] : 0;
      const b = prev ? prev[x] : 0;
      const c = x >= bpp && prev ? prev[x - bpp] : 0;
      let v = line[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += Math.floor((a + b) / 2); break;
        case 4: v += paeth(a, b, c); break;
        default: throw new Error(`unsupported PNG filter ${filter}`);
      }
      cur[x] = v & 0xff;
    }
  }
  return out;
}

export async function decodeGray16Png(bytes: Uint8Array): Promise<GrayImage> {
  for (let i = 0; i < PNG_SIGNATURE.length; i++) {
    if (bytes[i] !== PNG_SIGNATURE[i]) throw new Error("not a PNG file");
  }
  let off = 8;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (off < bytes.length) {
    const length = u32(bytes, off);
    const type = String.fromCharCode(...bytes.subarray(off + 4, off + 8));
    const body = bytes.subarray(off + 8, off + 8 + length);
    if (type === "IHDR") {
      width = u32(body, 0);
      height = u32(body, 4);
      const bitDepth = body[8];
      const colorType = body[9];
      const interlace = body[12];
      if (bitDepth !== 16 || colorType !== 0 || interlace !== 0) {
        throw new Error(
          `expected 16-bit non-interlaced grayscale, got depth=${bitDepth} color=${colorType}`
        );
      }
    } else if (type === "IDAT") {
      idat.push(body);
    } else if (type === "IEND") {
      break;
    }
    off += 12 + length; // length + type + body + crc
  }
  if (!width || !height) throw new Error("PNG missing IHDR");
  const compressed = new Uint8Array(idat.reduce((n, c) => n + c.length, 0));
  let pos = 0;
  for (const chunk of idat) {
    compressed.set(chunk, pos);
    pos += chunk.length;
  }
  const raw = await inflate(compressed);
  const samples = unfilter(raw, width, height, 2);
  const data = new Uint16Array(width * height);
  for (let i = 0; i < data.length; i++) {
    data[i] = (samples[2 * i] << 8) | samples[2 * i + 1]; // big-endian
  }
  return { width, height, data };
}

export function decodeBase64(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}
