import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import { decodeBase64, decodeGray16Png } from "../src/png.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = JSON.parse(readFileSync(join(here, "png_fixture.json"), "utf-8")) as {
  b64: string;
  width: number;
  height: number;
  probe: Record<string, number>;
  sum: number;
};

describe("16-bit grayscale PNG decoding", () => {
  it("decodes dimensions and exact sample values", async () => {
    const img = await decodeGray16Png(decodeBase64(fixture.b64));
    expect(img.width).toBe(fixture.width);
    expect(img.height).toBe(fixture.height);
    for (const [key, value] of Object.entries(fixture.probe)) {
      const [r, c] = key.split(",").map(Number);
      expect(img.data[r * img.width + c]).toBe(value);
    }
    let sum = 0;
    for (const v of img.data) sum += v;
    expect(sum).toBe(fixture.sum);
  });

  it("rejects non-PNG payloads", async () => {
    await expect(decodeGray16Png(new Uint8Array([1, 2, 3, 4]))).rejects.toThrow("not a PNG");
  });
});
