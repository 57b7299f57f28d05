/** Heightmap colorization and the gripper glyph, drawn on a 2D canvas. */

import { ActiveScene, Selection } from "./session.js";

// Compact perceptual ramp (dark blue -> teal -> green -> yellow),
// anchors interpolated linearly.
const RAMP: [number, number, number][] = [
  [68, 1, 84],
  [59, 82, 139],
  [33, 145, 140],
  [94, 201, 98],
  [253, 231, 37],
];

export function colorize(value: number): [number, number, number] {
  const t = Math.min(Math.max(value, 0), 1) * (RAMP.length - 1);
  const i = Math.min(Math.floor(t), RAMP.length - 2);
  const f = t - i;
  return [
    Math.round(RAMP[i][0] + f * (RAMP[i + 1][0] - RAMP[i][0])),
    Math.round(RAMP[i][1] + f * (RAMP[i + 1][1] - RAMP[i][1])),
    Math.round(RAMP[i][2] + f * (RAMP[i + 1][2] - RAMP[i][2])),
  ];
}

/** 0.1 mm units -> display normalization (saturates at 80 mm). */
const DEPTH_UNITS_FULL_SCALE = 800;

export function sceneToImageData(scene: ActiveScene, zoom: number): ImageData {
  const n = scene.sidePx;
  const out = new ImageData(n * zoom, n * zoom);
  const { lo, hi } = scene.graspable;
  for (let r = 0; r < n; r++) {
    for (let c = 0; c < n; c++) {
      const v = scene.image.data[r * n + c] / DEPTH_UNITS_FULL_SCALE;
      let [red, green, blue] = colorize(v);
      const inMargin = r < lo || r >= hi || c < lo || c >= hi;
      if (inMargin) {
        red = Math.round(red * 0.35);
        green = Math.round(green * 0.35);
        blue = Math.round(blue * 0.35);
      }
      for (let dy = 0; dy < zoom; dy++) {
        for (let dx = 0; dx < zoom; dx++) {
          const o = ((r * zoom + dy) * n * zoom + c * zoom + dx) * 4;
          out.data[o] = red;
          out.data[o + 1] = green;
          out.data[o + 2] = blue;
          out.data[o + 3] = 255;
        }
      }
    }
  }
  return out;
}

/**
 * Gripper glyph: closing axis through the selection with two finger marks
 * separated by the stroke, plus a crosshair on the grasp point.
 */
export function drawGlyph(
  ctx: CanvasRenderingContext2D,
  scene: ActiveScene,
  sel: Selection,
  zoom: number
): void {
  const phi = (sel.angleIndex * Math.PI) / scene.angleCount;
  const dx = Math.cos(phi);
  const dy = Math.sin(phi);
  const cx = (sel.col + 0.5) * zoom;
  const cy = (sel.row + 0.5) * zoom;
  const half = (scene.strokePx / 2) * zoom;

  ctx.save();
  ctx.strokeStyle = "rgba(255, 255, 255, 0.9)";
  ctx.lineWidth = 1.5;
  ctx.setLineDash([4, 3]);
  ctx.beginPath();
  ctx.moveTo(cx - half * dx, cy - half * dy);
  ctx.lineTo(cx + half * dx, cy + half * dy);
  ctx.stroke();
  ctx.setLineDash([]);

  // finger marks: short strokes perpendicular to the closing axis
  const fw = 5 * zoom;
  for (const s of [-1, 1]) {
    const fx = cx + s * half * dx;
    const fy = cy + s * half * dy;
    ctx.strokeStyle = "#ff5252";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.moveTo(fx - (fw / 2) * -dy, fy - (fw / 2) * dx);
    ctx.lineTo(fx + (fw / 2) * -dy, fy + (fw / 2) * dx);
    ctx.stroke();
  }

  ctx.strokeStyle = "#ffffff";
  ctx.lineWidth = 1;
  ctx.beginPath();
  ctx.moveTo(cx - 4, cy);
  ctx.lineTo(cx + 4, cy);
  ctx.moveTo(cx, cy - 4);
  ctx.lineTo(cx, cy + 4);
  ctx.stroke();
  ctx.restore();
}
