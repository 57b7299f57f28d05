/** DOM wiring: canvas, keyboard/wheel angle stepping, toasts, tallies. */

import { ApiClient } from "./api.js";
import { drawGlyph, sceneToImageData } from "./render.js";
import { AnnotationSessionStore } from "./session.js";

const ZOOM = 4;

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusLine = document.getElementById("status")!;
const tallies = document.getElementById("tallies")!;
const toast = document.getElementById("toast")!;
const submitBtn = document.getElementById("submit") as HTMLButtonElement;
const retryBtn = document.getElementById("retry") as HTMLButtonElement;

const store = new AnnotationSessionStore(new ApiClient(""));

function render() {
  const { phase, scene, selection } = store;
  tallies.textContent =
    `${store.submitted} labeled / ${store.successes} successes`;
  retryBtn.hidden = !store.errorMessage;
  submitBtn.disabled = !(phase === "active" && selection);

  if (phase === "loading") {
    statusLine.textContent = "loading scene...";
    return;
  }
  if (phase === "error") {
    statusLine.textContent = `error: ${store.errorMessage}`;
    return;
  }
  if (phase === "complete") {
    statusLine.textContent =
      `session complete: ${store.submitted} scenes labeled, ` +
      `${store.successes} successful grasps`;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    return;
  }
  if (!scene) return;
  canvas.width = scene.sidePx * ZOOM;
  canvas.height = scene.sidePx * ZOOM;
  ctx.putImageData(sceneToImageData(scene, ZOOM), 0, 0);
  if (selection) {
    drawGlyph(ctx, scene, selection, ZOOM);
    const phi = store.angleRadians();
    statusLine.textContent =
      `${scene.sceneId}: grasp at (${selection.row}, ${selection.col}), ` +
      `angle ${(phi * 180 / Math.PI).toFixed(1)} deg ` +
      `(${selection.angleIndex + 1}/${scene.angleCount})`;
  } else {
    statusLine.textContent =
      `${scene.sceneId}: click a grasp point inside the bright region`;
  }
}

function showToast(text: string, good: boolean) {
  toast.textContent = text;
  toast.className = good ? "toast good" : "toast bad";
  toast.hidden = false;
  setTimeout(() => (toast.hidden = true), 2500);
}

canvas.addEventListener("click", (ev) => {
  const rect = canvas.getBoundingClientRect();
  const col = Math.floor((ev.clientX - rect.left) / ZOOM);
  const row = Math.floor((ev.clientY - rect.top) / ZOOM);
  if (!store.select(row, col)) {
    showToast("outside the graspable region", false);
  }
});

canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  store.stepAngle(ev.deltaY > 0 ? 1 : -1);
});

window.addEventListener("keydown", (ev) => {
  if (ev.key === "ArrowLeft") store.stepAngle(-1);
  else if (ev.key === "ArrowRight") store.stepAngle(1);
  else if (ev.key === "Enter") void doSubmit();
});

async function doSubmit() {
  const res = await store.submit();
  if (res) {
    showToast(
      res.outcome === "success" ? "success" : `failure: ${res.failure_reason}`,
      res.outcome === "success"
    );
  }
}

submitBtn.addEventListener("click", () => void doSubmit());
retryBtn.addEventListener("click", () => void store.load());

store.onChange = render;
void store.load();
