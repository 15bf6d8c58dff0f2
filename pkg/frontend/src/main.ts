/**
 * Sketch-pad wiring: draw on the canvas, submit to /retrieve, inspect
 * ranked results, refine and resubmit.  One request in flight at a time.
 */

import { ApiClient, DrawnQueryUnsupportedError } from "./api.js";
import { renderCards, renderClassList } from "./gallery.js";
import { HistoryEntry, pushHistory } from "./history.js";
import {
  DEFAULT_PEN_WIDTH,
  DEFAULT_RESOLUTION,
  isBlank,
  Point,
  rasterize,
  Stroke,
} from "./strokes.js";

const api = new ApiClient("");

const canvas = document.getElementById("pad") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const submitButton = document.getElementById("submit") as HTMLButtonElement;
const undoButton = document.getElementById("undo") as HTMLButtonElement;
const clearButton = document.getElementById("clear") as HTMLButtonElement;
const kInput = document.getElementById("k") as HTMLInputElement;
const targetSelect = document.getElementById("target") as HTMLSelectElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const gallery = document.getElementById("gallery") as HTMLDivElement;
const classList = document.getElementById("classes") as HTMLDivElement;
const historyStrip = document.getElementById("history") as HTMLDivElement;

let strokes: Stroke[] = [];
let drawing = false;
let inFlight = false;
let history: HistoryEntry[] = [];

function canvasPoint(event: MouseEvent | Touch): Point {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((event.clientX - rect.left) / rect.width) * DEFAULT_RESOLUTION,
    y: ((event.clientY - rect.top) / rect.height) * DEFAULT_RESOLUTION,
  };
}

function redraw(): void {
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#000000";
  ctx.lineWidth = DEFAULT_PEN_WIDTH;
  ctx.lineCap = "round";
  ctx.lineJoin = "round";
  for (const stroke of strokes) {
    if (!stroke.points.length) continue;
    ctx.beginPath();
    ctx.moveTo(stroke.points[0].x, stroke.points[0].y);
    for (const p of stroke.points.slice(1)) ctx.lineTo(p.x, p.y);
    ctx.stroke();
  }
  syncControls();
}

function syncControls(): void {
  submitButton.disabled = inFlight || isBlank(strokes);
  undoButton.disabled = strokes.length === 0;
}

function showBanner(text: string, kind: "error" | "notice"): void {
  banner.textContent = text;
  banner.className = `banner ${kind}`;
  banner.hidden = false;
}

function hideBanner(): void {
  banner.hidden = true;
}

canvas.addEventListener("mousedown", (e) => {
  drawing = true;
  strokes.push({ points: [canvasPoint(e)] });
  redraw();
});
canvas.addEventListener("mousemove", (e) => {
  if (!drawing) return;
  strokes[strokes.length - 1].points.push(canvasPoint(e));
  redraw();
});
for (const evt of ["mouseup", "mouseleave"] as const) {
  canvas.addEventListener(evt, () => {
    drawing = false;
    syncControls();
  });
}

undoButton.addEventListener("click", () => {
  strokes.pop();
  redraw();
});

clearButton.addEventListener("click", () => {
  strokes = [];
  redraw();
});

function renderHistory(): void {
  historyStrip.replaceChildren();
  for (const entry of history) {
    const img = document.createElement("img");
    img.src = entry.thumbnail;
    img.title = `k=${entry.k} → ${entry.targetModality}`;
    historyStrip.append(img);
  }
}

submitButton.addEventListener("click", async () => {
  if (inFlight || isBlank(strokes)) return;
  inFlight = true;
  hideBanner();
  syncControls();
  const k = Math.max(1, Math.min(1000, Number(kInput.value) || 10));
  const target = targetSelect.value;
  const grid = rasterize(strokes);
  try {
    const response = await api.retrievePixels(grid, k, target);
    renderCards(gallery, response.results);
    history = pushHistory(history, {
      thumbnail: canvas.toDataURL(),
      k,
      targetModality: target,
    });
    renderHistory();
  } catch (err) {
    if (err instanceof DrawnQueryUnsupportedError) {
      showBanner("This model does not accept drawn queries.", "notice");
    } else {
      showBanner("Retrieval failed - check the service and retry.", "error");
    }
  } finally {
    inFlight = false;
    syncControls();
  }
});

async function loadClasses(): Promise<void> {
  try {
    renderClassList(classList, await api.classes());
  } catch {
    showBanner("Could not load the class list - is the service running?", "error");
  }
}

redraw();
void loadClasses();
