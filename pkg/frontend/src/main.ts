/** Browser entry point: wires the slice viewer to the session and the API. */

import { Api, type CaseInfo } from "./api.js";
import { MASK_ALPHA, MASK_COLOR, compositeOverlay, voxelToPlane } from "./overlay.js";
import { decodeRle, sliceMask } from "./rle.js";
import { MAX_CLICKS_PER_POLARITY, UiSession, planeDims, screenToVoxel, type Polarity } from "./session.js";

const SCALE = 8;

const api = new Api("");
let cases: CaseInfo[] = [];
let session: UiSession | null = null;

const el = {
  caseSelect: byId<HTMLSelectElement>("case-select"),
  axis: byId<HTMLSelectElement>("axis-select"),
  slice: byId<HTMLInputElement>("slice-range"),
  sliceLabel: byId<HTMLSpanElement>("slice-label"),
  windowLo: byId<HTMLInputElement>("window-lo"),
  windowHi: byId<HTMLInputElement>("window-hi"),
  canvas: byId<HTMLCanvasElement>("view"),
  status: byId<HTMLDivElement>("status"),
  metrics: byId<HTMLDivElement>("metrics"),
  clicks: byId<HTMLUListElement>("click-list"),
  curve: byId<HTMLCanvasElement>("curve"),
  undo: byId<HTMLButtonElement>("undo"),
  clear: byId<HTMLButtonElement>("clear"),
  fgRadio: byId<HTMLInputElement>("polarity-fg"),
};

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function polarity(): Polarity {
  return el.fgRadio.checked ? "foreground" : "background";
}

function status(message: string, isError = false): void {
  el.status.textContent = message;
  el.status.className = isError ? "status error" : "status";
}

async function init(): Promise<void> {
  cases = await api.listCases();
  el.caseSelect.innerHTML = "";
  for (const c of cases) {
    const option = document.createElement("option");
    option.value = c.id;
    option.textContent = `${c.id} (${c.shape.join("x")}${c.has_gt ? ", GT" : ""})`;
    el.caseSelect.appendChild(option);
  }
  if (cases.length === 0) {
    status("no cases in the dataset directory", true);
    return;
  }
  await selectCase(cases[0].id);
}

async function selectCase(caseId: string): Promise<void> {
  const info = cases.find((c) => c.id === caseId);
  if (!info) return;
  session = new UiSession(info, api);
  session.onUpdate = () => {
    void redraw();
    renderSidePanel();
  };
  el.slice.max = String(info.shape[0] - 1);
  el.slice.value = String(session.index);
  status(`loaded ${caseId}; running auto segmentation`);
  await session.start();
  status(`ready: ${caseId} (left click = ${polarity()}, right click = background)`);
}

function currentAxis(): 0 | 1 | 2 {
  return Number(el.axis.value) as 0 | 1 | 2;
}

async function redraw(): Promise<void> {
  if (!session) return;
  const axis = currentAxis();
  const index = session.index;
  const [rows, cols] = planeDims(session.caseInfo.shape, axis);
  const lo = Number(el.windowLo.value);
  const hi = Number(el.windowHi.value);

  const img = new Image();
  img.src = api.sliceUrl(session.caseInfo.id, axis, index, "pet", [lo, hi]);
  await img.decode();

  const off = document.createElement("canvas");
  off.width = cols;
  off.height = rows;
  const offCtx = off.getContext("2d")!;
  offCtx.drawImage(img, 0, 0);
  if (session.maskCounts) {
    const mask = decodeRle(session.maskCounts, session.caseInfo.shape);
    const plane = sliceMask(mask, session.caseInfo.shape, axis, index);
    const data = offCtx.getImageData(0, 0, cols, rows);
    compositeOverlay(data.data, plane.data, MASK_ALPHA, MASK_COLOR);
    offCtx.putImageData(data, 0, 0);
  }

  const ctx = el.canvas.getContext("2d")!;
  el.canvas.width = cols * SCALE;
  el.canvas.height = rows * SCALE;
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, el.canvas.width, el.canvas.height);

  for (const click of session.clicks) {
    const hit = voxelToPlane(click.pos, axis, index);
    if (!hit) continue;
    ctx.strokeStyle = click.polarity === "foreground" ? "#2ecc40" : "#ff4136";
    ctx.lineWidth = 2;
    const x = (hit.col + 0.5) * SCALE;
    const y = (hit.row + 0.5) * SCALE;
    ctx.beginPath();
    ctx.moveTo(x - 6, y);
    ctx.lineTo(x + 6, y);
    ctx.moveTo(x, y - 6);
    ctx.lineTo(x, y + 6);
    ctx.stroke();
  }
  el.sliceLabel.textContent = `slice ${index}`;
}

function renderSidePanel(): void {
  if (!session) return;
  if (session.lastError) status(session.lastError, true);

  el.clicks.innerHTML = "";
  session.clicks.forEach((c, i) => {
    const li = document.createElement("li");
    li.textContent = `${i + 1}. ${c.polarity === "foreground" ? "+" : "-"} (${c.pos.join(", ")})`;
    el.clicks.appendChild(li);
  });

  if (session.metrics) {
    const m = session.metrics;
    el.metrics.textContent =
      `Dice ${m.dice.toFixed(4)} | FPvol ${m.fpvol_mm3.toFixed(1)} mm3 | ` +
      `FNvol ${m.fnvol_mm3.toFixed(1)} mm3 | ${session.voxelCount} voxels`;
  } else {
    el.metrics.textContent = `${session.voxelCount} voxels (no ground truth for metrics)`;
  }
  drawCurve();
}

function drawCurve(): void {
  if (!session) return;
  const ctx = el.curve.getContext("2d")!;
  const { width, height } = el.curve;
  ctx.clearRect(0, 0, width, height);
  const history = session.history;
  if (history.length < 2) return;
  const maxClicks = Math.max(...history.map((h) => h.clickCount), 1);
  const maxFn = Math.max(...history.map((h) => h.metrics.fnvol_mm3), 1);
  const x = (k: number) => 8 + (k / maxClicks) * (width - 16);

  ctx.strokeStyle = "#2ecc40";
  ctx.beginPath();
  history.forEach((h, i) => {
    const y = height - 8 - h.metrics.dice * (height - 16);
    i ? ctx.lineTo(x(h.clickCount), y) : ctx.moveTo(x(h.clickCount), y);
  });
  ctx.stroke();

  ctx.strokeStyle = "#ff4136";
  ctx.beginPath();
  history.forEach((h, i) => {
    const y = height - 8 - (h.metrics.fnvol_mm3 / maxFn) * (height - 16);
    i ? ctx.lineTo(x(h.clickCount), y) : ctx.moveTo(x(h.clickCount), y);
  });
  ctx.stroke();
}

async function handleCanvasClick(event: MouseEvent, forced?: Polarity): Promise<void> {
  if (!session) return;
  const rect = el.canvas.getBoundingClientRect();
  const pos = screenToVoxel(
    event.clientX - rect.left,
    event.clientY - rect.top,
    rect.width,
    rect.height,
    session.caseInfo.shape,
    currentAxis(),
    session.index,
  );
  if (!pos) return;
  const pol = forced ?? polarity();
  const result = await session.placeClick(pos, pol);
  if (!result.ok) status(result.reason ?? "click rejected", true);
  else status(`${pol} click at (${pos.join(", ")}); ${session.clicks.length} total`);
  await redraw();
  renderSidePanel();
}

el.canvas.addEventListener("click", (e) => void handleCanvasClick(e));
el.canvas.addEventListener("contextmenu", (e) => {
  e.preventDefault();
  void handleCanvasClick(e, "background");
});
el.caseSelect.addEventListener("change", () => void selectCase(el.caseSelect.value));
el.axis.addEventListener("change", () => {
  if (!session) return;
  const dim = session.caseInfo.shape[currentAxis()];
  el.slice.max = String(dim - 1);
  session.index = Math.min(session.index, dim - 1);
  el.slice.value = String(session.index);
  void redraw();
});
el.slice.addEventListener("input", () => {
  if (!session) return;
  session.index = Number(el.slice.value);
  void redraw();
});
for (const input of [el.windowLo, el.windowHi]) {
  input.addEventListener("change", () => void redraw());
}
el.undo.addEventListener("click", async () => {
  if (!session) return;
  const undone = await session.undo();
  status(undone ? "undid last click" : "nothing to undo");
  await redraw();
  renderSidePanel();
});
el.clear.addEventListener("click", async () => {
  if (!session) return;
  await session.clear();
  status("cleared clicks; back to auto mode");
  await redraw();
  renderSidePanel();
});

document.title = `clickseg (max ${MAX_CLICKS_PER_POLARITY} clicks per polarity)`;
void init();
