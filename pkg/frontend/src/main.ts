/** DOM wiring for the studio: painter canvas, workbench controls, gallery,
 * and interpolation timeline. All model inputs are validated client-side
 * before any request leaves the browser. */

import { StudioApi, ApiError } from "./api";
import { decodeBase64 } from "./b64";
import { Gallery, ProvenanceRecord } from "./gallery";
import { neutralFaceLandmarks, stampRegionsFor, FACE_CLASS_COUNT } from "./landmarks";
import { classColor, classColorCss } from "./palette";
import { PaintSurface } from "./painter";
import { GenerateRequest, ModelInfo, validateGenerateRequest } from "./wire";

const api = new StudioApi("");
const gallery = new Gallery();

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const statusEl = $("status");
const paintCanvas = $<HTMLCanvasElement>("paint-canvas");
const resultCanvas = $<HTMLCanvasElement>("result-canvas");
const timelineCanvas = $<HTMLCanvasElement>("timeline-preview");

let models: ModelInfo[] = [];
let model: ModelInfo | null = null;
let surface: PaintSurface | null = null;
let activeClass = 1;
let attrBits: number[] = [];
let polygonPoints: Array<[number, number]> = [];
let overlay: Uint8Array | null = null;
let timelineFrames: { t: number; image_b64: string }[] = [];
let playTimer: number | null = null;
let endpointA: ProvenanceRecord | null = null;
let endpointB: ProvenanceRecord | null = null;

function setStatus(text: string, isError = false) {
  statusEl.textContent = text;
  statusEl.className = isError ? "error" : "";
}

function renderSurface() {
  if (!surface || !model) return;
  const ctx = paintCanvas.getContext("2d")!;
  const scale = paintCanvas.width / model.image_size;
  const img = ctx.createImageData(model.image_size, model.image_size);
  for (let i = 0; i < surface.data.length; i++) {
    const { r, g, b } = classColor(surface.data[i]);
    img.data[i * 4] = r;
    img.data[i * 4 + 1] = g;
    img.data[i * 4 + 2] = b;
    img.data[i * 4 + 3] = 255;
  }
  if (overlay) {
    for (let i = 0; i < overlay.length; i++) {
      if (overlay[i] !== surface.data[i]) {
        img.data[i * 4] = 255;
        img.data[i * 4 + 1] = 80;
        img.data[i * 4 + 2] = 80;
      }
    }
  }
  const off = new OffscreenCanvas(model.image_size, model.image_size);
  off.getContext("2d")!.putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, paintCanvas.width, paintCanvas.height);
  ctx.drawImage(off, 0, 0, paintCanvas.width, paintCanvas.height);
  if (polygonPoints.length > 0) {
    ctx.strokeStyle = "#fff";
    ctx.beginPath();
    polygonPoints.forEach(([x, y], i) => {
      const px = (x + 0.5) * scale;
      const py = (y + 0.5) * scale;
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }
  $("undo-btn").toggleAttribute("disabled", !surface.canUndo);
  $("redo-btn").toggleAttribute("disabled", !surface.canRedo);
}

function drawPngTo(canvas: HTMLCanvasElement, imageB64: string) {
  const blob = new Blob([decodeBase64(imageB64)], { type: "image/png" });
  const url = URL.createObjectURL(blob);
  const img = new Image();
  img.onload = () => {
    const ctx = canvas.getContext("2d")!;
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
    URL.revokeObjectURL(url);
  };
  img.src = url;
}

function rebuildClassPalette() {
  if (!model) return;
  const host = $("class-palette");
  host.innerHTML = "";
  for (let k = 0; k < model.n_s; k++) {
    const chip = document.createElement("button");
    chip.className = "class-chip" + (k === activeClass ? " active" : "");
    chip.style.background = classColorCss(k);
    chip.title = `class ${k}${k === 0 ? " (background)" : ""}`;
    chip.onclick = () => {
      activeClass = k;
      rebuildClassPalette();
    };
    host.appendChild(chip);
  }
}

function rebuildAttrToggles() {
  if (!model) return;
  attrBits = attrBits.length === model.n_c ? attrBits : new Array(model.n_c).fill(0);
  if (!attrBits.includes(1) && attrBits.length) attrBits[0] = 1;
  const host = $("attr-toggles");
  host.innerHTML = "";
  attrBits.forEach((bit, i) => {
    const btn = document.createElement("button");
    btn.className = "attr-toggle" + (bit ? " on" : "");
    btn.textContent = `a${i}:${bit}`;
    btn.onclick = () => {
      attrBits[i] = bit ? 0 : 1;
      rebuildAttrToggles();
    };
    host.appendChild(btn);
  });
}

function canvasToPixel(ev: MouseEvent): [number, number] {
  if (!model) throw new Error("no model");
  const rect = paintCanvas.getBoundingClientRect();
  const scale = paintCanvas.width / model.image_size;
  const x = Math.floor(((ev.clientX - rect.left) / rect.width) * paintCanvas.width / scale);
  const y = Math.floor(((ev.clientY - rect.top) / rect.height) * paintCanvas.height / scale);
  return [
    Math.max(0, Math.min(model.image_size - 1, x)),
    Math.max(0, Math.min(model.image_size - 1, y)),
  ];
}

function currentRequest(): GenerateRequest {
  if (!model || !surface) throw new Error("model not ready");
  return {
    model_id: model.id,
    seed: Number($<HTMLInputElement>("seed-input").value),
    z: null,
    attributes: [...attrBits],
    segmentation: surface.exportWire(),
  };
}

async function runGenerate() {
  if (!model || !surface) return;
  const req = currentRequest();
  const issues = validateGenerateRequest(req, model);
  if (issues.length > 0) {
    setStatus(`blocked: ${issues[0].field}: ${issues[0].reason}`, true);
    return;
  }
  const requestId = gallery.begin(req);
  setStatus(`generating #${requestId}...`);
  try {
    const resp = await api.generate(req);
    const record = gallery.complete(requestId, resp);
    drawPngTo(resultCanvas, record.imageB64);
    appendGalleryEntry(record);
    setStatus(`done #${requestId} (seed ${record.seed})`);
  } catch (err) {
    gallery.abort(requestId);
    setStatus(err instanceof ApiError ? `server: ${err.message}` : String(err), true);
  }
}

function appendGalleryEntry(record: ProvenanceRecord) {
  const fig = document.createElement("figure");
  const img = document.createElement("img");
  img.src = `data:image/png;base64,${record.imageB64}`;
  const cap = document.createElement("figcaption");
  cap.textContent = `#${record.requestId} s${record.seed} [${record.attributes.join("")}]`;
  fig.append(img, cap);
  fig.onclick = () => restoreRecord(record);
  $("gallery").prepend(fig);
}

async function restoreRecord(record: ProvenanceRecord) {
  if (!model || !surface) return;
  if (record.modelId !== model.id) {
    setStatus(`entry #${record.requestId} belongs to model ${record.modelId}`, true);
    return;
  }
  surface.importWire(record.segmentation);
  attrBits = [...record.attributes];
  if (record.seed !== null) $<HTMLInputElement>("seed-input").value = String(record.seed);
  rebuildAttrToggles();
  renderSurface();
  const req = gallery.restoreRequest(record);
  const requestId = gallery.begin(req);
  try {
    const resp = await api.generate(req);
    const fresh = gallery.complete(requestId, resp);
    drawPngTo(resultCanvas, fresh.imageB64);
    setStatus(
      fresh.imageB64 === record.imageB64 || record.imageB64 === ""
        ? `restored #${record.requestId} (reproduced)`
        : `restored #${record.requestId} (image differs!)`,
    );
  } catch (err) {
    gallery.abort(requestId);
    setStatus(String(err), true);
  }
}

async function runOverlay() {
  if (!model) return;
  const last = gallery.entries[gallery.entries.length - 1];
  if (!last) {
    setStatus("generate first", true);
    return;
  }
  try {
    const resp = await api.segment(model.id, last.imageB64);
    overlay = decodeBase64(resp.index_map_b64);
    renderSurface();
    setStatus("overlay: red marks estimate/input disagreement");
  } catch (err) {
    setStatus(String(err), true);
  }
}

async function runTimeline() {
  if (!model || !endpointA || !endpointB) {
    setStatus("set both endpoints from gallery seeds first", true);
    return;
  }
  if (endpointA.modelId !== endpointB.modelId) {
    setStatus("endpoints belong to different models", true);
    return;
  }
  if (endpointA.seed === null || endpointB.seed === null) {
    setStatus("endpoints need seeded latents", true);
    return;
  }
  const steps = Number($<HTMLInputElement>("timeline-steps").value);
  try {
    const resp = await api.interpolate({
      model_id: model.id,
      mode: "latent",
      steps,
      seed0: endpointA.seed,
      seed1: endpointB.seed,
      attributes: [...endpointA.attributes],
      segmentation: endpointA.segmentation,
    });
    timelineFrames = resp.frames;
    const slider = $<HTMLInputElement>("timeline-slider");
    slider.max = String(timelineFrames.length - 1);
    slider.value = "0";
    slider.disabled = false;
    $("timeline-play").removeAttribute("disabled");
    showTimelineFrame(0);
    setStatus(`timeline: ${timelineFrames.length} frames`);
  } catch (err) {
    setStatus(String(err), true);
  }
}

function showTimelineFrame(index: number) {
  const frame = timelineFrames[index];
  if (!frame) return;
  drawPngTo(timelineCanvas, frame.image_b64);
  $("timeline-t").textContent = `t = ${frame.t.toFixed(3)}`;
}

function wireEvents() {
  $("generate-btn").onclick = runGenerate;
  $("overlay-btn").onclick = runOverlay;
  $("resample-btn").onclick = () => {
    if (!$<HTMLInputElement>("lock-latent").checked) {
      $<HTMLInputElement>("seed-input").value = String(
        Math.floor(Math.random() * 2 ** 31),
      );
    } else {
      setStatus("latent is locked");
    }
  };
  $("undo-btn").onclick = () => {
    surface?.undo();
    renderSurface();
  };
  $("redo-btn").onclick = () => {
    surface?.redo();
    renderSurface();
  };
  $("clear-btn").onclick = () => {
    surface?.clear(0);
    renderSurface();
  };
  $("stamp-btn").onclick = () => {
    if (!model || !surface) return;
    if (model.n_s < FACE_CLASS_COUNT) {
      setStatus(`face stamp needs ${FACE_CLASS_COUNT} classes, model has ${model.n_s}`, true);
      return;
    }
    surface.stamp(stampRegionsFor(neutralFaceLandmarks(model.image_size)));
    renderSurface();
  };
  $("export-btn").onclick = () => {
    if (!surface) return;
    const payload = surface.exportWire();
    const blob = new Blob([JSON.stringify(payload)], { type: "application/json" });
    downloadBlob(blob, "segmentation.json");
  };
  $("import-btn").onclick = () => $<HTMLInputElement>("import-file").click();
  $<HTMLInputElement>("import-file").onchange = async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file || !surface || !model) return;
    try {
      const bitmap = await createImageBitmap(file);
      if (bitmap.width !== model.image_size || bitmap.height !== model.image_size) {
        throw new Error(
          `image is ${bitmap.width}x${bitmap.height}, model needs ${model.image_size}`,
        );
      }
      const off = new OffscreenCanvas(bitmap.width, bitmap.height);
      const ctx = off.getContext("2d")!;
      ctx.drawImage(bitmap, 0, 0);
      const rgba = ctx.getImageData(0, 0, bitmap.width, bitmap.height).data;
      const idx = new Uint8Array(bitmap.width * bitmap.height);
      for (let i = 0; i < idx.length; i++) idx[i] = rgba[i * 4];
      surface.importIndexMap(idx);
      renderSurface();
      setStatus("imported index image");
    } catch (err) {
      setStatus(String(err), true);
    }
  };
  $("session-export").onclick = () => {
    downloadBlob(new Blob([gallery.exportSession()], { type: "application/json" }), "session.json");
  };
  $("session-import").onclick = () => $<HTMLInputElement>("session-file").click();
  $<HTMLInputElement>("session-file").onchange = async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    try {
      gallery.importSession(await file.text());
      setStatus(`imported ${gallery.entries.length} provenance records; click to regenerate`);
      $("gallery").innerHTML = "";
      for (const record of gallery.entries) appendGalleryEntry(record);
    } catch (err) {
      setStatus(String(err), true);
    }
  };
  $("endpoint-a").onclick = () => {
    endpointA = gallery.entries[gallery.entries.length - 1] ?? null;
    setStatus(endpointA ? `endpoint A = #${endpointA.requestId}` : "gallery empty", !endpointA);
  };
  $("endpoint-b").onclick = () => {
    endpointB = gallery.entries[gallery.entries.length - 1] ?? null;
    setStatus(endpointB ? `endpoint B = #${endpointB.requestId}` : "gallery empty", !endpointB);
  };
  $("timeline-run").onclick = runTimeline;
  $<HTMLInputElement>("timeline-slider").oninput = (ev) => {
    showTimelineFrame(Number((ev.target as HTMLInputElement).value));
  };
  $("timeline-play").onclick = () => {
    if (playTimer !== null) {
      clearInterval(playTimer);
      playTimer = null;
      $("timeline-play").textContent = "play";
      return;
    }
    const slider = $<HTMLInputElement>("timeline-slider");
    $("timeline-play").textContent = "stop";
    playTimer = window.setInterval(() => {
      const next = (Number(slider.value) + 1) % timelineFrames.length;
      slider.value = String(next);
      showTimelineFrame(next);
    }, 220);
  };

  let painting = false;
  paintCanvas.onpointerdown = (ev) => {
    if (!surface || !model) return;
    const [x, y] = canvasToPixel(ev);
    const tool = $<HTMLSelectElement>("tool-select").value;
    if (tool === "brush") {
      painting = true;
      surface.brush(x, y, Number($<HTMLInputElement>("brush-size").value), activeClass);
    } else if (tool === "polygon") {
      polygonPoints.push([x, y]);
      $("polygon-close").hidden = polygonPoints.length < 3;
    } else if (tool === "eyedropper") {
      activeClass = surface.classAt(x, y);
      rebuildClassPalette();
      setStatus(`picked class ${activeClass}`);
    }
    renderSurface();
  };
  paintCanvas.onpointermove = (ev) => {
    if (!painting || !surface) return;
    const [x, y] = canvasToPixel(ev);
    surface.brush(x, y, Number($<HTMLInputElement>("brush-size").value), activeClass);
    renderSurface();
  };
  window.addEventListener("pointerup", () => {
    painting = false;
  });
  $("polygon-close").onclick = () => {
    if (!surface || polygonPoints.length < 3) return;
    surface.polygonFill(polygonPoints, activeClass);
    polygonPoints = [];
    $("polygon-close").hidden = true;
    renderSurface();
  };
  $<HTMLSelectElement>("model-select").onchange = (ev) => {
    const id = (ev.target as HTMLSelectElement).value;
    const found = models.find((m) => m.id === id);
    if (found) activateModel(found);
  };
}

function downloadBlob(blob: Blob, name: string) {
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = name;
  a.click();
  URL.revokeObjectURL(a.href);
}

function activateModel(info: ModelInfo) {
  model = info;
  surface = new PaintSurface(info.image_size, info.image_size, info.n_s);
  activeClass = Math.min(1, info.n_s - 1);
  attrBits = new Array(info.n_c).fill(0);
  attrBits[0] = 1;
  overlay = null;
  polygonPoints = [];
  rebuildClassPalette();
  rebuildAttrToggles();
  renderSurface();
  setStatus(`model ${info.id}: ${info.image_size}px, ${info.n_s} classes, ${info.n_c} attributes`);
}

async function boot() {
  wireEvents();
  try {
    models = await api.models();
  } catch (err) {
    setStatus(`cannot reach the generation service: ${err}`, true);
    return;
  }
  const select = $<HTMLSelectElement>("model-select");
  select.innerHTML = "";
  for (const m of models) {
    const opt = document.createElement("option");
    opt.value = m.id;
    opt.textContent = `${m.id} (${m.image_size}px)`;
    select.appendChild(opt);
  }
  if (models.length > 0) activateModel(models[0]);
  else setStatus("no models registered", true);
}

boot();
