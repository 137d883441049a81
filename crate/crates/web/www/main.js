import init, { rotatedIou, nms, rfMap, rfRadii, recordLength } from "./pkg/rfbtd_web.js";

const $ = (id) => document.getElementById(id);

function corners([cx, cy, w, h, t]) {
  const c = Math.cos(t), s = Math.sin(t);
  return [[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]]
    .map(([u, v]) => [cx + u * c - v * s, cy + u * s + v * c]);
}

function polygon(ctx, pts, stroke, fill) {
  if (pts.length < 3) return;
  ctx.beginPath();
  ctx.moveTo(pts[0][0], pts[0][1]);
  for (const p of pts.slice(1)) ctx.lineTo(p[0], p[1]);
  ctx.closePath();
  if (fill) { ctx.fillStyle = fill; ctx.fill(); }
  if (stroke) { ctx.strokeStyle = stroke; ctx.stroke(); }
}

// ---- rotated IoU -------------------------------------------------------

const boxes = { a: [170, 150, 160, 60, 0.2], b: [220, 160, 140, 80, -0.4] };
const fields = [["cx", 0, 400, 1], ["cy", 0, 300, 1], ["w", 4, 300, 1], ["h", 4, 300, 1], ["theta", -3.14, 3.14, 0.01]];

function iouControls() {
  const root = $("iou-controls");
  for (const key of ["a", "b"]) {
    const title = document.createElement("strong");
    title.textContent = `box ${key.toUpperCase()}`;
    root.append(title);
    fields.forEach(([name, min, max, step], i) => {
      const label = document.createElement("label");
      const input = Object.assign(document.createElement("input"), { type: "range", min, max, step, value: boxes[key][i] });
      const out = document.createElement("output");
      out.textContent = boxes[key][i];
      input.addEventListener("input", () => {
        boxes[key][i] = Number(input.value);
        out.textContent = input.value;
        drawIou();
      });
      label.append(`${name} `, input, " ", out);
      root.append(label);
    });
  }
}

function drawIou() {
  const ctx = $("iou-canvas").getContext("2d");
  ctx.clearRect(0, 0, 400, 300);
  const r = rotatedIou(Float64Array.from(boxes.a), Float64Array.from(boxes.b));
  const inter = [];
  for (let i = 2; i < r.length; i += 2) inter.push([r[i], r[i + 1]]);
  polygon(ctx, corners(boxes.a), "#1f5fbf", "rgba(31,95,191,0.12)");
  polygon(ctx, corners(boxes.b), "#bf5f1f", "rgba(191,95,31,0.12)");
  polygon(ctx, inter, "#222", "rgba(40,160,60,0.45)");
  $("iou-result").textContent =
    `IoU ${r[0].toFixed(4)}   intersection ${r[1].toFixed(1)} px²   polygon vertices ${inter.length}`;
}

// ---- suppression -------------------------------------------------------

let seed = 1;
function rand() {
  // mulberry32
  seed |= 0; seed = (seed + 0x6d2b79f5) | 0;
  let t = Math.imul(seed ^ (seed >>> 15), 1 | seed);
  t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
  return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
}

let candidates = new Float64Array();

function makeCandidates() {
  const n = Number($("nms-count").value);
  const sources = Array.from({ length: 6 }, () =>
    [40 + rand() * 320, 30 + rand() * 240, 40 + rand() * 80, 12 + rand() * 20, (rand() - 0.5) * 1.2]);
  const len = recordLength();
  candidates = new Float64Array(n * len);
  for (let i = 0; i < n; i++) {
    const [cx, cy, w, h, t] = sources[i % sources.length];
    const jittered = [cx + (rand() - 0.5) * 8, cy + (rand() - 0.5) * 8, w * (0.9 + rand() * 0.2), h * (0.9 + rand() * 0.2), t + (rand() - 0.5) * 0.1];
    corners(jittered).flat().forEach((v, k) => { candidates[i * len + k] = v; });
    candidates[i * len + 8] = 0.5 + rand() * 0.5;
  }
}

function drawRecords(canvas, recs, color) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const len = recordLength();
  for (let i = 0; i < recs.length; i += len) {
    const pts = [0, 1, 2, 3].map((k) => [recs[i + 2 * k], recs[i + 2 * k + 1]]);
    ctx.globalAlpha = Math.min(1, 0.25 + 0.75 * recs[i + 8]);
    polygon(ctx, pts, color);
  }
  ctx.globalAlpha = 1;
}

function drawNms() {
  const thr = Number($("nms-thr").value);
  const locality = $("nms-locality").checked;
  $("nms-count-out").textContent = $("nms-count").value;
  $("nms-thr-out").textContent = thr.toFixed(2);
  const t0 = performance.now();
  const kept = nms(candidates, thr, locality);
  const ms = performance.now() - t0;
  drawRecords($("nms-before"), candidates, "#888");
  drawRecords($("nms-after"), kept, "#c02020");
  const n = candidates.length / recordLength(), k = kept.length / recordLength();
  $("nms-result").textContent = `${n} candidates -> ${k} kept (${locality ? "locality-aware" : "standard"}, ${ms.toFixed(2)} ms)`;
}

// ---- receptive field ---------------------------------------------------

function drawRf() {
  const variant = $("rf-variant").value;
  const size = Number($("rf-size").value);
  $("rf-size-out").textContent = size;
  const px = rfMap(variant, size);
  const img = new ImageData(size, size);
  px.forEach((v, i) => img.data.set([v, v, v, 255], 4 * i));
  const off = new OffscreenCanvas(size, size);
  off.getContext("2d").putImageData(img, 0, 0);
  const ctx = $("rf-canvas").getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, 256, 256);
  ctx.drawImage(off, 0, 0, 256, 256);
  const support = px.reduce((n, v) => n + (v > 0), 0);
  $("rf-result").textContent = `branch field sizes ${Array.from(rfRadii(variant)).join(", ")} px   support ${support} px`;
}

async function main() {
  await init();
  iouControls();
  drawIou();
  makeCandidates();
  drawNms();
  drawRf();
  $("nms-count").addEventListener("input", () => { makeCandidates(); drawNms(); });
  $("nms-thr").addEventListener("input", drawNms);
  $("nms-locality").addEventListener("change", drawNms);
  $("nms-reseed").addEventListener("click", () => { seed += 1000; makeCandidates(); drawNms(); });
  $("rf-variant").addEventListener("change", drawRf);
  $("rf-size").addEventListener("input", drawRf);
}

main().catch((e) => { $("error").textContent = String(e); });
