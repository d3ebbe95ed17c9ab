// Build with `wasm-pack build crates/wasm --target web --out-dir www/pkg`
// and serve crates/wasm/www over http.
import init, { psdCurve, branchScan, stabilityGrid } from "./pkg/optomech_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);
const status = $("status");

function model() {
  return { omega: num("omega"), kappa: num("kappa"), gamma: num("gamma"), nbath: num("nbath") };
}

function report(e) {
  status.className = e ? "err" : "";
  status.textContent = e ? String(e.message ?? e) : "";
}

// Axes with a few ticks; `series` is a list of [xs, ys, color].
function plot(canvas, series, { logY = false, xLabel = "" } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 45;
  ctx.clearRect(0, 0, W, H);
  const tf = (y) => (logY ? Math.log10(Math.max(y, 1e-300)) : y);
  let x0 = Infinity, x1 = -Infinity, y0 = Infinity, y1 = -Infinity;
  for (const [xs, ys] of series) {
    for (let i = 0; i < xs.length; i++) {
      x0 = Math.min(x0, xs[i]); x1 = Math.max(x1, xs[i]);
      const y = tf(ys[i]);
      if (Number.isFinite(y)) { y0 = Math.min(y0, y); y1 = Math.max(y1, y); }
    }
  }
  if (y1 === y0) y1 = y0 + 1;
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (W - 2 * pad);
  const sy = (y) => H - pad + ((y0 - tf(y)) / (y1 - y0)) * (H - 2 * pad);

  ctx.strokeStyle = "#888"; ctx.fillStyle = "#333"; ctx.font = "11px sans-serif";
  ctx.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  for (let k = 0; k <= 4; k++) {
    const x = x0 + (k / 4) * (x1 - x0);
    ctx.fillText(x.toFixed(0), sx(x) - 10, H - pad + 14);
  }
  ctx.fillText(xLabel, W / 2 - 20, H - 8);
  if (logY) ctx.fillText(`log10 range ${y0.toFixed(1)} .. ${y1.toFixed(1)}`, pad, pad - 8);

  for (const [xs, ys, color] of series) {
    ctx.strokeStyle = color; ctx.lineWidth = 1.5; ctx.beginPath();
    xs.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(ys[i])) : ctx.moveTo(sx(x), sy(ys[i]))));
    ctx.stroke();
  }
}

function unzip(flat, stride, cols) {
  const n = flat.length / stride;
  return cols.map((c) => Array.from({ length: n }, (_, i) => flat[i * stride + c]));
}

function drawPsd() {
  const m = model(), g = num("g"), d = num("delta");
  $("g-val").textContent = g.toFixed(2);
  $("delta-val").textContent = d.toFixed(2);
  try {
    const v = psdCurve(m.omega, d * m.omega, m.kappa, m.gamma, g * m.omega, m.nbath, 1, 2.5 * m.omega, 800);
    const [f, s] = unzip(v, 2, [0, 1]);
    plot($("psd"), [[f, s, "#1f5fa8"]], { logY: true, xLabel: "f (kHz)" });
    report();
  } catch (e) {
    report(e);
  }
}

function drawBranches() {
  const m = model(), g = num("g");
  try {
    const v = branchScan(m.omega, m.kappa, m.gamma, g * m.omega, 0.3 * m.omega, 3 * m.omega, 300);
    const [d, up, lo] = unzip(v, 5, [0, 1, 2]);
    plot($("branches"), [[d, up, "#c0392b"], [d, lo, "#1f5fa8"], [d, d, "#bbb"], [d, d.map(() => m.omega), "#bbb"]], {
      xLabel: "detuning (kHz)",
    });
    report();
  } catch (e) {
    report(e);
  }
}

function drawStability() {
  const m = model(), nd = 110, ng = 60, dMax = 3, gMax = 1.2;
  try {
    const v = stabilityGrid(m.omega, m.kappa, m.gamma, dMax, gMax, nd, ng);
    const c = $("stability"), ctx = c.getContext("2d");
    const W = c.width, H = c.height, cw = W / nd, ch = H / ng;
    ctx.clearRect(0, 0, W, H);
    for (let i = 0; i < nd; i++) {
      for (let j = 0; j < ng; j++) {
        ctx.fillStyle = v[i * ng + j] ? "#e8f0fa" : "#34495e";
        ctx.fillRect(i * cw, H - (j + 1) * ch, cw + 0.5, ch + 0.5);
      }
    }
    ctx.strokeStyle = "#e67e22"; ctx.lineWidth = 2; ctx.beginPath();
    for (let i = 0; i < nd; i++) {
      const y = H - (v[nd * ng + i] / gMax) * H;
      i ? ctx.lineTo((i + 0.5) * cw, y) : ctx.moveTo((i + 0.5) * cw, y);
    }
    ctx.stroke();
    report();
  } catch (e) {
    report(e);
  }
}

await init();
for (const id of ["g", "delta", "omega", "kappa", "gamma", "nbath"]) $(id).addEventListener("input", drawPsd);
$("scan").addEventListener("click", drawBranches);
$("map").addEventListener("click", drawStability);
drawPsd();
