import init, { renderMasked, lowPassSlice, momentPull, grid_dim } from "./pkg/slatpaint_web.js";

const $ = (id) => document.getElementById(id);

function blit(canvas, rgba, n) {
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), n, n), 0, 0);
}

function guard(fn) {
  return () => {
    try {
      $("error").textContent = "";
      fn();
    } catch (e) {
      $("error").textContent = String(e.message ?? e);
    }
  };
}

function drawCurve(canvas, curve) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const logs = curve.map((v) => Math.log10(Math.max(v, 1e-12)));
  const lo = Math.min(...logs), hi = Math.max(...logs);
  const y = (v) => h - 10 - ((v - lo) / (hi - lo || 1)) * (h - 20);
  const x = (i) => 10 + (i / Math.max(curve.length - 1, 1)) * (w - 20);
  ctx.strokeStyle = "#2a6ad8";
  ctx.lineWidth = 2;
  ctx.beginPath();
  logs.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
  ctx.fillStyle = "#666";
  ctx.fillText(`log10 penalty: ${hi.toFixed(2)} .. ${lo.toFixed(2)}`, 14, 14);
}

const fmt = (s) => `mu ${s[0].toFixed(3)}, sigma ${s[1].toFixed(3)}, skew ${s[2].toFixed(3)}, kurt ${s[3].toFixed(3)}`;

await init();
const n = grid_dim();

const render = guard(() => {
  blit($("r-canvas"), renderMasked(
    $("r-family").value, Number($("r-seed").value), Number($("r-axis").value),
    Number($("r-side").value), $("r-view").value, $("r-kind").value), n);
});

const slice = guard(() => {
  $("s-cutoff-v").textContent = $("s-cutoff").value;
  $("s-z-v").textContent = $("s-z").value;
  const s = lowPassSlice(Number($("s-seed").value), Number($("s-cutoff").value), Number($("s-z").value));
  blit($("s-canvas"), s.rgba, n);
  $("s-peak").textContent = `peak magnitude ${s.peak.toFixed(3)}`;
  s.free();
});

const pull = guard(() => {
  const r = momentPull(0, Number($("p-scale").value), Number($("p-shift").value),
    Number($("p-lr").value), Number($("p-steps").value));
  drawCurve($("pull-plot"), Array.from(r.curve));
  $("p-stats").textContent = `start: ${fmt(r.start)} | end: ${fmt(r.end)}`;
  r.free();
});

for (const id of ["r-family", "r-seed", "r-axis", "r-side", "r-view", "r-kind"]) $(id).addEventListener("input", render);
for (const id of ["s-seed", "s-cutoff", "s-z"]) $(id).addEventListener("input", slice);
$("p-run").addEventListener("click", pull);
render();
slice();
pull();
