import init, { synth_scores, heatmap_levels, prune_mask, speedup } from "./pkg/hivtp_web.js";

const $ = (id) => document.getElementById(id);
const COLOURS = [[40, 40, 40], [0, 255, 0], [255, 0, 0]];
let scores = null;
let lastP = null;

function paint(canvas, n, rgbAt) {
  canvas.width = n;
  canvas.height = n;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(n, n);
  for (let i = 0; i < n * n; i++) {
    const [r, g, b] = rgbAt(i);
    img.data.set([r, g, b, 255], i * 4);
  }
  ctx.putImageData(img, 0, 0);
}

function show(el, fn) {
  try {
    el.textContent = fn();
    el.classList.remove("err");
  } catch (e) {
    el.textContent = String(e.message ?? e);
    el.classList.add("err");
  }
}

function refreshScores() {
  $("noise-v").textContent = $("noise").value;
  const n = Number($("grid").value);
  try {
    scores = synth_scores(Number($("seed").value), n, $("planted").checked, Number($("noise").value));
  } catch (e) {
    scores = null;
    $("summary").textContent = String(e.message ?? e);
    $("summary").classList.add("err");
    return;
  }
  const levels = heatmap_levels(scores);
  paint($("heatmap"), n, (i) => [levels[i], levels[i], levels[i]]);
  refreshMask();
}

function refreshMask() {
  $("topk-v").textContent = $("topk").value + "%";
  if (!scores) return;
  const n = Number($("grid").value);
  show($("summary"), () => {
    const view = prune_mask(scores, Number($("regions").value), Number($("topk").value), Number($("window").value));
    const mask = view.mask();
    paint($("mask"), n, (i) => COLOURS[mask[i]]);
    const text = view.summary();
    view.free();
    lastP = Number(/^p=(\d+)$/m.exec(text)[1]);
    return text;
  });
  refreshSpeedup();
}

function refreshSpeedup() {
  show($("speedup"), () => speedup($("csv").value, Number($("before").value), Number($("after").value)));
}

await init();
for (const id of ["seed", "grid", "noise", "planted"]) $(id).addEventListener("input", refreshScores);
for (const id of ["regions", "topk", "window"]) $(id).addEventListener("input", refreshMask);
for (const id of ["csv", "before", "after"]) $(id).addEventListener("input", refreshSpeedup);
$("use-p").addEventListener("click", () => {
  if (lastP !== null) $("after").value = lastP;
  refreshSpeedup();
});
refreshScores();
