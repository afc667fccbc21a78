import init, { classifyLoads, simulate, optimizeOracle } from "./pkg/oran_balance_web.js";

const $ = (id) => document.getElementById(id);
const AREA = 1000;
const COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

let mask = 0;
let current = null;
let pendingMask = null;

function bitsOf(maskString) {
  return [...maskString].reduce((acc, c, i) => (c === "1" ? acc | (1 << i) : acc), 0);
}

function params() {
  return {
    nRus: Number($("n-rus").value),
    nUes: Number($("n-ues").value),
    seed: Number($("seed").value),
    index: Number($("index").value),
  };
}

function guard(f) {
  return (...args) => {
    $("error").textContent = "";
    try {
      f(...args);
    } catch (e) {
      $("error").textContent = String(e.message ?? e);
    }
  };
}

function assessmentText(a) {
  const m = a.metrics;
  return [
    `cv=${m.cv.toFixed(4)} jain=${m.jain.toFixed(4)} lif=${m.lif.toFixed(4)}`,
    `conservative: ${a.conservative}`,
    `moderate:     ${a.moderate}`,
    `aggressive:   ${a.aggressive}`,
  ].join("\n");
}

function drawMap(state) {
  const ctx = $("map").getContext("2d");
  const s = $("map").width / AREA;
  ctx.clearRect(0, 0, $("map").width, $("map").height);
  state.ue_positions.forEach((p, u) => {
    const ru = state.ue_attach[u];
    if (ru !== null) {
      const r = state.ru_positions[ru];
      ctx.strokeStyle = COLORS[ru % COLORS.length] + "55";
      ctx.beginPath();
      ctx.moveTo(p.x * s, p.y * s);
      ctx.lineTo(r.x * s, r.y * s);
      ctx.stroke();
    }
    ctx.fillStyle = ru === null ? "#999" : COLORS[ru % COLORS.length];
    ctx.beginPath();
    ctx.arc(p.x * s, p.y * s, 3, 0, 2 * Math.PI);
    ctx.fill();
  });
  state.ru_positions.forEach((r, i) => {
    const on = state.mask[i] === "1";
    ctx.fillStyle = on ? COLORS[i % COLORS.length] : "#fff";
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.lineWidth = 2;
    ctx.fillRect(r.x * s - 8, r.y * s - 8, 16, 16);
    ctx.strokeRect(r.x * s - 8, r.y * s - 8, 16, 16);
    ctx.lineWidth = 1;
    ctx.fillStyle = "#000";
    ctx.fillText(`RU${i}`, r.x * s + 10, r.y * s - 10);
  });
}

function drawBars(state) {
  const c = $("bars");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const n = state.dl_prb.length;
  const w = (c.width - 20) / n;
  const h = c.height - 30;
  state.dl_prb.forEach((v, i) => {
    const on = state.mask[i] === "1";
    ctx.fillStyle = on ? COLORS[i % COLORS.length] : "#ddd";
    const bh = (Math.min(v, 100) / 100) * h;
    ctx.fillRect(10 + i * w + 4, 10 + h - bh, w - 8, bh);
    ctx.fillStyle = "#000";
    ctx.fillText(`RU${i} ${v.toFixed(0)}%`, 10 + i * w + 4, c.height - 6);
  });
}

function showState(state) {
  current = state;
  drawMap(state);
  drawBars(state);
  $("state-out").textContent = [
    `mask ${state.mask}  power ${state.power_w.toFixed(2)} W  QoS ${state.qos.toFixed(2)}`,
    assessmentText(state.assessment),
  ].join("\n");
}

const runSimulate = guard(() => {
  const p = params();
  showState(JSON.parse(simulate(p.nRus, p.nUes, p.seed, p.index, mask)));
  $("candidates").innerHTML = "";
  $("decision-out").textContent = "";
  $("apply").disabled = true;
});

const runClassify = guard(() => {
  $("classify-out").textContent = assessmentText(JSON.parse(classifyLoads($("loads").value)));
});

const runOptimize = guard(() => {
  const p = params();
  const d = JSON.parse(
    optimizeOracle(p.nRus, p.nUes, p.seed, p.index, mask, $("policy").value, $("exhaustive").checked, $("wb-only").checked),
  );
  $("decision-out").textContent = d.chosen
    ? `policy ${d.policy}: switch ${d.current.mask} -> ${d.chosen.mask}, saving ${d.savings_w.toFixed(2)} W, QoS ${d.current.qos.toFixed(2)} -> ${d.chosen.qos.toFixed(2)}`
    : `policy ${d.policy}: no acceptable candidate saves power, keep ${d.current.mask}`;
  pendingMask = d.chosen ? bitsOf(d.chosen.mask) : null;
  $("apply").disabled = pendingMask === null;
  const head = "<tr><th>mask</th><th>active</th><th>category</th><th>power W</th><th>saving W</th><th>QoS</th></tr>";
  const rows = d.candidates
    .slice()
    .sort((a, b) => b.savings_w - a.savings_w)
    .map(
      (c) =>
        `<tr class="${c.chosen ? "chosen" : ""}"><td>${c.mask}</td><td>${c.n_active}</td>` +
        `<td class="${c.category}">${c.category}</td><td>${c.power_w.toFixed(2)}</td>` +
        `<td>${c.savings_w.toFixed(2)}</td><td>${c.qos.toFixed(2)}</td></tr>`,
    )
    .join("");
  $("candidates").innerHTML = head + rows;
});

function toggleRu(ev) {
  if (!current) return;
  const rect = $("map").getBoundingClientRect();
  const s = $("map").width / AREA;
  const x = (ev.clientX - rect.left) / s;
  const y = (ev.clientY - rect.top) / s;
  const hit = current.ru_positions.findIndex((r) => Math.hypot(r.x - x, r.y - y) < 25);
  if (hit < 0) return;
  const next = bitsOf(current.mask) ^ (1 << hit);
  if (next === 0) return;
  mask = next;
  runSimulate();
}

function resetMask() {
  mask = 0;
  runSimulate();
}

await init();
$("classify").addEventListener("click", runClassify);
$("simulate").addEventListener("click", resetMask);
$("optimize").addEventListener("click", runOptimize);
$("apply").addEventListener("click", () => {
  if (pendingMask !== null) {
    mask = pendingMask;
    runSimulate();
  }
});
$("map").addEventListener("click", toggleRu);
runClassify();
runSimulate();
