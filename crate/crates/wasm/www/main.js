import init, { compartment_curve, detect_source, Outbreak } from "./pkg/epikit_wasm.js";

const STATE_LABELS = ["S", "E", "I", "R", "V", "Q"];
const STATE_COLORS = ["#9ecae1", "#fdae6b", "#e6550d", "#74c476", "#756bb1", "#636363"];
const SERIES = {
  sir: ["S", "I", "R"],
  sis: ["S", "I"],
  seir: ["S", "E", "I", "R"],
};

function formValues(form) {
  const out = {};
  for (const [k, v] of new FormData(form)) out[k] = v;
  return out;
}

function showError(el, err) {
  el.innerHTML = "";
  const span = document.createElement("span");
  span.className = "error";
  span.textContent = String(err.message ?? err);
  el.appendChild(span);
}

// ---- curves

function drawCurves(model, rows) {
  const canvas = document.getElementById("curve-canvas");
  const ctx = canvas.getContext("2d");
  const labels = SERIES[model];
  const width = labels.length + 1;
  const n = rows.length / width;
  const tMax = rows[(n - 1) * width];
  let yMax = 0;
  for (let i = 0; i < rows.length; i++) if (i % width !== 0) yMax = Math.max(yMax, rows[i]);
  const pad = 30;
  const x = (t) => pad + (t / tMax) * (canvas.width - 2 * pad);
  const y = (v) => canvas.height - pad - (v / yMax) * (canvas.height - 2 * pad);

  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, canvas.width - 2 * pad, canvas.height - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.fillText("0", pad - 10, canvas.height - pad + 12);
  ctx.fillText(tMax.toFixed(0), canvas.width - pad - 10, canvas.height - pad + 12);
  ctx.fillText(yMax.toFixed(0), 2, pad + 4);

  const legend = document.getElementById("curve-legend");
  legend.innerHTML = "";
  labels.forEach((label, c) => {
    const color = STATE_COLORS[STATE_LABELS.indexOf(label)];
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    for (let k = 0; k < n; k++) {
      const px = x(rows[k * width]);
      const py = y(rows[k * width + c + 1]);
      if (k === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    }
    ctx.stroke();
    const item = document.createElement("span");
    item.innerHTML = `<span class="swatch" style="background:${color}"></span>${label}`;
    legend.appendChild(item);
  });
}

function runCurves() {
  const v = formValues(document.getElementById("curve-form"));
  const legend = document.getElementById("curve-legend");
  try {
    const rows = compartment_curve(v.model, +v.beta, +v.gamma, +v.sigma, +v.n, +v.i0, +v.horizon, +v.dt);
    drawCurves(v.model, rows);
  } catch (e) {
    showError(legend, e);
  }
}

// ---- outbreak

// Small seeded generator so a given graph always gets the same layout.
function mulberry32(seed) {
  return () => {
    seed |= 0;
    seed = (seed + 0x6d2b79f5) | 0;
    let t = Math.imul(seed ^ (seed >>> 15), 1 | seed);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

// Fruchterman-Reingold, run once per graph.
function layout(n, edges, seed, w, h) {
  const rand = mulberry32(seed);
  const pos = Array.from({ length: n }, () => [rand() * w, rand() * h]);
  const k = Math.sqrt((w * h) / Math.max(n, 1)) * 0.8;
  let temp = w / 10;
  for (let iter = 0; iter < 300; iter++) {
    const disp = pos.map(() => [0, 0]);
    for (let i = 0; i < n; i++) {
      for (let j = i + 1; j < n; j++) {
        const dx = pos[i][0] - pos[j][0];
        const dy = pos[i][1] - pos[j][1];
        const d = Math.max(Math.hypot(dx, dy), 0.01);
        const f = (k * k) / d;
        disp[i][0] += (dx / d) * f;
        disp[i][1] += (dy / d) * f;
        disp[j][0] -= (dx / d) * f;
        disp[j][1] -= (dy / d) * f;
      }
    }
    for (let e = 0; e < edges.length; e += 2) {
      const [a, b] = [edges[e], edges[e + 1]];
      const dx = pos[a][0] - pos[b][0];
      const dy = pos[a][1] - pos[b][1];
      const d = Math.max(Math.hypot(dx, dy), 0.01);
      const f = (d * d) / k;
      disp[a][0] -= (dx / d) * f;
      disp[a][1] -= (dy / d) * f;
      disp[b][0] += (dx / d) * f;
      disp[b][1] += (dy / d) * f;
    }
    for (let i = 0; i < n; i++) {
      const d = Math.max(Math.hypot(disp[i][0], disp[i][1]), 0.01);
      pos[i][0] = Math.min(w - 12, Math.max(12, pos[i][0] + (disp[i][0] / d) * Math.min(d, temp)));
      pos[i][1] = Math.min(h - 12, Math.max(12, pos[i][1] + (disp[i][1] / d) * Math.min(d, temp)));
    }
    temp *= 0.985;
  }
  return pos;
}

let outbreak = null;
let positions = [];
let edges = new Uint32Array();
let scores = null;

function drawGraph() {
  const canvas = document.getElementById("graph-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!outbreak) return;
  const states = outbreak.states();
  ctx.strokeStyle = "#ddd";
  ctx.lineWidth = 1;
  for (let e = 0; e < edges.length; e += 2) {
    const [a, b] = [positions[edges[e]], positions[edges[e + 1]]];
    ctx.beginPath();
    ctx.moveTo(a[0], a[1]);
    ctx.lineTo(b[0], b[1]);
    ctx.stroke();
  }
  positions.forEach(([x, y], v) => {
    ctx.fillStyle = STATE_COLORS[states[v]];
    ctx.beginPath();
    ctx.arc(x, y, 6, 0, 2 * Math.PI);
    ctx.fill();
    if (scores && scores[v] > 0) {
      ctx.strokeStyle = "#000";
      ctx.lineWidth = 1 + 6 * scores[v] / Math.max(...scores);
      ctx.stroke();
    }
    if (STATE_LABELS[states[v]] === "Q" || STATE_LABELS[states[v]] === "V") {
      ctx.fillStyle = "#fff";
      ctx.font = "bold 8px sans-serif";
      ctx.fillText(STATE_LABELS[states[v]], x - 3, y + 3);
    }
  });
  const counts = STATE_LABELS.map((l, c) => `${l} ${states.filter((s) => s === c).length}`);
  document.getElementById("outbreak-status").textContent =
    `step ${outbreak.current_step()}${outbreak.finished() ? " (finished)" : ""}: ${counts.join(", ")}`;
}

function newOutbreak() {
  const v = formValues(document.getElementById("outbreak-form"));
  const info = document.getElementById("node-info");
  try {
    if (outbreak) outbreak.free();
    outbreak = new Outbreak(+v.nodes, +v.edge_prob, +v.beta, +v.gamma, +v.seed, new Uint32Array([0]));
  } catch (e) {
    outbreak = null;
    showError(info, e);
    drawGraph();
    return;
  }
  edges = outbreak.edges();
  const canvas = document.getElementById("graph-canvas");
  positions = layout(outbreak.n_nodes(), edges, +v.seed, canvas.width, canvas.height);
  scores = null;
  info.textContent = "Click a node to intervene; hover to inspect.";
  document.getElementById("detect-result").textContent = "";
  drawGraph();
}

function nodeAt(ev) {
  const rect = ev.target.getBoundingClientRect();
  const x = ev.clientX - rect.left;
  const y = ev.clientY - rect.top;
  let best = -1;
  let bestD = 10;
  positions.forEach(([px, py], v) => {
    const d = Math.hypot(px - x, py - y);
    if (d < bestD) {
      bestD = d;
      best = v;
    }
  });
  return best;
}

function describe(v) {
  const state = STATE_LABELS[outbreak.states()[v]];
  const rec = outbreak.infection(v);
  let text = `node ${v}: ${state}`;
  if (rec.length === 2) {
    text += rec[1] < 0 ? `, initial case` : `, infected at step ${rec[0]} by node ${rec[1]}`;
  }
  return text;
}

function step(k) {
  if (!outbreak) return;
  for (let i = 0; i < k && !outbreak.finished(); i++) outbreak.step();
  drawGraph();
}

// ---- detection

function runDetect() {
  const out = document.getElementById("detect-result");
  if (!outbreak) return;
  const method = document.getElementById("detector").value;
  try {
    scores = detect_source(outbreak.n_nodes(), edges, outbreak.infected_nodes(), method);
  } catch (e) {
    scores = null;
    showError(out, e);
    drawGraph();
    return;
  }
  const ranked = [...scores.keys()].filter((v) => scores[v] > 0).sort((a, b) => scores[b] - scores[a]);
  const top = ranked.slice(0, 3).map((v) => `node ${v} (${(100 * scores[v]).toFixed(1)}%)`);
  out.textContent = `most likely: ${top.join(", ")}. True origin: node 0.`;
  drawGraph();
}

async function main() {
  await init();
  document.getElementById("curve-form").addEventListener("submit", (e) => {
    e.preventDefault();
    runCurves();
  });
  document.getElementById("outbreak-form").addEventListener("submit", (e) => {
    e.preventDefault();
    newOutbreak();
  });
  document.getElementById("step-1").addEventListener("click", () => step(1));
  document.getElementById("step-10").addEventListener("click", () => step(10));
  const canvas = document.getElementById("graph-canvas");
  canvas.addEventListener("click", (ev) => {
    const v = nodeAt(ev);
    if (v < 0 || !outbreak) return;
    const action = document.querySelector("input[name=click-action]:checked").value;
    const changed = action === "vaccinate" ? outbreak.vaccinate(v) : outbreak.quarantine(v);
    document.getElementById("node-info").textContent =
      `${describe(v)}${changed ? "" : ` (${action} had no effect)`}`;
    drawGraph();
  });
  canvas.addEventListener("mousemove", (ev) => {
    const v = nodeAt(ev);
    if (v >= 0 && outbreak) document.getElementById("node-info").textContent = describe(v);
  });
  document.getElementById("detect-run").addEventListener("click", runDetect);
  runCurves();
  newOutbreak();
}

main();
