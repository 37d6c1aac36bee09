import init, { compare_estimators, threshold_explorer, forecast_race } from "./pkg/tensorar_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const data = () => [num("p1"), num("p2"), num("rank"), num("t"), BigInt(num("seed"))];

function fail(el, e) {
  el.innerHTML = `<p class="err">${e.message ?? e}</p>`;
}

function fmt(x, digits = 4) {
  return x == null ? "–" : Number(x).toFixed(digits);
}

function compare() {
  const out = $("compare-out");
  out.textContent = "fitting…";
  setTimeout(() => {
    try {
      const r = JSON.parse(compare_estimators(...data()));
      const rows = r.fits
        .map((f) => f.failure
          ? `<tr><td>${f.estimator}</td><td colspan="3" class="err">${f.failure}</td></tr>`
          : `<tr><td>${f.estimator}</td><td>${fmt(f.error)}</td><td>${f.lambda == null ? "–" : f.lambda.toExponential(2)}</td><td>${f.ranks ? f.ranks.join(",") : "–"}</td></tr>`)
        .join("");
      out.innerHTML = `<p>spectral radius ${fmt(r.spectral_radius, 3)}</p>
        <table><tr><th>estimator</th><th>‖Â − A‖<sub>F</sub></th><th>λ</th><th>ranks</th></tr>${rows}</table>`;
    } catch (e) {
      fail(out, e);
    }
  }, 10);
}

function bars(canvas, groups, threshold) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const max = Math.max(1e-12, ...groups.flatMap((g) => g.values));
  const gw = canvas.width / groups.length;
  const h = canvas.height - 30;
  groups.forEach((g, gi) => {
    const bw = (gw - 20) / g.values.length;
    g.values.forEach((v, i) => {
      const bh = (v / max) * h;
      ctx.fillStyle = v > threshold ? "#3b6ea5" : "#bbb";
      ctx.fillRect(gi * gw + 10 + i * bw, h - bh + 5, Math.max(1, bw - 2), bh);
    });
    ctx.fillStyle = "#222";
    ctx.fillText(g.label, gi * gw + 10, canvas.height - 8);
  });
  if (threshold > 0) {
    const y = h - (threshold / max) * h + 5;
    ctx.strokeStyle = "#c33";
    ctx.beginPath();
    ctx.moveTo(0, y);
    ctx.lineTo(canvas.width, y);
    ctx.stroke();
  }
}

function explore() {
  const ls = 10 ** num("lscale");
  const gs = num("gscale");
  $("lval").textContent = ls.toFixed(3);
  $("gval").textContent = gs.toFixed(2);
  const out = $("explore-out");
  try {
    const r = JSON.parse(threshold_explorer(...data(), ls, gs));
    out.innerHTML = `<p>λ = ${r.lambda.toExponential(3)}, γ = ${r.gamma.toExponential(3)};
      error SSN ${fmt(r.ssn_error)}, truncated ${fmt(r.tssn_error)};
      selected ranks (${r.ranks.join(",")}) vs true (${r.true_ranks.join(",")})</p>`;
    const groups = r.unfolding_spectra.map((values, i) => ({ label: `mode ${i + 1} unfolding`, values }));
    bars($("spectra"), groups, r.gamma);
  } catch (e) {
    fail(out, e);
  }
}

function plot(canvas, series) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const pts = series.flatMap((s) => s.points);
  if (pts.length === 0) return;
  const xs = pts.map((p) => p[0]);
  const ys = pts.map((p) => p[1]);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const y1 = Math.max(...ys);
  const sx = (x) => 40 + ((x - x0) / Math.max(1, x1 - x0)) * (canvas.width - 60);
  const sy = (y) => canvas.height - 20 - (y / y1) * (canvas.height - 40);
  series.forEach((s, k) => {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.points.forEach((p, i) => (i ? ctx.lineTo(sx(p[0]), sy(p[1])) : ctx.moveTo(sx(p[0]), sy(p[1]))));
    ctx.stroke();
    ctx.fillStyle = s.color;
    ctx.fillText(s.label, 50 + k * 120, 14);
  });
  ctx.fillStyle = "#222";
  ctx.fillText(`t = ${x0}`, 40, canvas.height - 4);
  ctx.fillText(`${x1}`, canvas.width - 40, canvas.height - 4);
}

function race() {
  const out = $("race-out");
  out.textContent = "refitting at every origin…";
  setTimeout(() => {
    try {
      const r = JSON.parse(forecast_race(...data(), $("est").value, num("origins")));
      out.innerHTML = `<p>mean ℓ₂ error: ${r.estimator} ${fmt(r.mean_fitted)}, zero forecast ${fmt(r.mean_zero)}
        ${r.missing.length ? `(${r.missing.length} origins could not be fitted)` : ""}</p>`;
      plot($("race-plot"), [
        { label: r.estimator, color: "#3b6ea5", points: r.fitted },
        { label: "zero", color: "#999", points: r.zero },
      ]);
    } catch (e) {
      fail(out, e);
    }
  }, 10);
}

await init();
$("compare").addEventListener("click", compare);
$("race").addEventListener("click", race);
for (const id of ["lscale", "gscale"]) $(id).addEventListener("input", explore);
for (const id of ["p1", "p2", "rank", "t", "seed"]) $(id).addEventListener("change", explore);
explore();
