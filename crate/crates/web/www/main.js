import init, { selection_playground, gan_losses, continual_run } from "./pkg/replaycl_web.js";

const COLORS = ["#d62728", "#1f77b4", "#2ca02c"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// Runs `f` after the button's label has had a chance to repaint.
function busy(button, f) {
  const text = button.textContent;
  button.textContent = "...";
  button.disabled = true;
  setTimeout(() => {
    try {
      f();
    } finally {
      button.textContent = text;
      button.disabled = false;
    }
  }, 10);
}

function fail(el, e) {
  el.innerHTML = `<span class="err">${e}</span>`;
}

function drawSelection(r) {
  const c = $("sel-canvas");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const s = c.width / 6;
  const px = ([x, y]) => [c.width / 2 + x * s, c.height / 2 - y * s];
  g.fillStyle = "#bbb";
  for (const p of r.points) {
    const [x, y] = px(p);
    g.fillRect(x - 1, y - 1, 2, 2);
  }
  for (const k of r.picks) {
    const [x, y] = px(r.points[k.candidate]);
    g.fillStyle = COLORS[k.label];
    g.beginPath();
    g.arc(x, y, 3.5, 0, 2 * Math.PI);
    g.fill();
  }
  g.lineWidth = 2;
  r.centroids.forEach((p, i) => {
    const [x, y] = px(p);
    g.strokeStyle = COLORS[i];
    g.beginPath();
    g.moveTo(x - 7, y - 7); g.lineTo(x + 7, y + 7);
    g.moveTo(x + 7, y - 7); g.lineTo(x - 7, y + 7);
    g.stroke();
  });
  g.strokeStyle = "#000";
  for (const p of r.batch_centroids) {
    const [x, y] = px(p);
    g.beginPath();
    g.moveTo(x, y - 7); g.lineTo(x + 7, y); g.lineTo(x, y + 7); g.lineTo(x - 7, y); g.closePath();
    g.stroke();
  }
}

function drawCurves(r) {
  const c = $("gan-canvas");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const all = r.d_loss.concat(r.g_loss);
  const lo = Math.min(...all), hi = Math.max(...all);
  const n = r.d_loss.length;
  const pad = 30;
  const x = (i) => pad + (n === 1 ? 0 : (i * (c.width - 2 * pad)) / (n - 1));
  const y = (v) => c.height - pad - ((v - lo) / (hi - lo || 1)) * (c.height - 2 * pad);
  [[r.d_loss, COLORS[1], "D"], [r.g_loss, COLORS[0], "G"]].forEach(([series, color, name], j) => {
    g.strokeStyle = color;
    g.fillStyle = color;
    g.beginPath();
    series.forEach((v, i) => (i ? g.lineTo(x(i), y(v)) : g.moveTo(x(i), y(v))));
    g.stroke();
    g.fillText(name, c.width - pad + 5, 15 + 15 * j);
  });
  g.fillStyle = "#555";
  g.fillText(hi.toFixed(3), 2, pad);
  g.fillText(lo.toFixed(3), 2, c.height - pad);
}

function showRun(r) {
  const rows = r.accuracy
    .map((a, i) => `<tr><td>${i + 1}</td><td>${r.seen[i]}</td><td>${(100 * a).toFixed(1)}</td><td>${r.coverage[i] ?? "-"}</td></tr>`)
    .join("");
  $("cl-out").innerHTML =
    `<b>${r.label}</b>: mean ${(100 * r.mean).toFixed(1)}, min ${(100 * r.min).toFixed(1)}` +
    `<table><tr><th>task</th><th>seen</th><th>accuracy %</th><th>replay coverage</th></tr>${rows}</table>`;
}

await init();

$("sel-go").onclick = (e) =>
  busy(e.target, () => {
    try {
      const r = JSON.parse(selection_playground(BigInt(num("sel-seed")), $("sel-scheme").value, num("sel-k"), num("sel-pool")));
      $("sel-info").textContent = `kept per class: ${r.per_class.join(" / ")}`;
      drawSelection(r);
    } catch (err) {
      fail($("sel-info"), err);
    }
  });

$("gan-go").onclick = (e) =>
  busy(e.target, () => {
    try {
      const r = JSON.parse(gan_losses(BigInt(num("gan-seed")), num("gan-epochs"), $("gan-loss").value));
      $("gan-info").textContent = `${r.loss}: ${r.batches} batches, final D ${r.d_loss.at(-1).toFixed(3)}, G ${r.g_loss.at(-1).toFixed(3)}`;
      drawCurves(r);
    } catch (err) {
      fail($("gan-info"), err);
    }
  });

$("cl-go").onclick = (e) =>
  busy(e.target, () => {
    try {
      showRun(JSON.parse(continual_run(BigInt(num("cl-seed")), $("cl-scenario").value)));
    } catch (err) {
      fail($("cl-out"), err);
    }
  });

$("sel-go").click();
