import init, { layout, recover, min_sources } from "./pkg/sfr_demo.js";

const $ = (id) => document.getElementById(id);
const SVG = "http://www.w3.org/2000/svg";

let fixture = null;
let observed = {};
let preview = null;

function fmt(x, digits = 2) {
  if (x === null || x === undefined) return "-";
  const s = x.toFixed(digits);
  return /^-0\.0*$/.test(s) ? s.slice(1) : s;
}

function shade(value) {
  if (value === null) return "#fff";
  const t = Math.min(1, Math.max(0, (value - fixture.low) / (fixture.high - fixture.low)));
  return `hsl(${220 - 200 * t}, 70%, ${85 - 25 * t}%)`;
}

function knobs() {
  return JSON.stringify({ p: Number($("p").value), eps: 10 ** Number($("eps").value) });
}

function load(name) {
  fixture = JSON.parse(layout(name));
  observed = { ...fixture.observed };
  preview = null;
  $("oracle-out").innerHTML = "";
  update();
}

function toggle(label) {
  if (label in observed) {
    delete observed[label];
  } else {
    const node = fixture.nodes.find((n) => n.label === label);
    const guess = node.truth ?? Math.round((fixture.low + fixture.high) / 2);
    observed[label] = guess;
  }
  preview = null;
  $("oracle-out").innerHTML = "";
  update();
}

function solve() {
  if (preview) return preview;
  return JSON.parse(recover(fixture.name, $("method").value, JSON.stringify(observed), knobs()));
}

function draw(result) {
  const svg = $("graph");
  svg.replaceChildren();
  const xs = fixture.nodes.map((n) => n.x);
  const ys = fixture.nodes.map((n) => n.y);
  const [x0, x1, y0, y1] = [Math.min(...xs), Math.max(...xs), Math.min(...ys), Math.max(...ys)];
  const w = svg.width.baseVal.value - 80;
  const h = svg.height.baseVal.value - 80;
  const px = (x) => 40 + (x1 > x0 ? ((x - x0) / (x1 - x0)) * w : w / 2);
  const py = (y) => 40 + (y1 > y0 ? (1 - (y - y0) / (y1 - y0)) * h : h / 2);
  const r = fixture.nodes.length > 10 ? 17 : 30;

  for (const [a, b] of fixture.edges) {
    const line = document.createElementNS(SVG, "line");
    const [na, nb] = [fixture.nodes[a], fixture.nodes[b]];
    line.setAttribute("x1", px(na.x));
    line.setAttribute("y1", py(na.y));
    line.setAttribute("x2", px(nb.x));
    line.setAttribute("y2", py(nb.y));
    line.setAttribute("class", "edge");
    svg.append(line);
  }
  fixture.nodes.forEach((node, i) => {
    const [cx, cy] = [px(node.x), py(node.y)];
    const value = result.estimates[i];
    const isObserved = node.label in observed;
    const shape = document.createElementNS(SVG, isObserved ? "rect" : "circle");
    if (isObserved) {
      shape.setAttribute("x", cx - r);
      shape.setAttribute("y", cy - r);
      shape.setAttribute("width", 2 * r);
      shape.setAttribute("height", 2 * r);
    } else {
      shape.setAttribute("cx", cx);
      shape.setAttribute("cy", cy);
      shape.setAttribute("r", r);
    }
    shape.setAttribute("fill", shade(value));
    shape.setAttribute("class", result.sources.includes(i) ? "node source" : "node");
    shape.addEventListener("click", () => toggle(node.label));
    const title = document.createElementNS(SVG, "title");
    title.textContent = `${node.label}: ${fmt(value, 4)}`;
    shape.append(title);
    svg.append(shape);

    const text = document.createElementNS(SVG, "text");
    text.setAttribute("x", cx);
    text.setAttribute("y", cy);
    text.textContent = value === null ? "?" : fmt(value, 1);
    svg.append(text);
    const name = document.createElementNS(SVG, "text");
    name.setAttribute("x", cx + r + 4);
    name.setAttribute("y", cy - r + 4);
    name.setAttribute("class", "name");
    name.style.textAnchor = "start";
    name.textContent = node.label;
    svg.append(name);
  });
}

function tabulate(result) {
  const rows = fixture.nodes.map((node, i) => {
    const src = result.sources.includes(i) ? "yes" : "";
    return `<tr><td>${node.label}</td><td>${fmt(node.truth)}</td><td>${node.label in observed ? fmt(observed[node.label]) : ""}</td>` +
      `<td>${fmt(result.estimates[i], 4)}</td><td>${fmt(result.second_derivative[i], 4)}</td><td>${src}</td></tr>`;
  });
  $("table").innerHTML =
    "<tr><th>node</th><th>truth</th><th>observed</th><th>estimate</th><th>second derivative</th><th>source</th></tr>" +
    rows.join("");
}

function listObserved() {
  const box = $("observed");
  box.replaceChildren();
  for (const label of Object.keys(observed).sort((a, b) => a.localeCompare(b, undefined, { numeric: true }))) {
    const row = document.createElement("label");
    row.textContent = `${label} `;
    const input = document.createElement("input");
    input.type = "number";
    input.step = "0.5";
    input.min = fixture.low;
    input.max = fixture.high;
    input.value = observed[label];
    input.addEventListener("change", () => {
      observed[label] = Number(input.value);
      preview = null;
      update();
    });
    row.append(input);
    box.append(row);
  }
}

function update() {
  $("p-value").textContent = $("p").value;
  $("eps-value").textContent = `1e${$("eps").value}`;
  listObserved();
  $("error").textContent = "";
  let result;
  try {
    result = solve();
  } catch (e) {
    $("error").textContent = e.message ?? String(e);
    return;
  }
  draw(result);
  tabulate(result);
  const parts = [`${result.method}`, `${result.sources.length} sources`];
  if (result.objective !== null) parts.push(`l_p objective ${fmt(result.objective, 4)}`);
  if (result.iterations) parts.push(`${result.iterations} iterations`);
  if (result.abstentions.length) parts.push(`${result.abstentions.length} abstentions`);
  $("summary").textContent = (preview ? "oracle solution: " : "") + parts.join(", ");
}

function runOracle() {
  $("error").textContent = "";
  let out;
  try {
    out = JSON.parse(min_sources(fixture.name, JSON.stringify(observed)));
  } catch (e) {
    $("error").textContent = e.message ?? String(e);
    return;
  }
  const box = $("oracle-out");
  if (out.min_source_count === null) {
    box.textContent = `no exact fit with up to ${out.max_sources} sources`;
    return;
  }
  box.innerHTML = `<p>${out.solutions.length} minimal set(s) of ${out.min_source_count} sources, ${out.candidates_checked} subsets checked:</p>`;
  const list = document.createElement("ul");
  for (const s of out.solutions) {
    const item = document.createElement("li");
    const names = s.sources.map((i) => fixture.nodes[i].label).join(", ");
    const button = document.createElement("button");
    button.textContent = `{${names}}${s.unique ? "" : " (not unique)"}`;
    button.addEventListener("click", () => {
      preview = {
        method: "l0 oracle",
        estimates: s.ratings,
        second_derivative: fixture.nodes.map(() => null),
        sources: s.sources,
        objective: null,
        iterations: 0,
        abstentions: [],
      };
      update();
    });
    item.append(button);
    list.append(item);
  }
  box.append(list);
}

await init();
$("fixture").addEventListener("change", (e) => load(e.target.value));
for (const id of ["method", "p", "eps"]) {
  $(id).addEventListener("input", () => {
    preview = null;
    update();
  });
}
$("reset").addEventListener("click", () => load(fixture.name));
$("oracle").addEventListener("click", runOracle);
load($("fixture").value);
