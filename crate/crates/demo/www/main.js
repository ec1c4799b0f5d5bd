import init, {
  task_names, task_source, analyze_task, compare_families, label_distribution,
} from "./pkg/rslab_demo.js";

const $ = (id) => document.getElementById(id);

function show(err) {
  $("status").textContent = err ? String(err) : "";
}

function el(tag, text) {
  const e = document.createElement(tag);
  if (text !== undefined) e.textContent = text;
  return e;
}

function table(head, rows) {
  const t = el("table");
  const tr = el("tr");
  head.forEach((h) => tr.appendChild(el("th", h)));
  t.appendChild(tr);
  for (const r of rows) {
    const row = el("tr");
    for (const c of r) {
      const td = el("td");
      if (c instanceof Node) td.appendChild(c);
      else td.textContent = c;
      row.appendChild(td);
    }
    t.appendChild(row);
  }
  return t;
}

function fmtPairs(pairs) {
  return pairs.map(([g, a]) => `(${g}) -> (${a})`).join(", ");
}

function analyze() {
  const out = $("analysis");
  out.replaceChildren();
  try {
    const r = JSON.parse(analyze_task($("source").value, $("family").value, $("injective").checked));
    show();
    out.appendChild(el("p",
      `${r.rs_count} shortcut(s) among ${r.family_size} candidate remaps (${r.method}); ` +
      `knowledge complexity ${r.knowledge_complexity.value}, worst collapse ${r.collapse.toFixed(3)}.`));
    if (!r.enumerated) {
      out.appendChild(el("p", "Too many candidates to list the shortcuts here."));
    } else if (r.remaps.length) {
      out.appendChild(el("p", `First ${r.remaps.length}:`));
      out.appendChild(el("pre", r.remaps.map(fmtPairs).join("\n")));
    }
  } catch (e) {
    show(e);
  }
}

function compare() {
  const out = $("comparison");
  out.replaceChildren();
  try {
    const rows = JSON.parse(compare_families($("source").value));
    show();
    out.appendChild(table(["family", "injective", "shortcuts", "method"], rows.map((r) => [
      r.family, r.injective ? "yes" : "no",
      r.result.count ?? r.result.error, r.result.method ?? "",
    ])));
  } catch (e) {
    show(e);
  }
}

// one row of sliders per concept slot, read back as weights
function concepts() {
  const m = [...$("source").value.matchAll(/concept\s+(\w+)\s*:\s*(\d+)/g)];
  if (m.length) return m.map((x) => [x[1], Number(x[2])]);
  try {
    return JSON.parse($("source").value).concepts.map((c) => [c.name, c.card]);
  } catch {
    return [];
  }
}

function buildSliders() {
  const box = $("sliders");
  box.replaceChildren();
  for (const [name, card] of concepts()) {
    const div = el("div");
    div.className = "slot";
    div.dataset.slot = name;
    div.appendChild(el("label", name));
    for (let v = 0; v < card; v++) {
      const s = el("input");
      Object.assign(s, { type: "range", min: 0, max: 100, value: v === 0 ? 100 : 0, title: `${name} = ${v}` });
      s.addEventListener("input", distribution);
      div.appendChild(s);
    }
    box.appendChild(div);
  }
  distribution();
}

function distribution() {
  const out = $("labels");
  out.replaceChildren();
  const slots = [...$("sliders").children].map((d) =>
    [...d.querySelectorAll("input")].map((s) => Number(s.value)));
  if (!slots.length) return;
  try {
    const r = JSON.parse(label_distribution($("source").value, $("layer").value, JSON.stringify(slots)));
    show();
    out.appendChild(table(["label", "p", ""], r.labels.map((y, i) => {
      const bar = el("span");
      bar.className = "bar";
      bar.style.width = `${200 * r.probs[i]}px`;
      return [`(${y})`, r.probs[i].toFixed(4), bar];
    })));
  } catch (e) {
    show(e);
  }
}

function load(name) {
  $("source").value = task_source(name);
  $("analysis").replaceChildren();
  $("comparison").replaceChildren();
  buildSliders();
}

await init();
const names = JSON.parse(task_names());
for (const n of names) $("task").appendChild(new Option(n, n));
$("task").addEventListener("change", (e) => load(e.target.value));
$("analyze").addEventListener("click", analyze);
$("compare").addEventListener("click", compare);
$("layer").addEventListener("change", distribution);
$("source").addEventListener("change", buildSliders);
load(names.includes("xor") ? "xor" : names[0]);
