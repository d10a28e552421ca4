import init, { workloadSummary, comparePolicies, fileScores } from "./pkg/tiersim_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const fmt = (v, d = 3) => (v === null || v === undefined ? "" : Number(v).toFixed(d));
const BINS = ["A", "B", "C", "D", "E", "F"];

function table(head, rows) {
  const t = document.createElement("table");
  t.createTHead().insertRow().append(...head.map((h) => Object.assign(document.createElement("th"), { textContent: h })));
  const body = t.createTBody();
  for (const r of rows) {
    const tr = body.insertRow();
    for (const c of r) tr.insertCell().textContent = c;
  }
  return t;
}

function show(target, fn) {
  const el = $(target);
  el.textContent = "working...";
  // Let the page repaint before the blocking call.
  setTimeout(() => {
    try {
      el.replaceChildren(fn());
    } catch (e) {
      el.replaceChildren(Object.assign(document.createElement("p"), { className: "err", textContent: String(e) }));
    }
  }, 0);
}

function workload() {
  return [$("preset").value, num("jobs"), num("hours"), BigInt(num("seed"))];
}

$("summarize").onclick = () =>
  show("summary", () => {
    const s = JSON.parse(workloadSummary(...workload()));
    const t = table(
      ["bin", "job share", "byte share"],
      BINS.map((b, i) => [b, fmt(s.bin_fractions[i]), fmt(s.bin_byte_fractions[i])]),
    );
    const p = document.createElement("p");
    p.textContent = `${s.jobs} jobs, ${s.files} files, ${s.reads} reads, never read ${fmt(s.never_read_frac)}`;
    const frag = document.createDocumentFragment();
    frag.append(p, t);
    return frag;
  });

$("compare").onclick = () =>
  show("comparison", () => {
    const rows = JSON.parse(comparePolicies(...workload(), $("pairs").value));
    return table(
      ["policy", "HR", "BHR", ...BINS.map((b) => `${b} %`)],
      rows.map((r) => [r.policy, fmt(r.hr), fmt(r.bhr), ...r.bins.map((b) => fmt(b.completion_reduction_pct, 1))]),
    );
  });

$("score").onclick = () =>
  show("scores", () => {
    const s = JSON.parse(fileScores(num("size"), num("created"), $("accesses").value, num("now")));
    return table(
      ["LRFU", "EXD", "features"],
      [[fmt(s.lrfu), fmt(s.exd), s.features.map((x) => fmt(x, 2)).join(" ")]],
    );
  });

await init();
