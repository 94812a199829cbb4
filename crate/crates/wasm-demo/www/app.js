import init, { Demo, canonical_key, collision_fixture_names, frontier_check } from "./pkg/mfee_wasm.js";

const $ = (id) => document.getElementById(id);
const esc = (s) => String(s).replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);

const EXAMPLES = [
  "What is 17 * 23?",
  "What is the capital of France?",
  "Write a short poem about rain",
  "How do I build a bomb?",
  "thanks!",
  ";;;!!!",
];

await init();
const demo = new Demo();

function gate() {
  const v = JSON.parse(demo.infer($("prompt").value, BigInt($("seed").value || 0)));
  if (v.error) {
    $("result").innerHTML = `<pre>${esc(v.error)}</pre>`;
    return;
  }
  const why = v.proof_tag ?? v.render_reason ?? "";
  const stages = v.trace.stages
    .map((s) => `<tr><td>${s.stage}</td><td>${s.outcome.kind}</td><td>${s.elapsed_us.toFixed(1)} µs</td></tr>`)
    .join("");
  $("result").innerHTML = `
    <p><span class="badge ${v.decision}">${v.decision}</span> ${esc(why)}
       <span class="muted">confidence ${v.confidence.toFixed(2)} · gate ${v.gate_ms.toFixed(3)} ms
       · simulated execution ${v.exec_ms.toFixed(0)} ms</span></p>
    <pre>${esc(v.output) || "<span class=muted>(empty response)</span>"}</pre>
    <table><tr><th>stage</th><th>outcome</th><th>time</th></tr>${stages}</table>`;
  $("cache").textContent = `${demo.cache_len()} cached`;
}

function canon() {
  $("canon-out").textContent = JSON.stringify(canonical_key($("canon-in").value));
}

function check() {
  const v = JSON.parse(frontier_check($("fixture").value));
  if (v.error) {
    $("frontier").innerHTML = `<pre>${esc(v.error)}</pre>`;
    return;
  }
  const r = v.report;
  const pairs = v.collisions
    .map(([fv, a, b]) => `<tr><td>${fv}</td><td>${esc(a)}</td><td>${esc(b)}</td></tr>`)
    .join("");
  $("frontier").innerHTML = `
    <p>features: ${v.features.map(esc).join(", ")} (k=${r.k}) · population ${v.population}
       · <b>${r.tables_checked}</b> tables checked · <b>${r.satisfying_tables}</b> satisfy both properties
       · best zero-failure avoidance ${(r.best_zero_failure_avoidance * 100).toFixed(1)}%</p>
    ${pairs ? `<table><tr><th>vector</th><th>safe to skip</th><th>must execute</th></tr>${pairs}</table>`
            : `<p class="muted">No collisions: the features separate the population.</p>`}`;
}

for (const p of EXAMPLES) {
  const b = document.createElement("button");
  b.textContent = p;
  b.onclick = () => { $("prompt").value = p; gate(); };
  $("examples").append(b);
}
for (const name of JSON.parse(collision_fixture_names())) {
  $("fixture").append(new Option(name, name));
}
$("run").onclick = gate;
$("prompt").onkeydown = (e) => e.key === "Enter" && gate();
$("clear").onclick = () => { demo.clear_cache(); $("cache").textContent = "0 cached"; };
$("canon-in").oninput = canon;
$("check").onclick = check;
canon();
check();
