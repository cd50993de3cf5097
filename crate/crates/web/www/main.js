import init, { Scene, score_counts } from "./pkg/sarcd_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
let scene = null;

function draw(id, rgba, w, h) {
  const c = $(id);
  c.width = w;
  c.height = h;
  c.getContext("2d").putImageData(new ImageData(new Uint8ClampedArray(rgba), w, h), 0, 0);
}

function guard(target, f) {
  try {
    target.classList.remove("error");
    f();
  } catch (e) {
    target.classList.add("error");
    target.textContent = String(e.message ?? e);
  }
}

function generate() {
  guard($("scene-info"), () => {
    scene?.free();
    scene = null;
    scene = new Scene(num("size"), num("frac"), num("looks"), num("contrast"), BigInt(num("seed")));
    const [w, h] = [scene.width(), scene.height()];
    draw("i1", scene.rgba(1), w, h);
    draw("i2", scene.rgba(2), w, h);
    draw("mask", scene.rgba(0), w, h);
    $("scene-info").textContent = `${scene.changed_pixels()} changed pixels`;
    difference();
  });
}

function difference() {
  if (!scene) return;
  guard($("di-report"), () => {
    const method = document.querySelector("input[name=method]:checked").value;
    const d = scene.difference(method);
    const [w, h] = [scene.width(), scene.height()];
    draw("di", d.di_rgba(), w, h);
    draw("binary", d.binary_rgba(), w, h);
    const report = JSON.parse(d.report());
    $("di-report").textContent = JSON.stringify({ threshold: d.threshold(), ...report }, null, 2);
    d.free();
  });
}

function score() {
  guard($("score-report"), () => {
    const n = (id) => BigInt(num(id));
    const m = JSON.parse(score_counts(n("tp"), n("fp"), n("fn"), n("tn")));
    $("score-report").textContent = JSON.stringify(m, null, 2);
  });
}

await init();
$("generate").onclick = generate;
$("difference").onclick = difference;
document.querySelectorAll("input[name=method]").forEach((r) => (r.onchange = difference));
$("score").onclick = score;
generate();
score();
