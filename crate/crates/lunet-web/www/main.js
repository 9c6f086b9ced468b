import init, { Phantom, Trainer } from "../pkg/lunet_web.js";

const SIZE = 64;
const $ = (id) => document.getElementById(id);
let phantom = null;
let trainer = null;

function draw(id, pixels) {
  const ctx = $(id).getContext("2d");
  const img = ctx.createImageData(SIZE, SIZE);
  pixels.forEach((v, i) => {
    const g = Math.round(Math.min(1, Math.max(0, v)) * 255);
    img.data.set([g, g, g, 255], 4 * i);
  });
  ctx.putImageData(img, 0, 0);
}

function show(seg, caption) {
  draw("mask", seg.mask());
  $("mask-caption").textContent = caption;
  const pct = (x) => (100 * x).toFixed(1);
  $("scores").innerHTML = [seg.pixel_acc, seg.mean_acc, seg.mean_iou, seg.fwiou]
    .map((x) => `<td>${pct(x)}</td>`)
    .join("");
  seg.free();
}

function guard(f) {
  return () => {
    try {
      $("status").textContent = "";
      f();
    } catch (e) {
      $("status").textContent = e.message ?? String(e);
    }
  };
}

function generate() {
  phantom?.free();
  phantom = new Phantom(SIZE, 0.45, Number($("noise").value), Number($("seed").value));
  draw("image", phantom.image());
  draw("truth", phantom.truth());
}

await init();
$("generate").onclick = guard(generate);
$("segment").onclick = guard(() => {
  const m = $("method");
  show(phantom.segment(m.value, Number($("clusters").value)), m.options[m.selectedIndex].text);
});
$("train").onclick = guard(() => {
  trainer ??= new Trainer(8, SIZE, 4, 0);
  let loss = 0;
  for (let i = 0; i < 10; i++) loss = trainer.step();
  $("loss").textContent = `step ${trainer.steps}, loss ${loss.toFixed(4)}`;
});
$("predict").onclick = guard(() => {
  trainer ??= new Trainer(8, SIZE, 4, 0);
  show(trainer.predict(phantom), `U-Net after ${trainer.steps} steps`);
});
guard(generate)();
$("status").textContent = "";
