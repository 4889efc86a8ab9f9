/** Browser entry point: binds the DOM shell to the headless explorer. */

import { CheckpointInfo, HttpTransport, listCheckpoints } from "./api.js";
import { Explorer } from "./explorer.js";
import { BOUNDARY_PRESETS, editView, generateView, mixView, transitionView } from "./panels.js";
import { composeResidualOverlay, payloadHash } from "./slices.js";
import { PanelName, SliderName } from "./state.js";

const SLIDERS: { id: string; name: SliderName }[] = [
  { id: "psi", name: "psi" },
  { id: "truncation", name: "truncation" },
  { id: "alpha", name: "alpha" },
  { id: "boundary", name: "boundary" },
  { id: "direction", name: "direction" },
  { id: "strength", name: "strength" },
];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

async function grayChannel(url: string): Promise<{ data: Uint8Array; w: number; h: number }> {
  const img = new Image();
  img.src = url;
  await img.decode();
  const canvas = document.createElement("canvas");
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(img, 0, 0);
  const rgba = ctx.getImageData(0, 0, canvas.width, canvas.height).data;
  const gray = new Uint8Array(canvas.width * canvas.height);
  for (let i = 0; i < gray.length; i++) gray[i] = rgba[4 * i]!;
  return { data: gray, w: canvas.width, h: canvas.height };
}

async function paintOverlay(canvas: HTMLCanvasElement, originalUrl: string, editedUrl: string) {
  const [orig, edit] = await Promise.all([grayChannel(originalUrl), grayChannel(editedUrl)]);
  canvas.width = orig.w;
  canvas.height = orig.h;
  const rgba = composeResidualOverlay(orig.data, edit.data);
  const ctx = canvas.getContext("2d")!;
  const imageData = ctx.createImageData(orig.w, orig.h);
  imageData.data.set(rgba);
  ctx.putImageData(imageData, 0, 0);
}

async function boot() {
  const transport = new HttpTransport("");
  const explorer = new Explorer(transport);

  const listed = (await transport.send(listCheckpoints())) as { checkpoints: CheckpointInfo[] };
  const picker = el<HTMLSelectElement>("checkpoint");
  for (const ck of listed.checkpoints) {
    const opt = document.createElement("option");
    opt.value = ck.name;
    opt.textContent = `${ck.name} (${ck.arch})`;
    picker.appendChild(opt);
  }
  picker.addEventListener("change", () => {
    const info = listed.checkpoints.find((c) => c.name === picker.value);
    if (info) explorer.dispatch({ t: Date.now(), kind: "checkpoint", info });
  });

  for (const { id, name } of SLIDERS) {
    const input = el<HTMLInputElement>(id);
    input.addEventListener("input", () => {
      explorer.dispatch({ t: Date.now(), kind: "slider", name, value: Number(input.value) });
    });
  }
  el<HTMLInputElement>("seed").addEventListener("change", (ev) => {
    explorer.dispatch({ t: Date.now(), kind: "seed", value: Number((ev.target as HTMLInputElement).value) });
  });
  for (const preset of BOUNDARY_PRESETS) {
    el<HTMLButtonElement>(`preset-${preset}`).addEventListener("click", () => {
      explorer.dispatch({ t: Date.now(), kind: "preset", boundary: preset });
    });
  }
  for (const panel of ["generate", "transition", "mix", "edit"] as PanelName[]) {
    el<HTMLButtonElement>(`tab-${panel}`).addEventListener("click", () => {
      explorer.dispatch({ t: Date.now(), kind: "panel", panel });
    });
  }
  el<HTMLButtonElement>("adopt-source").addEventListener("click", () => {
    explorer.dispatch({ t: Date.now(), kind: "adopt", role: "source" });
    void paint();
  });
  el<HTMLButtonElement>("adopt-target").addEventListener("click", () => {
    explorer.dispatch({ t: Date.now(), kind: "adopt", role: "target" });
    void paint();
  });

  let painted = -1;
  async function paint() {
    if (explorer.revision === painted) return;
    painted = explorer.revision;
    const st = explorer.state;

    const gen = generateView(st, explorer.responses.generate);
    if (gen !== null) {
      gen.panes.forEach((pane, i) => {
        el<HTMLImageElement>(`gen-pane-${i}`).src = pane.url;
      });
      el<HTMLAnchorElement>("download").href = gen.downloadUrl;
      const bytes = await transport.bytes(gen.panes[0].url);
      el<HTMLSpanElement>("preview-hash").textContent = (await payloadHash(bytes)).slice(0, 16);
    }

    const strip = transitionView(st, explorer.responses.transition);
    if (strip !== null) {
      strip.frames.forEach((frame, i) => {
        const img = el<HTMLImageElement>(`strip-${i}`);
        if (frame.url !== null) img.src = frame.url;
        img.classList.toggle("selected", frame === strip.selected);
      });
    }

    const mixed = mixView(st, explorer.responses.mix);
    if (mixed !== null) el<HTMLImageElement>("mix-pane").src = mixed.panes[0].url;

    const edited = editView(st, explorer.responses.edit);
    if (edited !== null) {
      el<HTMLImageElement>("edit-pane").src = edited.panes[0].url;
      const pair = edited.overlayPairs[0]!;
      await paintOverlay(el<HTMLCanvasElement>("overlay"), pair.original, pair.edited);
    }

    const error = explorer.errors[st.panel];
    const note = el<HTMLParagraphElement>("error");
    note.textContent = error ?? "";
    note.style.display = error === undefined ? "none" : "block";
  }

  setInterval(() => void paint(), 120);
}

if (typeof document !== "undefined") {
  void boot();
}
