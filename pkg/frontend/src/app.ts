/**
 * DOM wiring for the studio page. All logic lives in the store; this file
 * only moves values between form controls and store actions.
 */

import { createStudioClient } from "./client.js";
import type { StudioState, StudioStore } from "./state.js";
import { createStudioStore } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

function fileOf(input: HTMLInputElement): File | undefined {
  return input.files?.[0] ?? undefined;
}

function renderReferences(store: StudioStore, state: Readonly<StudioState>): void {
  const holder = el<HTMLDivElement>("references");
  holder.textContent = "";
  state.references.forEach((ref, i) => {
    const row = document.createElement("div");
    row.className = "reference-row";

    const thumb = document.createElement("img");
    thumb.className = "thumb";
    thumb.src = URL.createObjectURL(ref.thumbnail);
    row.appendChild(thumb);

    const slider = document.createElement("input");
    slider.type = "range";
    slider.min = "0";
    slider.max = "1";
    slider.step = "0.01";
    slider.value = String(state.weights[i] ?? 0);
    slider.addEventListener("input", () => {
      store.adjustWeight(i, Number(slider.value));
    });
    row.appendChild(slider);

    const label = document.createElement("span");
    label.textContent = `${(state.weights[i] ?? 0).toFixed(2)} (|s| = ${ref.styleCodeNorm.toFixed(2)})`;
    row.appendChild(label);

    holder.appendChild(row);
  });
}

function renderFilmstrip(store: StudioStore, state: Readonly<StudioState>): void {
  const strip = el<HTMLDivElement>("filmstrip");
  strip.textContent = "";
  state.filmstrip.forEach((frame, i) => {
    const thumb = document.createElement("img");
    thumb.className = "thumb";
    thumb.src = `data:image/png;base64,${frame.image}`;
    thumb.title = `alpha ${frame.alpha.toFixed(2)}`;
    thumb.addEventListener("click", () => store.scrubFilmstrip(i));
    strip.appendChild(thumb);
  });
}

function render(store: StudioStore, state: Readonly<StudioState>): void {
  const banner = el<HTMLDivElement>("error");
  banner.textContent = state.error ?? "";
  banner.hidden = state.error === null;

  const source = el<HTMLImageElement>("source-preview");
  if (state.sourcePreview !== null && source.dataset.blobSeen !== String(state.sessionId)) {
    source.src = URL.createObjectURL(state.sourcePreview);
    source.dataset.blobSeen = String(state.sessionId);
  }

  if (state.preview !== null) {
    el<HTMLImageElement>("preview").src = `data:image/png;base64,${state.preview.image}`;
    el<HTMLSpanElement>("latency").textContent = `${state.preview.latencyMs.toFixed(1)} ms`;
  }

  el<HTMLInputElement>("alpha").value = String(state.alpha);
  el<HTMLSpanElement>("alpha-value").textContent = state.alpha.toFixed(2);

  renderReferences(store, state);
  renderFilmstrip(store, state);
}

export function mount(baseUrl: string): StudioStore {
  const store = createStudioStore(createStudioClient(baseUrl));
  store.subscribe((state) => render(store, state));

  el<HTMLButtonElement>("upload-source").addEventListener("click", () => {
    const source = fileOf(el<HTMLInputElement>("source-file"));
    if (!source) return;
    void store.uploadSource(source, fileOf(el<HTMLInputElement>("source-parsing")));
  });

  el<HTMLButtonElement>("add-reference").addEventListener("click", () => {
    const image = fileOf(el<HTMLInputElement>("reference-file"));
    if (!image) return;
    void store.addReference(image, fileOf(el<HTMLInputElement>("reference-parsing")));
  });

  for (const mode of ["transfer", "mix", "remove"] as const) {
    el<HTMLInputElement>(`mode-${mode}`).addEventListener("change", () => store.setMode(mode));
  }

  el<HTMLInputElement>("alpha").addEventListener("input", (event) => {
    store.setAlpha(Number((event.target as HTMLInputElement).value));
  });

  el<HTMLButtonElement>("sweep").addEventListener("click", () => {
    void store.sweepAlpha(5);
  });

  const seedA = el<HTMLInputElement>("seed-a");
  const seedB = el<HTMLInputElement>("seed-b");
  for (const input of [seedA, seedB]) {
    input.addEventListener("change", () => {
      store.setSeeds(Number(seedA.value), Number(seedB.value));
    });
  }

  return store;
}

if (typeof document !== "undefined" && document.getElementById("studio") !== null) {
  const api = new URLSearchParams(location.search).get("api") ?? "http://127.0.0.1:8000";
  mount(api);
}
