/**
 * Studio state and actions. Views subscribe and re-read the state after each
 * notification; all mutation goes through the action methods so the two
 * invariants hold everywhere: dispatched weights sum to 1 within tolerance,
 * and the preview only ever shows the newest completed render.
 */

import type { RenderPayload, RenderResult, StudioClient } from "./client.js";
import { createDebouncer, MIN_RENDER_INTERVAL_MS } from "./debounce.js";
import { createSequencer } from "./sequence.js";
import { adjustWeights, normalizeForDispatch, uniformWeights } from "./weights.js";

const NON_MAKEUP = "non-makeup";
const MAKEUP = "makeup";

export type StudioMode = "transfer" | "mix" | "remove";

export interface ReferenceSlot {
  id: string;
  styleCodeNorm: number;
  /** Uploaded bytes, kept so the view can draw a thumbnail. */
  thumbnail: Blob;
  unmasked: boolean;
}

export interface PreviewFrame {
  image: string;
  latencyMs: number;
  seq: number;
}

export interface FilmstripFrame {
  alpha: number;
  image: string;
}

export interface StudioState {
  sessionId: string | null;
  sourcePreview: Blob | null;
  references: ReferenceSlot[];
  weights: number[];
  mode: StudioMode;
  alpha: number;
  seeds: [number, number];
  preview: PreviewFrame | null;
  filmstrip: FilmstripFrame[];
  error: string | null;
}

export interface StudioStoreOptions {
  debounceMs?: number;
  maxWaitMs?: number;
}

export interface StudioStore {
  getState(): Readonly<StudioState>;
  subscribe(listener: (state: Readonly<StudioState>) => void): () => void;
  uploadSource(file: Blob, parsing?: Blob): Promise<void>;
  addReference(image: Blob, parsing?: Blob): Promise<void>;
  adjustWeight(index: number, value: number): void;
  setMode(mode: StudioMode): void;
  setAlpha(value: number): void;
  setSeeds(a: number, b: number): void;
  sweepAlpha(steps: number): Promise<void>;
  scrubFilmstrip(index: number): void;
  /** Fire the pending debounced render, then wait for every in-flight one. */
  settle(): Promise<void>;
}

function message(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}

export function createStudioStore(
  client: StudioClient,
  options: StudioStoreOptions = {},
): StudioStore {
  const state: StudioState = {
    sessionId: null,
    sourcePreview: null,
    references: [],
    weights: [],
    mode: "mix",
    alpha: 1,
    seeds: [0, 1],
    preview: null,
    filmstrip: [],
    error: null,
  };

  const listeners = new Set<(s: Readonly<StudioState>) => void>();
  const notify = () => {
    for (const listener of listeners) listener(state);
  };

  const sequencer = createSequencer<RenderResult>(
    (result, seq) => {
      state.preview = { image: result.image, latencyMs: result.latencyMs, seq };
      state.error = null;
      notify();
    },
    (error) => {
      state.error = message(error);
      notify();
    },
  );

  const debouncer = createDebouncer(
    options.debounceMs ?? MIN_RENDER_INTERVAL_MS,
    options.maxWaitMs ?? options.debounceMs ?? MIN_RENDER_INTERVAL_MS,
  );
  const inFlight = new Set<Promise<void>>();

  const track = <T>(work: Promise<T>): Promise<T> => {
    const entry = work.then(
      () => undefined,
      () => undefined,
    );
    inFlight.add(entry);
    void entry.finally(() => inFlight.delete(entry));
    return work;
  };

  const buildPayload = (): RenderPayload => {
    switch (state.mode) {
      case "mix":
        return {
          mode: "style_guided",
          weights: normalizeForDispatch(state.weights),
          domain: MAKEUP,
        };
      case "transfer":
        return {
          mode: "source_blend",
          weights: normalizeForDispatch(state.weights),
          alpha: state.alpha,
          domain: MAKEUP,
        };
      case "remove":
        return {
          mode: "latent_guided",
          seeds: [...state.seeds],
          alpha: state.alpha,
          domain: NON_MAKEUP,
        };
    }
  };

  const renderable = (): boolean => {
    if (state.sessionId === null) return false;
    if (state.mode === "remove") return true;
    return state.references.length > 0;
  };

  const requestRender = () => {
    if (!renderable()) return;
    debouncer.schedule(() => {
      // payload is built at fire time so a burst of edits sends its final state
      const sid = state.sessionId;
      if (sid === null || !renderable()) return;
      const payload = buildPayload();
      void track(sequencer.dispatch(() => client.render(sid, payload)));
    });
  };

  return {
    getState: () => state,

    subscribe(listener) {
      listeners.add(listener);
      return () => listeners.delete(listener);
    },

    async uploadSource(file, parsing) {
      try {
        const info = await client.createSession(file, parsing);
        debouncer.cancel();
        state.sessionId = info.sessionId;
        state.sourcePreview = file;
        state.references = [];
        state.weights = [];
        state.preview = null;
        state.filmstrip = [];
        state.error = null;
      } catch (error) {
        state.error = message(error);
      }
      notify();
    },

    async addReference(image, parsing) {
      if (state.sessionId === null) {
        state.error = "upload a source image first";
        notify();
        return;
      }
      try {
        const info = await client.addReference(state.sessionId, image, parsing);
        state.references.push({
          id: info.referenceId,
          styleCodeNorm: info.styleCodeNorm,
          thumbnail: image,
          unmasked: info.unmasked,
        });
        state.weights = uniformWeights(state.references.length);
        state.error = null;
        notify();
        requestRender();
        return;
      } catch (error) {
        state.error = message(error);
      }
      notify();
    },

    adjustWeight(index, value) {
      if (state.references.length === 0) {
        state.error = "add a reference before adjusting weights";
        notify();
        return;
      }
      state.weights = adjustWeights(state.weights, index, value);
      notify();
      requestRender();
    },

    setMode(mode) {
      state.mode = mode;
      notify();
      requestRender();
    },

    setAlpha(value) {
      state.alpha = Math.min(1, Math.max(0, value));
      notify();
      requestRender();
    },

    setSeeds(a, b) {
      state.seeds = [a, b];
      notify();
      if (state.mode === "remove") requestRender();
    },

    async sweepAlpha(steps) {
      if (steps < 2) {
        state.error = "a sweep needs at least 2 frames";
        notify();
        return;
      }
      const sid = state.sessionId;
      if (sid === null || state.references.length === 0) {
        state.error = "upload a source and a reference before sweeping";
        notify();
        return;
      }
      const weights = normalizeForDispatch(state.weights);
      const alphas = Array.from({ length: steps }, (_, i) => i / (steps - 1));
      try {
        const results = await track(
          Promise.all(
            alphas.map((alpha) =>
              client.render(sid, {
                mode: "source_blend",
                weights,
                alpha,
                domain: MAKEUP,
              }),
            ),
          ),
        );
        state.filmstrip = results.map((r, i) => ({
          alpha: alphas[i] ?? 0,
          image: r.image,
        }));
        state.error = null;
      } catch (error) {
        state.error = message(error);
      }
      notify();
    },

    scrubFilmstrip(index) {
      const frame = state.filmstrip[index];
      if (frame === undefined) return;
      state.mode = "transfer";
      state.alpha = frame.alpha;
      notify();
      requestRender();
    },

    async settle() {
      debouncer.flush();
      while (inFlight.size > 0) {
        await Promise.all([...inFlight]);
      }
    },
  };
}
