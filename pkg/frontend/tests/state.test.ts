import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import type {
  HealthInfo,
  ReferenceInfo,
  RenderPayload,
  RenderResult,
  SessionInfo,
  StudioClient,
} from "../src/client.js";
import { StudioApiError } from "../src/client.js";
import { createStudioStore } from "../src/state.js";
import { WEIGHT_SUM_TOLERANCE } from "../src/weights.js";

interface MockClient extends StudioClient {
  renders: { sessionId: string; payload: RenderPayload }[];
  failNextUpload: boolean;
  renderImpl: (payload: RenderPayload) => Promise<RenderResult>;
}

function makeClient(): MockClient {
  let sessions = 0;
  let references = 0;
  const client: MockClient = {
    renders: [],
    failNextUpload: false,
    renderImpl: (payload) =>
      Promise.resolve({ image: `png:${JSON.stringify(payload)}`, latencyMs: 1 }),
    createSession(): Promise<SessionInfo> {
      if (client.failNextUpload) {
        client.failNextUpload = false;
        return Promise.reject(new StudioApiError(400, "cannot decode upload"));
      }
      sessions += 1;
      return Promise.resolve({ sessionId: `s${sessions}`, unmasked: false });
    },
    addReference(): Promise<ReferenceInfo> {
      references += 1;
      return Promise.resolve({
        referenceId: `r${references}`,
        styleCodeNorm: 3.5,
        unmasked: false,
      });
    },
    render(sessionId, payload): Promise<RenderResult> {
      client.renders.push({ sessionId, payload });
      return client.renderImpl(payload);
    },
    health(): Promise<HealthInfo> {
      return Promise.resolve({ status: "ok", bundleHash: "0".repeat(64), step: 0 });
    },
  };
  return client;
}

const png = () => new Blob([new Uint8Array([137, 80, 78, 71])], { type: "image/png" });

function deferred<T>(): { promise: Promise<T>; resolve: (v: T) => void } {
  let resolve!: (v: T) => void;
  const promise = new Promise<T>((res) => {
    resolve = res;
  });
  return { promise, resolve };
}

describe("createStudioStore", () => {
  beforeEach(() => {
    vi.useFakeTimers({ toFake: ["setTimeout", "clearTimeout", "Date"] });
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("upload success creates a session and clears the banner", async () => {
    const store = createStudioStore(makeClient());
    await store.uploadSource(png());
    const state = store.getState();
    expect(state.sessionId).toBe("s1");
    expect(state.sourcePreview).not.toBeNull();
    expect(state.error).toBeNull();
  });

  it("corrupt upload raises the error banner and keeps the session", async () => {
    const client = makeClient();
    const store = createStudioStore(client);
    await store.uploadSource(png());
    client.failNextUpload = true;
    await store.uploadSource(png());
    const state = store.getState();
    expect(state.error).toBe("cannot decode upload");
    expect(state.sessionId).toBe("s1");
  });

  it("re-upload replaces the session and resets references", async () => {
    const store = createStudioStore(makeClient());
    await store.uploadSource(png());
    await store.addReference(png());
    await store.uploadSource(png());
    const state = store.getState();
    expect(state.sessionId).toBe("s2");
    expect(state.references).toEqual([]);
    expect(state.weights).toEqual([]);
    expect(state.preview).toBeNull();
  });

  it("references start at uniform weights", async () => {
    const store = createStudioStore(makeClient());
    await store.uploadSource(png());
    await store.addReference(png());
    await store.addReference(png());
    await store.settle();
    expect(store.getState().weights).toEqual([0.5, 0.5]);
  });

  it("adding a reference without a session only raises the banner", async () => {
    const store = createStudioStore(makeClient());
    await store.addReference(png());
    expect(store.getState().error).toBe("upload a source image first");
  });

  it("one-hot drag dispatches exactly one-hot style_guided weights", async () => {
    const client = makeClient();
    const store = createStudioStore(client);
    await store.uploadSource(png());
    await store.addReference(png());
    await store.addReference(png());
    await store.addReference(png());
    await store.settle();
    client.renders.length = 0;

    store.adjustWeight(1, 1);
    await store.settle();
    expect(client.renders).toHaveLength(1);
    const payload = client.renders[0]?.payload;
    expect(payload?.mode).toBe("style_guided");
    expect(payload?.weights).toEqual([0, 1, 0]);
  });

  it("equal weights over two references dispatch the midpoint payload", async () => {
    const client = makeClient();
    const store = createStudioStore(client);
    await store.uploadSource(png());
    await store.addReference(png());
    await store.addReference(png());
    await store.settle();
    client.renders.length = 0;

    store.adjustWeight(0, 0.5);
    await store.settle();
    expect(client.renders[0]?.payload.weights).toEqual([0.5, 0.5]);
  });

  it("every dispatched payload stays on the simplex", async () => {
    const client = makeClient();
    const store = createStudioStore(client);
    await store.uploadSource(png());
    for (let i = 0; i < 4; i++) await store.addReference(png());
    await store.settle();

    let x = 42;
    const rng = () => {
      x = (x * 1664525 + 1013904223) >>> 0;
      return x / 2 ** 32;
    };
    for (let step = 0; step < 60; step++) {
      store.adjustWeight(Math.floor(rng() * 4), rng() * 1.2 - 0.1);
      vi.advanceTimersByTime(40);
    }
    await store.settle();

    expect(client.renders.length).toBeGreaterThan(0);
    for (const { payload } of client.renders) {
      const total = (payload.weights ?? []).reduce((a, b) => a + b, 0);
      expect(Math.abs(total - 1)).toBeLessThanOrEqual(WEIGHT_SUM_TOLERANCE);
    }
  });

  it("bounds 50 rapid slider events by the debounce interval", async () => {
    const client = makeClient();
    const store = createStudioStore(client);
    await store.uploadSource(png());
    await store.addReference(png());
    await store.addReference(png());
    await store.settle();
    client.renders.length = 0;

    const spacingMs = 5;
    const events = 50;
    for (let i = 0; i < events; i++) {
      store.adjustWeight(i % 2, (i + 1) / events);
      vi.advanceTimersByTime(spacingMs);
    }
    vi.runAllTimers();
    await store.settle();

    const durationMs = (events - 1) * spacingMs;
    expect(client.renders.length).toBeGreaterThanOrEqual(1);
    expect(client.renders.length).toBeLessThanOrEqual(Math.ceil(durationMs / 150));
  });

  it("never displays a stale response", async () => {
    const client = makeClient();
    const store = createStudioStore(client);
    await store.uploadSource(png());
    await store.addReference(png());
    await store.addReference(png());
    await store.settle();
    const baseSeq = store.getState().preview?.seq ?? 0;

    const slow = deferred<RenderResult>();
    const fast = deferred<RenderResult>();
    const queue = [slow.promise, fast.promise];
    client.renderImpl = () => queue.shift() ?? Promise.resolve({ image: "x", latencyMs: 0 });

    store.adjustWeight(0, 1);
    vi.advanceTimersByTime(200);
    store.adjustWeight(0, 0);
    vi.advanceTimersByTime(200);

    fast.resolve({ image: "newest", latencyMs: 2 });
    slow.resolve({ image: "stale", latencyMs: 9 });
    await store.settle();

    const preview = store.getState().preview;
    expect(preview?.image).toBe("newest");
    expect(preview?.seq).toBe(baseSeq + 2);
  });

  it("surfaces a render failure and clears it on the next success", async () => {
    const client = makeClient();
    const store = createStudioStore(client);
    await store.uploadSource(png());
    await store.addReference(png());
    await store.settle();

    client.renderImpl = () => Promise.reject(new StudioApiError(503, "no bundle is loaded"));
    store.adjustWeight(0, 1);
    await store.settle();
    expect(store.getState().error).toBe("no bundle is loaded");

    client.renderImpl = (payload) =>
      Promise.resolve({ image: `png:${JSON.stringify(payload)}`, latencyMs: 1 });
    store.adjustWeight(0, 1);
    await store.settle();
    expect(store.getState().error).toBeNull();
    expect(store.getState().preview).not.toBeNull();
  });

  it("remove mode dispatches latent_guided with the seed pair", async () => {
    const client = makeClient();
    const store = createStudioStore(client);
    await store.uploadSource(png());
    store.setSeeds(7, 9);
    store.setMode("remove");
    store.setAlpha(0.25);
    await store.settle();

    const payload = client.renders.at(-1)?.payload;
    expect(payload?.mode).toBe("latent_guided");
    expect(payload?.seeds).toEqual([7, 9]);
    expect(payload?.alpha).toBe(0.25);
    expect(payload?.domain).toBe("non-makeup");
  });

  it("sweepAlpha(5) yields five thumbnails on the alpha grid", async () => {
    const client = makeClient();
    const store = createStudioStore(client);
    await store.uploadSource(png());
    await store.addReference(png());
    await store.settle();
    client.renders.length = 0;

    await store.sweepAlpha(5);
    const state = store.getState();
    expect(state.filmstrip).toHaveLength(5);
    expect(state.filmstrip.map((f) => f.alpha)).toEqual([0, 0.25, 0.5, 0.75, 1]);
    expect(client.renders.every((r) => r.payload.mode === "source_blend")).toBe(true);
  });

  it("scrubbing the filmstrip selects that frame's alpha", async () => {
    const client = makeClient();
    const store = createStudioStore(client);
    await store.uploadSource(png());
    await store.addReference(png());
    await store.settle();
    await store.sweepAlpha(5);

    store.scrubFilmstrip(2);
    await store.settle();
    const state = store.getState();
    expect(state.alpha).toBe(0.5);
    expect(state.mode).toBe("transfer");
    expect(client.renders.at(-1)?.payload).toMatchObject({ mode: "source_blend", alpha: 0.5 });
  });

  it("rejects a sweep without a reference", async () => {
    const store = createStudioStore(makeClient());
    await store.uploadSource(png());
    await store.sweepAlpha(5);
    expect(store.getState().filmstrip).toEqual([]);
    expect(store.getState().error).toBe("upload a source and a reference before sweeping");
  });
});
