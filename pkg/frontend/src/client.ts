/**
 * Typed client for the studio HTTP API. The UI talks to the service through
 * this module only; no other backends exist.
 */

export type RenderMode = "style_guided" | "source_blend" | "latent_guided";

export interface SessionInfo {
  sessionId: string;
  unmasked: boolean;
}

export interface ReferenceInfo {
  referenceId: string;
  styleCodeNorm: number;
  unmasked: boolean;
}

export type DomainName = "makeup" | "non-makeup";

export interface RenderPayload {
  mode: RenderMode;
  weights?: number[];
  alpha?: number;
  seeds?: number[];
  domain?: DomainName;
}

export interface RenderResult {
  /** Base64-encoded 8-bit PNG. */
  image: string;
  latencyMs: number;
}

export interface HealthInfo {
  status: string;
  bundleHash: string;
  step: number;
}

export class StudioApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = "StudioApiError";
    this.status = status;
  }
}

export interface StudioClient {
  createSession(source: Blob, parsing?: Blob): Promise<SessionInfo>;
  addReference(sessionId: string, image: Blob, parsing?: Blob): Promise<ReferenceInfo>;
  render(sessionId: string, payload: RenderPayload): Promise<RenderResult>;
  health(): Promise<HealthInfo>;
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) return;
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (body.detail !== undefined) detail = JSON.stringify(body.detail);
  } catch {
    // non-JSON error body, keep the status text
  }
  throw new StudioApiError(response.status, detail);
}

export function createStudioClient(
  baseUrl: string,
  fetchFn: typeof fetch = fetch,
): StudioClient {
  const root = baseUrl.replace(/\/+$/, "");

  return {
    async createSession(source: Blob, parsing?: Blob): Promise<SessionInfo> {
      const form = new FormData();
      form.append("source", source, "source.png");
      if (parsing) form.append("parsing", parsing, "parsing.png");
      const response = await fetchFn(`${root}/session`, { method: "POST", body: form });
      await raiseForStatus(response);
      const body = (await response.json()) as { session_id: string; unmasked: boolean };
      return { sessionId: body.session_id, unmasked: body.unmasked };
    },

    async addReference(sessionId: string, image: Blob, parsing?: Blob): Promise<ReferenceInfo> {
      const form = new FormData();
      form.append("reference", image, "reference.png");
      if (parsing) form.append("parsing", parsing, "parsing.png");
      const response = await fetchFn(`${root}/session/${sessionId}/reference`, {
        method: "POST",
        body: form,
      });
      await raiseForStatus(response);
      const body = (await response.json()) as {
        reference_id: string;
        style_code_norm: number;
        unmasked: boolean;
      };
      return {
        referenceId: body.reference_id,
        styleCodeNorm: body.style_code_norm,
        unmasked: body.unmasked,
      };
    },

    async render(sessionId: string, payload: RenderPayload): Promise<RenderResult> {
      const response = await fetchFn(`${root}/session/${sessionId}/render`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(payload),
      });
      await raiseForStatus(response);
      const body = (await response.json()) as { image: string; latency_ms: number };
      return { image: body.image, latencyMs: body.latency_ms };
    },

    async health(): Promise<HealthInfo> {
      const response = await fetchFn(`${root}/health`);
      await raiseForStatus(response);
      const body = (await response.json()) as {
        status: string;
        bundle_hash: string;
        step: number;
      };
      return { status: body.status, bundleHash: body.bundle_hash, step: body.step };
    },
  };
}
