/** Request builders for the volume service HTTP API.
 *
 * Every builder is a pure function from panel parameters to an ApiRequest
 * with a fixed key order, so serializing a session's request sequence is
 * reproducible byte for byte. The UI talks to the service exclusively
 * through these shapes; it never touches volume files directly.
 */

export interface ApiRequest {
  method: "GET" | "POST";
  path: string;
  body?: Record<string, unknown>;
}

export interface CheckpointInfo {
  name: string;
  arch: "progan" | "stylegan";
  full_shape: [number, number, number];
  stage: number;
  has_encoder: boolean;
}

export interface GenerateResponse {
  checkpoint: string;
  arch: string;
  seed: number;
  volumes: { id: string; preview: string }[];
  codes: number[][];
  code_space: "z" | "w";
}

export interface TransitionResponse {
  checkpoint: string;
  frames: { id: string; alpha: number; preview: string }[];
}

export interface MixResponse {
  checkpoint: string;
  id: string;
  boundary: number;
  preview: string;
}

export interface EditResponse {
  checkpoint: string;
  edited_id: string;
  residual_id: string;
  original_id: string;
  code: number[];
  preview: string;
}

export function listCheckpoints(): ApiRequest {
  return { method: "GET", path: "/checkpoints" };
}

export function generateRequest(p: {
  checkpoint: string;
  arch: "progan" | "stylegan";
  psi: number;
  truncation: number;
  seed: number;
}): ApiRequest {
  // the slider that applies is decided by the architecture, mirroring
  // the server rule that psi is style-only and truncation progressive-only
  const body: Record<string, unknown> = { checkpoint: p.checkpoint };
  if (p.arch === "stylegan") body.psi = p.psi;
  else body.truncation = p.truncation;
  body.seed = p.seed;
  body.count = 1;
  return { method: "POST", path: "/generate", body };
}

export function transitionRequest(p: {
  checkpoint: string;
  codeA: number[];
  codeB: number[];
  space: "z" | "w";
}): ApiRequest {
  // steps=3 yields the quarter-spaced interior frames of the five-frame
  // strip; the scrub position selects among them client-side
  return {
    method: "POST",
    path: "/transition",
    body: {
      checkpoint: p.checkpoint,
      code_a: p.codeA,
      code_b: p.codeB,
      steps: 3,
      space: p.space,
    },
  };
}

export function mixRequest(p: {
  checkpoint: string;
  sourceCode: number[];
  targetCode: number[];
  boundary: number;
}): ApiRequest {
  return {
    method: "POST",
    path: "/mix",
    body: {
      checkpoint: p.checkpoint,
      source_code: p.sourceCode,
      target_code: p.targetCode,
      boundary: p.boundary,
    },
  };
}

export function editRequest(p: {
  checkpoint: string;
  code: number[];
  directionIndex: number;
  strength: number;
}): ApiRequest {
  return {
    method: "POST",
    path: "/edit",
    body: {
      checkpoint: p.checkpoint,
      code: p.code,
      direction_index: p.directionIndex,
      strength: p.strength,
      k: 4,
    },
  };
}

export function volumePath(volumeId: string): string {
  return `/volume/${volumeId}`;
}

/** One canonical line per request; the replay contract compares these. */
export function requestLine(req: ApiRequest): string {
  return req.body === undefined
    ? `${req.method} ${req.path}`
    : `${req.method} ${req.path} ${JSON.stringify(req.body)}`;
}

export interface Transport {
  send(req: ApiRequest): Promise<unknown>;
  bytes(path: string): Promise<Uint8Array>;
}

/** fetch-backed transport against a running service. */
export class HttpTransport implements Transport {
  constructor(readonly base: string) {}

  async send(req: ApiRequest): Promise<unknown> {
    const resp = await fetch(this.base + req.path, {
      method: req.method,
      headers: req.body === undefined ? undefined : { "content-type": "application/json" },
      body: req.body === undefined ? undefined : JSON.stringify(req.body),
    });
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const payload = (await resp.json()) as { detail?: string };
        if (payload.detail) detail = payload.detail;
      } catch {
        // non-JSON error body, keep the status code
      }
      throw new Error(detail);
    }
    return resp.json();
  }

  async bytes(path: string): Promise<Uint8Array> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) throw new Error(`${resp.status}`);
    return new Uint8Array(await resp.arrayBuffer());
  }
}
