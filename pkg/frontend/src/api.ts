// Thin typed client for the review API. All state lives on the server;
// this module only shapes requests and decodes responses.

import type {
  LabelEventJson,
  LabelValue,
  ProgressJson,
  QueueJson,
  ScriptDetailJson,
  SubmitAck,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

export interface SubmitResult {
  ok: boolean;
  status: number;
  ack?: SubmitAck;
  error?: string;
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + path);
    } catch (err) {
      throw new ApiError(`cannot reach review API: ${String(err)}`);
    }
    if (!resp.ok) {
      throw new ApiError(`GET ${path} failed with ${resp.status}`, resp.status);
    }
    return (await resp.json()) as T;
  }

  progress(): Promise<ProgressJson> {
    return this.getJson("/api/progress");
  }

  queueNext(waitSeconds = 0): Promise<QueueJson> {
    const query = waitSeconds > 0 ? `?wait=${waitSeconds}` : "";
    return this.getJson(`/api/queue/next${query}`);
  }

  script(scriptId: string): Promise<ScriptDetailJson> {
    return this.getJson(`/api/scripts/${encodeURIComponent(scriptId)}`);
  }

  async labels(): Promise<LabelEventJson[]> {
    const body = await this.getJson<{ events: LabelEventJson[] }>("/api/labels");
    return body.events;
  }

  async submitLabel(
    scriptId: string,
    label: LabelValue,
    privacyPolicyChecked: boolean,
  ): Promise<SubmitResult> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + "/api/labels", {
        method: "POST",
        headers: { "Content-Type": "application/json; charset=utf-8" },
        body: JSON.stringify({
          script_id: scriptId,
          label,
          privacy_policy_checked: privacyPolicyChecked,
        }),
      });
    } catch (err) {
      throw new ApiError(`cannot reach review API: ${String(err)}`);
    }
    if (resp.ok) {
      return { ok: true, status: resp.status, ack: (await resp.json()) as SubmitAck };
    }
    let message = `submit failed with ${resp.status}`;
    try {
      const body = (await resp.json()) as { error?: string };
      if (body.error) message = body.error;
    } catch {
      // non-JSON error body; keep the generic message
    }
    return { ok: false, status: resp.status, error: message };
  }
}
