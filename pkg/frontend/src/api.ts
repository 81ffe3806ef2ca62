/** Thin client for the annotation service HTTP/JSON API. */

export type Choice = "First" | "Second" | "Both" | "Neither";

export interface Progress {
  pending: number;
  assigned: number;
  done: number;
  total: number;
  per_annotator: Record<string, number>;
}

export interface TaskView {
  task_id: string;
  image_ref: string;
  caption: string;
  question: string;
  answer_a: string;
  answer_b: string;
  progress: Progress;
}

export interface ClientConfig {
  baseUrl: string;
  annotator: string;
  token?: string;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** Lease conflict (409): someone else holds the task or the lease expired. */
export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private cfg: ClientConfig,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["Content-Type"] = "application/json";
    if (this.cfg.token) h["X-Annotator-Token"] = this.cfg.token;
    return h;
  }

  private url(path: string): string {
    return this.cfg.baseUrl.replace(/\/$/, "") + path;
  }

  /** Leases the next pending task; null when the queue is drained (204). */
  async fetchNext(): Promise<TaskView | null> {
    const resp = await this.fetchImpl(
      this.url(`/tasks/next?annotator=${encodeURIComponent(this.cfg.annotator)}`),
      { headers: this.headers() },
    );
    if (resp.status === 204) return null;
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as TaskView;
  }

  async submit(taskId: string, choice: Choice): Promise<void> {
    const resp = await this.fetchImpl(
      this.url(`/tasks/${encodeURIComponent(taskId)}/annotation`),
      {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify({ choice, annotator: this.cfg.annotator }),
      },
    );
    if (resp.status === 409) throw new ConflictError(await resp.text());
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
  }

  async progress(): Promise<Progress> {
    const resp = await this.fetchImpl(this.url("/progress"), {
      headers: this.headers(),
    });
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as Progress;
  }
}

/** Loads {baseUrl, annotator, token?} served next to the app bundle. */
export async function loadConfig(
  url = "./config.json",
  fetchImpl: FetchLike = fetch,
): Promise<ClientConfig> {
  const resp = await fetchImpl(url);
  if (!resp.ok) throw new ApiError(resp.status, `cannot load ${url}`);
  const cfg = (await resp.json()) as Partial<ClientConfig>;
  if (!cfg.baseUrl || !cfg.annotator) {
    throw new Error("config.json must provide baseUrl and annotator");
  }
  return cfg as ClientConfig;
}
