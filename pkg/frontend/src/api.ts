/** Typed client for the verification service's JSON API. */

export interface TaskPayload {
  task_id: string;
  image_id: string;
  image_url: string;
  boxes: number[][];
}

export interface ProgressInfo {
  tasks: number;
  open: number;
  complete: number;
  verdicts: number;
  quorum: number;
  by_annotator: Record<string, number>;
}

export interface NextTaskResponse {
  task: TaskPayload | null;
  progress: ProgressInfo;
}

/** Non-2xx reply; status 0 means the request itself failed. */
export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function errorOf(resp: Response): Promise<ApiError> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.error === "string") detail = body.error;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(
    private base: string,
    private fetchFn: typeof fetch = fetch,
  ) {
    this.base = base.replace(/\/+$/, "");
  }

  private async get(path: string): Promise<unknown> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.base + path);
    } catch (err) {
      throw new ApiError(0, String(err));
    }
    if (!resp.ok) throw await errorOf(resp);
    return resp.json();
  }

  async nextTask(annotator: string): Promise<NextTaskResponse> {
    const query = new URLSearchParams({ annotator });
    return (await this.get(`/api/tasks/next?${query}`)) as NextTaskResponse;
  }

  async progress(): Promise<ProgressInfo> {
    return (await this.get("/api/progress")) as ProgressInfo;
  }

  async submitVerdict(
    taskId: string,
    annotator: string,
    decisions: boolean[],
  ): Promise<{ task_id: string; state: string }> {
    let resp: Response;
    try {
      resp = await this.fetchFn(
        `${this.base}/api/tasks/${encodeURIComponent(taskId)}/verdict`,
        {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: JSON.stringify({ annotator, decisions }),
        },
      );
    } catch (err) {
      throw new ApiError(0, String(err));
    }
    if (!resp.ok) throw await errorOf(resp);
    return resp.json();
  }

  /** Absolute URL for a task's image (image_url comes back server-relative). */
  imageUrl(task: TaskPayload): string {
    return this.base + task.image_url;
  }
}
