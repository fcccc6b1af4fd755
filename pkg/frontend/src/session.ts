/** Annotation session state machine.
 *
 * Owns everything the view renders: the current task, per-box decisions,
 * keyboard selection, progress counters, and the error states. One in-flight
 * task per session; a verdict submit immediately chains into loading the
 * next task. No DOM in here, which is what makes the scripted-session tests
 * possible.
 */

import { ApiClient, ApiError, ProgressInfo, TaskPayload } from "./api.js";

export type Decision = "accept" | "reject" | null;

export type Phase =
  | "login"
  | "loading"
  | "judging"
  | "submitting"
  | "done"
  | "net-error"
  | "image-error";

export interface Size {
  width: number;
  height: number;
}

/** Resolves to the image's native size, rejects when it cannot be shown. */
export type ImageLoader = (url: string) => Promise<Size>;

export interface SessionState {
  phase: Phase;
  annotator: string;
  task: TaskPayload | null;
  imageSize: Size | null;
  decisions: Decision[];
  selected: number;
  overlaysVisible: boolean;
  progress: ProgressInfo | null;
  judged: number;
  notice: string;
  errorDetail: string;
  highlightUndecided: boolean;
}

export class Session {
  state: SessionState = {
    phase: "login",
    annotator: "",
    task: null,
    imageSize: null,
    decisions: [],
    selected: 0,
    overlaysVisible: true,
    progress: null,
    judged: 0,
    notice: "",
    errorDetail: "",
    highlightUndecided: false,
  };

  private listeners: Array<() => void> = [];
  private pendingRetry: "load" | "submit" | null = null;

  constructor(
    private api: ApiClient,
    private loadImage: ImageLoader,
  ) {}

  onChange(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const l of [...this.listeners]) l();
  }

  private set(patch: Partial<SessionState>): void {
    Object.assign(this.state, patch);
    this.emit();
  }

  async start(annotator: string): Promise<void> {
    const name = annotator.trim();
    if (!name) {
      this.set({ notice: "enter an annotator id" });
      return;
    }
    this.state.annotator = name;
    await this.loadNext();
  }

  async loadNext(): Promise<void> {
    this.set({ phase: "loading", notice: "", errorDetail: "", highlightUndecided: false });
    let next;
    try {
      next = await this.api.nextTask(this.state.annotator);
    } catch (err) {
      this.pendingRetry = "load";
      this.set({ phase: "net-error", errorDetail: String((err as Error).message) });
      return;
    }
    this.state.progress = next.progress;
    if (next.task === null) {
      this.set({ phase: "done", task: null, imageSize: null, decisions: [] });
      return;
    }
    this.state.task = next.task;
    this.state.decisions = next.task.boxes.map(() => null);
    this.state.selected = 0;
    try {
      this.state.imageSize = await this.loadImage(this.api.imageUrl(next.task));
    } catch (err) {
      this.set({ phase: "image-error", imageSize: null, errorDetail: String((err as Error).message ?? err) });
      return;
    }
    this.set({ phase: "judging" });
  }

  select(index: number): void {
    if (this.state.phase !== "judging" || !this.state.task) return;
    if (index < 0 || index >= this.state.task.boxes.length) return;
    this.set({ selected: index });
  }

  decide(index: number, accept: boolean): void {
    if (this.state.phase !== "judging" || !this.state.task) return;
    if (index < 0 || index >= this.state.decisions.length) return;
    this.state.decisions[index] = accept ? "accept" : "reject";
    // move the cursor to the next box still waiting on a decision
    const n = this.state.decisions.length;
    let selected = this.state.selected;
    for (let step = 1; step <= n; step++) {
      const candidate = (index + step) % n;
      if (this.state.decisions[candidate] === null) {
        selected = candidate;
        break;
      }
    }
    this.set({ selected, highlightUndecided: false });
  }

  toggleOverlays(): void {
    if (!this.state.task) return;
    this.set({ overlaysVisible: !this.state.overlaysVisible });
  }

  async submit(): Promise<void> {
    if (this.state.phase !== "judging" || !this.state.task) return;
    if (this.state.decisions.some((d) => d === null)) {
      this.set({ highlightUndecided: true, notice: "every box needs a decision" });
      return;
    }
    const task = this.state.task;
    const decisions = this.state.decisions.map((d) => d === "accept");
    this.set({ phase: "submitting" });
    try {
      await this.api.submitVerdict(task.task_id, this.state.annotator, decisions);
    } catch (err) {
      const apiErr = err as ApiError;
      if (apiErr.status === 409) {
        // someone else (or an earlier session) already judged it; move on
        await this.loadNext();
        this.set({ notice: "task was already judged; skipping ahead" });
        return;
      }
      this.pendingRetry = "submit";
      this.set({ phase: "net-error", errorDetail: String(apiErr.message) });
      return;
    }
    this.state.judged += 1;
    await this.loadNext();
  }

  /** Leave a task whose image cannot be shown; the server keeps it open. */
  async skip(): Promise<void> {
    if (this.state.phase !== "image-error") return;
    await this.loadNext();
  }

  async retry(): Promise<void> {
    if (this.state.phase !== "net-error") return;
    const action = this.pendingRetry;
    this.pendingRetry = null;
    if (action === "submit" && this.state.task) {
      // replay the exact same verdict; decisions were never cleared
      this.set({ phase: "judging" });
      await this.submit();
    } else {
      await this.loadNext();
    }
  }

  /** Keyboard entry point. Returns whether the key meant something here. */
  handleKey(key: string): boolean {
    const { phase } = this.state;
    if (phase === "judging") {
      if (key >= "1" && key <= "9") {
        this.select(Number(key) - 1);
        return true;
      }
      if (key === "y" || key === "Y") {
        this.decide(this.state.selected, true);
        return true;
      }
      if (key === "n" || key === "N") {
        this.decide(this.state.selected, false);
        return true;
      }
      if (key === "o" || key === "O") {
        this.toggleOverlays();
        return true;
      }
      if (key === "Enter") {
        void this.submit();
        return true;
      }
      return false;
    }
    if (phase === "image-error" && (key === "s" || key === "S")) {
      void this.skip();
      return true;
    }
    if (phase === "net-error" && (key === "r" || key === "R" || key === "Enter")) {
      void this.retry();
      return true;
    }
    return false;
  }
}
