/** DOM layer: renders the session state, forwards clicks and keys back in.
 *
 * Deliberately dumb: every state change rebuilds the screen from scratch.
 * Tasks are a few boxes on one image, so there is nothing worth diffing.
 */

import { ApiClient } from "./api.js";
import { overlayLayout } from "./overlay.js";
import { Session } from "./session.js";

function el(tag: string, cls?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class View {
  private unsubscribe: () => void;
  private keyListener: (ev: KeyboardEvent) => void;
  private resizeListener: () => void;

  constructor(
    private root: HTMLElement,
    private session: Session,
    private api: ApiClient,
  ) {
    this.unsubscribe = session.onChange(() => this.render());
    this.keyListener = (ev) => {
      const target = ev.target as HTMLElement | null;
      if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
      if (this.session.handleKey(ev.key)) ev.preventDefault();
    };
    this.resizeListener = () => this.render();
    document.addEventListener("keydown", this.keyListener);
    window.addEventListener("resize", this.resizeListener);
    this.render();
  }

  destroy(): void {
    this.unsubscribe();
    document.removeEventListener("keydown", this.keyListener);
    window.removeEventListener("resize", this.resizeListener);
  }

  render(): void {
    const state = this.session.state;
    this.root.textContent = "";
    switch (state.phase) {
      case "login":
        this.root.appendChild(this.loginScreen());
        break;
      case "loading":
        this.root.appendChild(el("div", "screen muted", "loading ..."));
        break;
      case "judging":
      case "submitting":
        this.root.appendChild(this.taskScreen());
        break;
      case "image-error":
        this.root.appendChild(this.imageErrorCard());
        break;
      case "net-error":
        this.root.appendChild(this.netErrorBanner());
        break;
      case "done":
        this.root.appendChild(this.doneScreen());
        break;
    }
    if (state.notice) {
      this.root.appendChild(el("div", "toast", state.notice));
    }
  }

  private loginScreen(): HTMLElement {
    const screen = el("div", "screen login");
    screen.appendChild(el("h1", undefined, "detection review"));
    screen.appendChild(el("p", "muted", "judge each outlined detection: camera or not."));
    const input = el("input") as HTMLInputElement;
    input.placeholder = "annotator id";
    input.value = window.localStorage.getItem("verify-ui.annotator") ?? "";
    const button = el("button", "primary", "start") as HTMLButtonElement;
    const start = () => {
      window.localStorage.setItem("verify-ui.annotator", input.value.trim());
      void this.session.start(input.value);
    };
    button.addEventListener("click", start);
    input.addEventListener("keydown", (ev) => {
      if (ev.key === "Enter") start();
    });
    screen.appendChild(input);
    screen.appendChild(button);
    return screen;
  }

  private header(): HTMLElement {
    const state = this.session.state;
    const head = el("header");
    head.appendChild(el("span", "who", state.annotator));
    head.appendChild(el("span", "muted", `judged ${state.judged} this session`));
    if (state.progress) {
      const p = state.progress;
      head.appendChild(el("span", "muted", `${p.complete}/${p.tasks} tasks complete`));
    }
    return head;
  }

  private taskScreen(): HTMLElement {
    const state = this.session.state;
    const task = state.task!;
    const natural = state.imageSize!;
    const screen = el("div", "screen task");
    screen.appendChild(this.header());

    const stage = el("div", "stage");
    const avail = this.root.clientWidth || natural.width;
    const scale = Math.min(1, avail / natural.width);
    const display = { width: natural.width * scale, height: natural.height * scale };
    stage.style.width = `${display.width}px`;
    stage.style.height = `${display.height}px`;

    const img = el("img") as HTMLImageElement;
    img.src = this.api.imageUrl(task);
    img.width = display.width;
    img.height = display.height;
    img.alt = task.image_id;
    stage.appendChild(img);

    if (state.overlaysVisible) {
      for (const layout of overlayLayout(task.boxes, natural, display)) {
        const decision = state.decisions[layout.index];
        const classes = ["box"];
        if (layout.index === state.selected) classes.push("selected");
        if (decision === "accept") classes.push("accepted");
        if (decision === "reject") classes.push("rejected");
        if (decision === null && state.highlightUndecided) classes.push("undecided");
        const outline = el("div", classes.join(" "));
        outline.style.left = `${layout.left}px`;
        outline.style.top = `${layout.top}px`;
        outline.style.width = `${layout.width}px`;
        outline.style.height = `${layout.height}px`;
        outline.appendChild(el("span", "tag", String(layout.index + 1)));
        stage.appendChild(outline);

        const hit = el("div", "hit");
        hit.style.left = `${layout.hitLeft}px`;
        hit.style.top = `${layout.hitTop}px`;
        hit.style.width = `${layout.hitWidth}px`;
        hit.style.height = `${layout.hitHeight}px`;
        hit.addEventListener("click", () => this.session.select(layout.index));
        stage.appendChild(hit);
      }
    }
    screen.appendChild(stage);
    screen.appendChild(this.decisionPanel());

    const hints = el("footer", "muted");
    hints.textContent = "1-9 select box · y camera · n not a camera · o toggle boxes · enter submit";
    screen.appendChild(hints);
    return screen;
  }

  private decisionPanel(): HTMLElement {
    const state = this.session.state;
    const panel = el("div", "panel");
    state.decisions.forEach((decision, i) => {
      const classes = ["chip"];
      if (i === state.selected) classes.push("selected");
      if (decision === null && state.highlightUndecided) classes.push("undecided");
      const chip = el("button", classes.join(" ")) as HTMLButtonElement;
      chip.appendChild(el("b", undefined, String(i + 1)));
      chip.appendChild(
        el("span", undefined, decision === null ? "?" : decision === "accept" ? "camera" : "no"),
      );
      chip.addEventListener("click", () => this.session.select(i));
      panel.appendChild(chip);
    });
    const submit = el("button", "primary submit", "submit") as HTMLButtonElement;
    submit.disabled =
      state.phase !== "judging" || state.decisions.some((d) => d === null);
    submit.addEventListener("click", () => void this.session.submit());
    panel.appendChild(submit);
    return panel;
  }

  private imageErrorCard(): HTMLElement {
    const state = this.session.state;
    const screen = el("div", "screen card");
    screen.appendChild(this.header());
    screen.appendChild(el("h2", undefined, "image unavailable"));
    screen.appendChild(
      el("p", "muted", `${state.task?.image_id ?? "task"}: ${state.errorDetail}`),
    );
    const skip = el("button", "primary", "skip this task (s)") as HTMLButtonElement;
    skip.addEventListener("click", () => void this.session.skip());
    screen.appendChild(skip);
    return screen;
  }

  private netErrorBanner(): HTMLElement {
    const state = this.session.state;
    const screen = el("div", "screen card");
    screen.appendChild(el("h2", undefined, "server unreachable"));
    screen.appendChild(el("p", "muted", state.errorDetail));
    screen.appendChild(el("p", "muted", "nothing was lost; your decisions are still here."));
    const retry = el("button", "primary", "retry (r)") as HTMLButtonElement;
    retry.addEventListener("click", () => void this.session.retry());
    screen.appendChild(retry);
    return screen;
  }

  private doneScreen(): HTMLElement {
    const state = this.session.state;
    const screen = el("div", "screen card");
    screen.appendChild(el("h2", undefined, "all caught up"));
    screen.appendChild(el("p", undefined, `you judged ${state.judged} tasks this session.`));
    if (state.progress) {
      const p = state.progress;
      screen.appendChild(
        el("p", "muted", `${p.complete} of ${p.tasks} tasks complete overall; ${p.verdicts} verdicts in total.`),
      );
    }
    return screen;
  }
}
