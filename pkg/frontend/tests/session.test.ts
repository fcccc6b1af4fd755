import { describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { Session } from "../src/session.js";
import { FixtureTask, FixtureVerifyServer } from "./fixture_server.js";
import { fetchImageSize, makeTasks } from "./helpers.js";

async function withServer(
  tasks: FixtureTask[],
  opts: { quorum?: number; missingImages?: string[] },
  fn: (server: FixtureVerifyServer, session: Session) => Promise<void>,
): Promise<void> {
  const server = new FixtureVerifyServer(tasks, opts);
  const base = await server.start();
  const session = new Session(new ApiClient(base), fetchImageSize);
  try {
    await fn(server, session);
  } finally {
    await server.close();
  }
}

describe("session", () => {
  it("refuses to start without an annotator id", async () => {
    const session = new Session(new ApiClient("http://127.0.0.1:9"), fetchImageSize);
    await session.start("   ");
    expect(session.state.phase).toBe("login");
    expect(session.state.notice).toBe("enter an annotator id");
  });

  it("walks every open task and lands on done", async () => {
    await withServer(makeTasks(3), {}, async (server, session) => {
      await session.start("ana");
      while (session.state.phase === "judging") {
        const task = session.state.task!;
        expect(session.state.decisions).toHaveLength(task.boxes.length);
        task.boxes.forEach((_, i) => session.decide(i, i % 2 === 0));
        await session.submit();
      }
      expect(session.state.phase).toBe("done");
      expect(session.state.judged).toBe(3);
      expect(server.captured).toHaveLength(3);
      expect(session.state.progress?.verdicts).toBe(3);
    });
  });

  it("moves the cursor to the next undecided box, wrapping", async () => {
    await withServer(makeTasks(4).slice(3, 4), {}, async (_server, session) => {
      await session.start("ana");
      expect(session.state.task!.boxes).toHaveLength(4);
      session.select(2);
      session.decide(2, true);
      expect(session.state.selected).toBe(3);
      session.decide(3, false);
      expect(session.state.selected).toBe(0);
      session.select(9);
      expect(session.state.selected).toBe(0);
    });
  });

  it("blocks submit while any box is undecided", async () => {
    await withServer(makeTasks(2).slice(1, 2), {}, async (server, session) => {
      await session.start("ana");
      session.decide(0, true);
      await session.submit();
      expect(session.state.phase).toBe("judging");
      expect(session.state.highlightUndecided).toBe(true);
      expect(session.state.notice).toBe("every box needs a decision");
      expect(server.captured).toHaveLength(0);
      session.decide(1, false);
      await session.submit();
      expect(server.captured).toHaveLength(1);
      expect(server.captured[0].decisions).toEqual([true, false]);
    });
  });

  it("sends one verdict even when submit fires twice", async () => {
    await withServer(makeTasks(1), {}, async (server, session) => {
      await session.start("ana");
      session.decide(0, true);
      const first = session.submit();
      const second = session.submit();
      await Promise.all([first, second]);
      expect(server.captured).toHaveLength(1);
      expect(server.verdictCount()).toBe(1);
    });
  });

  it("skips ahead when the task was already judged elsewhere", async () => {
    await withServer(makeTasks(1), {}, async (server, session) => {
      await session.start("ana");
      const task = session.state.task!;
      // a parallel session beats us to it
      server.seedVerdict(task.task_id, "ana", task.boxes.map(() => true));
      task.boxes.forEach((_, i) => session.decide(i, false));
      await session.submit();
      expect(session.state.phase).toBe("done");
      expect(session.state.notice).toBe("task was already judged; skipping ahead");
      expect(server.captured).toHaveLength(0);
    });
  });

  it("reports a broken image and reloads on skip", async () => {
    const tasks = makeTasks(1);
    await withServer(tasks, { missingImages: [tasks[0].image_id] }, async (_server, session) => {
      await session.start("ana");
      expect(session.state.phase).toBe("image-error");
      expect(session.state.errorDetail).toContain("404");
      await session.skip();
      // the task is still open, so it comes straight back
      expect(session.state.phase).toBe("image-error");
      expect(session.state.task?.task_id).toBe(tasks[0].task_id);
    });
  });

  it("recovers from server failures on both load and submit", async () => {
    await withServer(makeTasks(1), {}, async (server, session) => {
      server.failNext(1);
      await session.start("ana");
      expect(session.state.phase).toBe("net-error");
      expect(session.state.errorDetail).toContain("injected failure");
      await session.retry();
      expect(session.state.phase).toBe("judging");

      session.decide(0, true);
      server.failNext(1);
      await session.submit();
      expect(session.state.phase).toBe("net-error");
      expect(session.state.decisions).toEqual(["accept"]);
      await session.retry();
      expect(server.captured).toHaveLength(1);
      expect(server.captured[0].decisions).toEqual([true]);
      expect(session.state.phase).toBe("done");
    });
  });

  it("surfaces an unreachable server as retryable", async () => {
    const session = new Session(new ApiClient("http://127.0.0.1:1"), fetchImageSize);
    await session.start("ana");
    expect(session.state.phase).toBe("net-error");
    expect(session.state.errorDetail).not.toBe("");
  });

  it("ignores keys that mean nothing in the current phase", async () => {
    await withServer(makeTasks(1), {}, async (_server, session) => {
      expect(session.handleKey("y")).toBe(false);
      expect(session.handleKey("Enter")).toBe(false);
      await session.start("ana");
      expect(session.handleKey("z")).toBe(false);
      expect(session.handleKey("s")).toBe(false);
      expect(session.handleKey("o")).toBe(true);
      expect(session.state.overlaysVisible).toBe(false);
      expect(session.handleKey("o")).toBe(true);
      expect(session.state.overlaysVisible).toBe(true);
    });
  });
});
