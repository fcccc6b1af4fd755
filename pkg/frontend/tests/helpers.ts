/** Shared pieces for the UI tests. */

import { ImageLoader } from "../src/session.js";
import { FixtureTask } from "./fixture_server.js";

/** Poll until cond() holds; fail loudly with `what` if it never does. */
export async function until(cond: () => boolean, what: string, ms = 5000): Promise<void> {
  const start = Date.now();
  while (!cond()) {
    if (Date.now() - start > ms) throw new Error(`timed out waiting for ${what}`);
    await new Promise((resolve) => setTimeout(resolve, 5));
  }
}

/** Image loader that really fetches the bytes, then reports a fixed native
 * size (the fixture image is a placeholder; geometry in tests assumes
 * 640x480). A non-2xx image response rejects, like a broken <img> would. */
export const fetchImageSize: ImageLoader = async (url) => {
  const resp = await fetch(url);
  if (!resp.ok) throw new Error(`image request returned ${resp.status}`);
  await resp.arrayBuffer();
  return { width: 640, height: 480 };
};

/** n tasks cycling through 1..4 boxes each, all inside a 640x480 frame. */
export function makeTasks(n: number): FixtureTask[] {
  const tasks: FixtureTask[] = [];
  for (let i = 0; i < n; i++) {
    const count = (i % 4) + 1;
    const boxes: number[][] = [];
    for (let b = 0; b < count; b++) {
      boxes.push([40 + 90 * b, 60 + 35 * b, 22 + 3 * b, 14 + 2 * b]);
    }
    tasks.push({
      task_id: `t-${String(i).padStart(3, "0")}`,
      image_id: `img-${String(i).padStart(3, "0")}`,
      boxes,
    });
  }
  return tasks;
}
