/** Browser entry point: wire the api client, session, and view together. */

import { ApiClient } from "./api.js";
import { Session, ImageLoader } from "./session.js";
import { View } from "./view.js";

const browserImageLoader: ImageLoader = (url) =>
  new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve({ width: img.naturalWidth, height: img.naturalHeight });
    img.onerror = () => reject(new Error("image failed to load"));
    img.src = url;
  });

function serverBase(): string {
  const param = new URLSearchParams(window.location.search).get("server");
  return param ?? "";
}

const api = new ApiClient(serverBase());
const session = new Session(api, browserImageLoader);
const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");
new View(root, session, api);
