/** Entry point: token prompt, session open, wizard mount. */

import { AnnotationApi } from "./api.js";
import { localDrafts } from "./drafts.js";
import { DEFAULT_CONFIG, Wizard } from "./wizard.js";

const TOKEN_KEY = "revtraits.annotation.token";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app mount point");
  }
  let token = window.localStorage.getItem(TOKEN_KEY);
  if (!token) {
    token = window.prompt("Annotator token:") ?? "";
    window.localStorage.setItem(TOKEN_KEY, token);
  }
  const api = new AnnotationApi("", token);
  try {
    await api.openSession();
  } catch {
    window.localStorage.removeItem(TOKEN_KEY);
    root.textContent = "Invalid token. Reload to try again.";
    return;
  }
  const wizard = new Wizard(root, api, localDrafts(), DEFAULT_CONFIG);
  await wizard.sync();
}

void boot();
