import { Api } from "./api.js";
import { mountApp, mountExplorer } from "./app.js";

const api = new Api("");
const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const params = new URLSearchParams(window.location.search);
const runId = params.get("run");
if (runId) {
  mountExplorer(root, api, runId);
} else {
  mountApp(root, api);
}
