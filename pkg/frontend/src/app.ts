/**
 * DOM wiring: one root element re-rendered from controller state, with
 * event delegation for checkboxes and action buttons. All logic lives in
 * the controller/views, which the contract suite tests headlessly.
 */

import { Api, RunDoc } from "./api.js";
import { AppController } from "./controller.js";
import { renderApp, renderExplorer } from "./views.js";

export function mountApp(root: HTMLElement, api: Api = new Api()): AppController {
  const controller = new AppController(api, (state) => {
    root.innerHTML = renderApp(state);
  });
  root.innerHTML = renderApp(controller.state);

  root.addEventListener("change", (event) => {
    const target = event.target as HTMLElement;
    if (target instanceof HTMLInputElement && target.type === "file" && target.files?.[0]) {
      const file = target.files[0];
      void controller.upload(file, file.name);
    } else if (target instanceof HTMLInputElement && target.dataset.rec) {
      controller.toggle(target.dataset.rec);
    }
  });

  root.addEventListener("click", (event) => {
    const target = (event.target as HTMLElement).closest("[data-action]");
    if (!(target instanceof HTMLElement)) return;
    if (target.hasAttribute("disabled")) return;
    switch (target.dataset.action) {
      case "apply":
        void controller.applySelected();
        break;
      case "reanalyze":
      case "retry":
        void controller.reanalyze();
        break;
    }
  });

  return controller;
}

export function mountExplorer(root: HTMLElement, api: Api, runId: string): void {
  let run: RunDoc | null = null;
  let selectedCluster: number | null = null;

  const draw = () => {
    root.innerHTML = renderExplorer(run, selectedCluster);
  };

  root.addEventListener("click", (event) => {
    const item = (event.target as HTMLElement).closest("[data-cluster]");
    if (item instanceof HTMLElement && item.dataset.cluster != null) {
      selectedCluster = Number(item.dataset.cluster);
      draw();
    }
  });

  const poll = async () => {
    try {
      run = await api.getRun(runId);
    } catch (failure) {
      run = { run_id: runId, state: "FAILED", progress: 0, error: String(failure) };
    }
    draw();
    if (run && (run.state === "QUEUED" || run.state === "RUNNING")) {
      setTimeout(() => void poll(), 750);
    }
  };
  void poll();
}
