/**
 * HTML renderers: pure functions from state to markup strings, so the
 * contract tests can assert on rendered output without a browser.
 */

import type { RunDoc } from "./api.js";
import type { AppState } from "./controller.js";
import type { UiSessionView } from "./state.js";
import { buildScatterSvg, renderClusterDetail, renderLegend } from "./scatter.js";

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderError(state: AppState): string {
  const error = state.error;
  if (!error) return "";
  const cap = error.sizeCap != null ? `<p class="cap">limit: ${error.sizeCap} bytes</p>` : "";
  const attempts = error.attempts != null ? `<p class="attempts">attempts: ${error.attempts}</p>` : "";
  const stderr = error.stderr
    ? `<pre class="stderr">${escapeHtml(error.stderr)}</pre>`
    : "";
  const retry = error.retryable ? '<button data-action="retry">Retry</button>' : "";
  return (
    `<div class="toast error" data-code="${escapeHtml(error.code)}">` +
    `<strong>${escapeHtml(error.code)}</strong> ${escapeHtml(error.message)}` +
    `${cap}${attempts}${stderr}${retry}</div>`
  );
}

export function renderUpload(state: AppState): string {
  const busy = state.busyLabel
    ? `<p class="progress" role="status">${escapeHtml(state.busyLabel)}&hellip;</p>`
    : "";
  return (
    `<section class="upload">` +
    `<h2>Upload a chart</h2>` +
    `<input type="file" id="chart-file" accept="image/png,image/jpeg"` +
    `${state.busyLabel ? " disabled" : ""} />` +
    `${busy}${renderError(state)}</section>`
  );
}

function badge(status: string): string {
  return `<span class="badge badge-${status.toLowerCase()}">${status}</span>`;
}

function renderRecommendations(view: UiSessionView, state: AppState): string {
  const rounds = view.rounds
    .map((round) => {
      const groups = round.groups
        .map((group) => {
          const items = group.recs
            .map((rec) => {
              const checkable = rec.status === "PROPOSED" || rec.status === "SELECTED";
              const checked = state.selected.has(rec.id) ? " checked" : "";
              const disabled = checkable && !state.busyLabel ? "" : " disabled";
              const category = rec.category
                ? `<span class="tag">${escapeHtml(rec.category)}</span>`
                : "";
              return (
                `<li class="rec" data-id="${rec.id}" data-status="${rec.status}">` +
                `<label><input type="checkbox" data-rec="${rec.id}"${checked}${disabled} /> ` +
                `${escapeHtml(rec.text)}</label> ${badge(rec.status)}${category}</li>`
              );
            })
            .join("");
          const label = group.label ? `<h4 class="group">${escapeHtml(group.label)}</h4>` : "";
          return `${label}<ul class="recs">${items}</ul>`;
        })
        .join("");
      return `<section class="round" data-round="${round.round}">` +
        `<h3>Round ${round.round}</h3>${groups}</section>`;
    })
    .join("");
  return rounds || "<p>No recommendations parsed.</p>";
}

function renderGallery(view: UiSessionView): string {
  const thumbs = view.revisions
    .map((rev) => {
      const img = rev.imageUrl
        ? `<img src="${rev.imageUrl}" alt="revision ${rev.index}" />`
        : `<div class="unrendered">${escapeHtml(rev.renderStatus ?? "UNRENDERED")}</div>`;
      const applied = rev.appliedIds.length
        ? `<small>${rev.appliedIds.length} applied</small>`
        : "<small>initial</small>";
      return `<figure class="thumb" data-revision="${rev.index}">${img}` +
        `<figcaption>rev ${rev.index} ${applied}</figcaption></figure>`;
    })
    .join("");
  return `<div class="gallery">${thumbs}</div>`;
}

function renderCompare(state: AppState): string {
  const compare = state.compare;
  if (!compare) return "";
  const before = compare.beforeUrl
    ? `<img class="before" src="${compare.beforeUrl}" alt="before" />`
    : '<div class="unrendered">no previous render</div>';
  const after = compare.afterUrl
    ? `<img class="after" src="${compare.afterUrl}" alt="after" />`
    : '<div class="unrendered">render unavailable</div>';
  return (
    `<section class="compare" data-revision="${compare.revision}">` +
    `<h3>Revision ${compare.revision}</h3>` +
    `<div class="pair"><figure>${before}<figcaption>before</figcaption></figure>` +
    `<figure>${after}<figcaption>after</figcaption></figure></div>` +
    `<button data-action="reanalyze">Re-analyze</button></section>`
  );
}

export function renderSession(state: AppState): string {
  const view = state.session;
  if (!view) return renderUpload(state);
  const applyDisabled = state.selected.size === 0 || state.busyLabel ? " disabled" : "";
  const busy = state.busyLabel
    ? `<p class="progress" role="status">${escapeHtml(state.busyLabel)}&hellip;</p>`
    : "";
  return (
    `<section class="session" data-state="${escapeHtml(view.state)}">` +
    `<header><h2>Session ${view.id.slice(0, 8)}</h2>` +
    `<span class="state">${escapeHtml(view.state)}</span></header>` +
    renderError(state) +
    busy +
    renderGallery(view) +
    renderCompare(state) +
    renderRecommendations(view, state) +
    `<footer><button data-action="apply"${applyDisabled}>Apply selected ` +
    `(${state.selected.size})</button>` +
    `<button data-action="reanalyze"${state.busyLabel ? " disabled" : ""}>Re-analyze</button>` +
    `</footer></section>`
  );
}

export function renderApp(state: AppState): string {
  return state.phase === "session" ? renderSession(state) : renderUpload(state);
}

export function renderExplorer(run: RunDoc | null, selectedCluster: number | null = null): string {
  if (!run) {
    return `<section class="explorer empty"><p>No analytics run loaded.</p></section>`;
  }
  if (run.state === "FAILED") {
    return (
      `<section class="explorer failed"><p class="toast error">run failed: ` +
      `${escapeHtml(run.error ?? "unknown")}</p></section>`
    );
  }
  if (run.state !== "DONE" || !run.report) {
    const pct = Math.round(run.progress * 100);
    return (
      `<section class="explorer pending"><progress max="100" value="${pct}"></progress>` +
      `<p role="status">${run.state.toLowerCase()} ${pct}%</p></section>`
    );
  }
  const detail = selectedCluster != null ? renderClusterDetail(run.report, selectedCluster) : "";
  return (
    `<section class="explorer done" data-k="${run.report.clusters.selected_k}">` +
    `<h2>Recommendation manifold (k=${run.report.clusters.selected_k}, ` +
    `DB ${run.report.clusters.db_score.toFixed(3)})</h2>` +
    buildScatterSvg(run.report.projection) +
    renderLegend(run.report) +
    detail +
    `</section>`
  );
}
