/**
 * SVG scatter of the recommendation manifold, colored by cluster.
 * Pure string builder so it can be contract-tested without a DOM.
 */

import type { RunPoint, RunReport } from "./api.js";

// tab10 + tab20 extension
export const CLUSTER_PALETTE = [
  "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
  "#aec7e8", "#ffbb78", "#98df8a", "#ff9896", "#c5b0d5",
  "#c49c94", "#f7b6d2", "#c7c7c7", "#dbdb8d", "#9edae5",
];

export function clusterColor(cluster: number): string {
  return CLUSTER_PALETTE[cluster % CLUSTER_PALETTE.length];
}

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export interface ScatterOptions {
  width?: number;
  height?: number;
  pointRadius?: number;
}

export function buildScatterSvg(points: RunPoint[], options: ScatterOptions = {}): string {
  const width = options.width ?? 640;
  const height = options.height ?? 480;
  const radius = options.pointRadius ?? 3;
  const pad = 18;

  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const xSpan = xMax - xMin || 1;
  const ySpan = yMax - yMin || 1;

  const clusters = [...new Set(points.map((p) => p.cluster))].sort((a, b) => a - b);
  const groups = clusters.map((cluster) => {
    const circles = points
      .filter((p) => p.cluster === cluster)
      .map((p) => {
        const cx = pad + ((p.x - xMin) / xSpan) * (width - 2 * pad);
        const cy = height - pad - ((p.y - yMin) / ySpan) * (height - 2 * pad);
        const title = escapeXml(p.text || p.id);
        return (
          `<circle cx="${cx.toFixed(1)}" cy="${cy.toFixed(1)}" r="${radius}" ` +
          `data-id="${escapeXml(p.id)}"><title>${title}</title></circle>`
        );
      })
      .join("");
    return (
      `<g class="cluster" data-cluster="${cluster}" fill="${clusterColor(cluster)}" ` +
      `fill-opacity="0.75">${circles}</g>`
    );
  });

  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
    `class="scatter" role="img">${groups.join("")}</svg>`
  );
}

export function renderLegend(report: RunReport): string {
  const items = report.clusters.clusters
    .map(
      (c) =>
        `<li class="legend-item" data-cluster="${c.index}">` +
        `<span class="swatch" style="background:${clusterColor(c.index)}"></span>` +
        `cluster ${c.index} (${c.size})</li>`
    )
    .join("");
  return `<ul class="legend">${items}</ul>`;
}

export function renderClusterDetail(report: RunReport, cluster: number): string {
  const summary = report.clusters.clusters.find((c) => c.index === cluster);
  if (!summary) return "";
  const terms = summary.top_terms.map((t) => `<code>${escapeXml(t)}</code>`).join(" ");
  const medoids = summary.medoid_texts
    .map((t) => `<li>${escapeXml(t)}</li>`)
    .join("");
  return (
    `<div class="cluster-detail" data-cluster="${cluster}">` +
    `<h3>Cluster ${cluster} (${summary.size} recommendations)</h3>` +
    `<p class="terms">${terms}</p><ul class="medoids">${medoids}</ul></div>`
  );
}
