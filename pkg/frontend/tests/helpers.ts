/** Scripted fetch stub and payload fixtures for the contract suite. */

import type { FetchLike } from "../src/api.js";

export interface Route {
  method: string;
  path: string;
  reply: () => [number, unknown];
  once?: boolean;
}

export function stubFetch(routes: Route[]): FetchLike & { calls: string[] } {
  const remaining = [...routes];
  const fn = (async (input: string, init?: RequestInit) => {
    const method = (init?.method ?? "GET").toUpperCase();
    fn.calls.push(`${method} ${input}`);
    const index = remaining.findIndex((r) => r.method === method && input.endsWith(r.path));
    if (index < 0) {
      throw new Error(`no stubbed route for ${method} ${input}`);
    }
    const route = remaining[index];
    if (route.once !== false) remaining.splice(index, 1);
    const [status, body] = route.reply();
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }) as FetchLike & { calls: string[] };
  fn.calls = [];
  return fn;
}

export function rec(id: string, text: string, status = "PROPOSED", round = 0, category: string | null = null) {
  return { id, round, text, status, category };
}

export function revision(index: number, opts: { rendered?: boolean; applied?: string[]; sessionId?: string } = {}) {
  const rendered = opts.rendered ?? true;
  const sessionId = opts.sessionId ?? "s1";
  return {
    index,
    spec: { source: "plt.plot([1])", origin: index ? "EDITED" : "DERENDERED", validated: rendered },
    applied_recommendation_ids: opts.applied ?? [],
    render: rendered
      ? { status: "SUCCESS", stderr_excerpt: "", duration_ms: 10, image: { sha256: "x".repeat(64) } }
      : { status: "CODE_ERROR", stderr_excerpt: "Boom", duration_ms: 10, image: null },
    created_at: "2025-01-01T00:00:00+00:00",
    ...(rendered
      ? { image_url: `/api/v1/sessions/${sessionId}/revisions/${index}/image` }
      : {}),
  };
}

export function sessionDoc(recs: unknown[], revisions: unknown[], state = "ANALYZED") {
  return {
    schema_version: 1,
    id: "s1",
    state,
    backend_config_snapshot: {},
    image: { id: "img", format: "PNG", width_px: 64, height_px: 48, sha256: "y".repeat(64) },
    recommendations: recs,
    revisions,
  };
}

export function runReport(k: number, pointsPerCluster = 10) {
  const projection = [];
  const clusters = [];
  for (let c = 0; c < k; c++) {
    clusters.push({
      index: c,
      size: pointsPerCluster,
      top_terms: [`term${c}a`, `term${c}b`],
      medoid_ids: [`p${c}-0`],
      medoid_texts: [`representative critique for cluster ${c}`],
    });
    for (let i = 0; i < pointsPerCluster; i++) {
      projection.push({
        id: `p${c}-${i}`,
        x: c * 10 + Math.cos(i),
        y: c * 5 + Math.sin(i),
        cluster: c,
        text: `critique ${c}-${i}`,
      });
    }
  }
  return {
    clusters: {
      schema_version: 1,
      selected_k: k,
      db_score: 0.61,
      seed: 0,
      total: k * pointsPerCluster,
      db_curve: [[2, 1.4], [k, 0.61]],
      assignments: {},
      clusters,
    },
    projection,
  };
}
