/**
 * Typed client for the chart-refinery HTTP API.
 *
 * Every payload is validated before use: the backend is the source of
 * truth, and schema drift should explode in development rather than render
 * garbage. Non-2xx responses carry {code, message, detail} and surface as
 * ApiFailure.
 */

export interface ApiErrorBody {
  code: string;
  message: string;
  detail?: unknown;
}

export class ApiFailure extends Error {
  constructor(public status: number, public body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
    this.name = "ApiFailure";
  }
}

export class SchemaError extends Error {
  constructor(path: string, expected: string, got: unknown) {
    super(`payload schema drift at ${path}: expected ${expected}, got ${JSON.stringify(got)}`);
    this.name = "SchemaError";
  }
}

export interface SessionSummary {
  id: string;
  state: string;
}

export interface RecommendationDoc {
  id: string;
  round: number;
  text: string;
  status: "PROPOSED" | "SELECTED" | "APPLIED" | "DISMISSED";
  category: string | null;
}

export interface RenderDoc {
  status: string;
  stderr_excerpt: string;
}

export interface RevisionDoc {
  index: number;
  applied_recommendation_ids: string[];
  render: RenderDoc | null;
  image_url?: string;
}

export interface SessionDoc {
  id: string;
  state: string;
  recommendations: RecommendationDoc[];
  revisions: RevisionDoc[];
}

export interface AnalyzeResponse {
  id: string;
  state: string;
  recommendations: RecommendationDoc[];
}

export interface ApplyResponse {
  id: string;
  state: string;
  revision: number;
  render_status: string | null;
  applied_ids: string[];
}

export interface RunPoint {
  id: string;
  x: number;
  y: number;
  cluster: number;
  text: string;
}

export interface ClusterSummaryDoc {
  index: number;
  size: number;
  top_terms: string[];
  medoid_texts: string[];
}

export interface RunReport {
  clusters: {
    selected_k: number;
    db_score: number;
    db_curve: [number, number][];
    clusters: ClusterSummaryDoc[];
  };
  projection: RunPoint[];
}

export interface RunDoc {
  run_id: string;
  state: "QUEUED" | "RUNNING" | "DONE" | "FAILED";
  progress: number;
  report?: RunReport;
  error?: string;
}

// -- validators --------------------------------------------------------------

function isRecord(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null && !Array.isArray(x);
}

function need<T>(ok: boolean, path: string, expected: string, got: unknown): asserts ok {
  if (!ok) throw new SchemaError(path, expected, got);
}

function asString(x: unknown, path: string): string {
  need(typeof x === "string", path, "string", x);
  return x as string;
}

function asNumber(x: unknown, path: string): number {
  need(typeof x === "number" && Number.isFinite(x), path, "finite number", x);
  return x as number;
}

function asArray(x: unknown, path: string): unknown[] {
  need(Array.isArray(x), path, "array", x);
  return x as unknown[];
}

const REC_STATUSES = new Set(["PROPOSED", "SELECTED", "APPLIED", "DISMISSED"]);

export function validateRecommendation(x: unknown, path = "recommendation"): RecommendationDoc {
  need(isRecord(x), path, "object", x);
  const rec = x as Record<string, unknown>;
  const status = asString(rec.status, `${path}.status`);
  need(REC_STATUSES.has(status), `${path}.status`, "recommendation status", status);
  return {
    id: asString(rec.id, `${path}.id`),
    round: asNumber(rec.round, `${path}.round`),
    text: asString(rec.text, `${path}.text`),
    status: status as RecommendationDoc["status"],
    category: rec.category == null ? null : asString(rec.category, `${path}.category`),
  };
}

export function validateSession(x: unknown): SessionDoc {
  need(isRecord(x), "session", "object", x);
  const doc = x as Record<string, unknown>;
  const revisions = asArray(doc.revisions, "session.revisions").map((rev, i) => {
    need(isRecord(rev), `session.revisions[${i}]`, "object", rev);
    const r = rev as Record<string, unknown>;
    let render: RenderDoc | null = null;
    if (r.render != null) {
      need(isRecord(r.render), `session.revisions[${i}].render`, "object", r.render);
      const rd = r.render as Record<string, unknown>;
      render = {
        status: asString(rd.status, `session.revisions[${i}].render.status`),
        stderr_excerpt: asString(rd.stderr_excerpt ?? "", `session.revisions[${i}].render.stderr_excerpt`),
      };
    }
    return {
      index: asNumber(r.index, `session.revisions[${i}].index`),
      applied_recommendation_ids: asArray(
        r.applied_recommendation_ids ?? [], `session.revisions[${i}].applied_recommendation_ids`
      ).map((v, j) => asString(v, `session.revisions[${i}].applied_recommendation_ids[${j}]`)),
      render,
      image_url: r.image_url == null ? undefined : asString(r.image_url, `session.revisions[${i}].image_url`),
    };
  });
  return {
    id: asString(doc.id, "session.id"),
    state: asString(doc.state, "session.state"),
    recommendations: asArray(doc.recommendations, "session.recommendations").map((rec, i) =>
      validateRecommendation(rec, `session.recommendations[${i}]`)
    ),
    revisions,
  };
}

export function validateRun(x: unknown): RunDoc {
  need(isRecord(x), "run", "object", x);
  const doc = x as Record<string, unknown>;
  const state = asString(doc.state, "run.state");
  need(["QUEUED", "RUNNING", "DONE", "FAILED"].includes(state), "run.state", "run state", state);
  const progress = asNumber(doc.progress, "run.progress");
  need(progress >= 0 && progress <= 1, "run.progress", "fraction in [0,1]", progress);
  const run: RunDoc = {
    run_id: asString(doc.run_id, "run.run_id"),
    state: state as RunDoc["state"],
    progress,
  };
  if (doc.error != null) run.error = asString(doc.error, "run.error");
  if (doc.report != null) {
    need(isRecord(doc.report), "run.report", "object", doc.report);
    const rep = doc.report as Record<string, unknown>;
    need(isRecord(rep.clusters), "run.report.clusters", "object", rep.clusters);
    const clusters = rep.clusters as Record<string, unknown>;
    run.report = {
      clusters: {
        selected_k: asNumber(clusters.selected_k, "run.report.clusters.selected_k"),
        db_score: asNumber(clusters.db_score, "run.report.clusters.db_score"),
        db_curve: asArray(clusters.db_curve ?? [], "run.report.clusters.db_curve").map((pair, i) => {
          const arr = asArray(pair, `run.report.clusters.db_curve[${i}]`);
          return [asNumber(arr[0], "k"), asNumber(arr[1], "db")] as [number, number];
        }),
        clusters: asArray(clusters.clusters, "run.report.clusters.clusters").map((c, i) => {
          need(isRecord(c), `run.report.clusters.clusters[${i}]`, "object", c);
          const cl = c as Record<string, unknown>;
          return {
            index: asNumber(cl.index, "cluster.index"),
            size: asNumber(cl.size, "cluster.size"),
            top_terms: asArray(cl.top_terms ?? [], "cluster.top_terms").map((t, j) =>
              asString(t, `cluster.top_terms[${j}]`)
            ),
            medoid_texts: asArray(cl.medoid_texts ?? [], "cluster.medoid_texts").map((t, j) =>
              asString(t, `cluster.medoid_texts[${j}]`)
            ),
          };
        }),
      },
      projection: asArray(rep.projection, "run.report.projection").map((p, i) => {
        need(isRecord(p), `run.report.projection[${i}]`, "object", p);
        const pt = p as Record<string, unknown>;
        return {
          id: asString(pt.id, "point.id"),
          x: asNumber(pt.x, "point.x"),
          y: asNumber(pt.y, "point.y"),
          cluster: asNumber(pt.cluster, "point.cluster"),
          text: asString(pt.text ?? "", "point.text"),
        };
      }),
    };
  }
  return run;
}

// -- client -------------------------------------------------------------------

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function readError(response: Response): Promise<ApiErrorBody> {
  try {
    const body = (await response.json()) as Record<string, unknown>;
    return {
      code: typeof body.code === "string" ? body.code : "INTERNAL",
      message: typeof body.message === "string" ? body.message : response.statusText,
      detail: body.detail,
    };
  } catch {
    return { code: "INTERNAL", message: `HTTP ${response.status}` };
  }
}

export class Api {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init)
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw new ApiFailure(response.status, await readError(response));
    }
    return response.json();
  }

  async createSession(file: Blob, filename = "chart.png"): Promise<SessionSummary> {
    const form = new FormData();
    form.append("image", file, filename);
    const body = await this.request("/api/v1/sessions", { method: "POST", body: form });
    const record = body as Record<string, unknown>;
    return {
      id: asString(record.id, "summary.id"),
      state: asString(record.state, "summary.state"),
    };
  }

  async analyze(sessionId: string): Promise<AnalyzeResponse> {
    const body = await this.request(`/api/v1/sessions/${sessionId}/analyze`, { method: "POST" });
    const record = body as Record<string, unknown>;
    return {
      id: asString(record.id, "analyze.id"),
      state: asString(record.state, "analyze.state"),
      recommendations: asArray(record.recommendations, "analyze.recommendations").map((r, i) =>
        validateRecommendation(r, `analyze.recommendations[${i}]`)
      ),
    };
  }

  async apply(sessionId: string, recommendationIds: string[]): Promise<ApplyResponse> {
    const body = await this.request(`/api/v1/sessions/${sessionId}/apply`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ recommendation_ids: recommendationIds }),
    });
    const record = body as Record<string, unknown>;
    return {
      id: asString(record.id, "apply.id"),
      state: asString(record.state, "apply.state"),
      revision: asNumber(record.revision, "apply.revision"),
      render_status: record.render_status == null ? null : asString(record.render_status, "apply.render_status"),
      applied_ids: asArray(record.applied_ids ?? [], "apply.applied_ids").map((v, i) =>
        asString(v, `apply.applied_ids[${i}]`)
      ),
    };
  }

  async reanalyze(sessionId: string): Promise<AnalyzeResponse> {
    const body = await this.request(`/api/v1/sessions/${sessionId}/reanalyze`, { method: "POST" });
    const record = body as Record<string, unknown>;
    return {
      id: asString(record.id, "reanalyze.id"),
      state: asString(record.state, "reanalyze.state"),
      recommendations: asArray(record.recommendations, "reanalyze.recommendations").map((r, i) =>
        validateRecommendation(r, `reanalyze.recommendations[${i}]`)
      ),
    };
  }

  async getSession(sessionId: string): Promise<SessionDoc> {
    return validateSession(await this.request(`/api/v1/sessions/${sessionId}`));
  }

  async getRun(runId: string): Promise<RunDoc> {
    return validateRun(await this.request(`/api/v1/analytics/runs/${runId}`));
  }

  async startRun(body: Record<string, unknown>): Promise<string> {
    const doc = await this.request("/api/v1/analytics/runs", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return asString((doc as Record<string, unknown>).run_id, "run.run_id");
  }

  imageUrl(sessionId: string, revision: number): string {
    return `${this.baseUrl}/api/v1/sessions/${sessionId}/revisions/${revision}/image`;
  }
}
