/**
 * Application state machine. One mutating request in flight at a time
 * (buttons disable while busy; the server's lease returns 409 if another
 * client races us, which surfaces as a conflict banner).
 */

import { Api, ApiFailure } from "./api.js";
import { toSessionView, UiSessionView } from "./state.js";

export type Phase = "idle" | "working" | "session";

export interface UiError {
  code: string;
  message: string;
  sizeCap?: number;
  stderr?: string;
  attempts?: number;
  retryable: boolean;
}

export interface CompareView {
  beforeUrl: string | null;
  afterUrl: string | null;
  revision: number;
}

export interface AppState {
  phase: Phase;
  busyLabel: string | null;
  session: UiSessionView | null;
  selected: Set<string>;
  compare: CompareView | null;
  error: UiError | null;
}

function initialState(): AppState {
  return {
    phase: "idle",
    busyLabel: null,
    session: null,
    selected: new Set(),
    compare: null,
    error: null,
  };
}

function toUiError(failure: unknown): UiError {
  if (failure instanceof ApiFailure) {
    const detail = (failure.body.detail ?? {}) as Record<string, unknown>;
    if (failure.body.code === "CONFLICT") {
      return {
        code: "CONFLICT",
        message: "another operation is in progress on this session",
        retryable: true,
      };
    }
    return {
      code: failure.body.code,
      message: failure.body.message,
      sizeCap: typeof detail.size_cap === "number" ? detail.size_cap : undefined,
      stderr: typeof detail.stderr_excerpt === "string" ? detail.stderr_excerpt : undefined,
      attempts: typeof detail.attempts === "number" ? detail.attempts : undefined,
      retryable: failure.body.code === "BACKEND_FAILURE",
    };
  }
  return { code: "INTERNAL", message: String(failure), retryable: false };
}

export class AppController {
  state: AppState = initialState();

  constructor(private api: Api, private onChange: (state: AppState) => void = () => {}) {}

  private emit(): void {
    this.onChange(this.state);
  }

  private async refresh(sessionId: string): Promise<void> {
    const doc = await this.api.getSession(sessionId);
    this.state.session = toSessionView(doc, this.api);
    const valid = new Set(this.state.session.selectable);
    this.state.selected = new Set([...this.state.selected].filter((id) => valid.has(id)));
  }

  /** Upload then immediately analyze; lands on the session page. */
  async upload(file: Blob, filename = "chart.png"): Promise<void> {
    this.state.error = null;
    this.state.phase = "working";
    this.state.busyLabel = "uploading";
    this.emit();
    try {
      const summary = await this.api.createSession(file, filename);
      this.state.busyLabel = "analyzing";
      this.emit();
      await this.api.analyze(summary.id);
      await this.refresh(summary.id);
      this.state.phase = "session";
    } catch (failure) {
      this.state.error = toUiError(failure);
      this.state.phase = this.state.session ? "session" : "idle";
    } finally {
      this.state.busyLabel = null;
      this.emit();
    }
  }

  toggle(recId: string): void {
    if (this.state.selected.has(recId)) {
      this.state.selected.delete(recId);
    } else if (this.state.session?.selectable.includes(recId)) {
      this.state.selected.add(recId);
    }
    this.emit();
  }

  get applyEnabled(): boolean {
    return this.state.selected.size > 0 && this.state.busyLabel === null;
  }

  /** Apply checked recommendations; on success show before/after. */
  async applySelected(): Promise<void> {
    const session = this.state.session;
    if (!session || !this.applyEnabled) return;
    const ids = [...this.state.selected];
    this.state.error = null;
    this.state.busyLabel = "applying";
    this.emit();
    try {
      const outcome = await this.api.apply(session.id, ids);
      await this.refresh(session.id);
      const revisions = this.state.session!.revisions;
      const after = revisions.find((r) => r.index === outcome.revision) ?? null;
      const before = revisions.find((r) => r.index === outcome.revision - 1) ?? null;
      this.state.compare = {
        beforeUrl: before?.imageUrl ?? null,
        afterUrl: after?.imageUrl ?? null,
        revision: outcome.revision,
      };
      this.state.selected = new Set();
    } catch (failure) {
      this.state.error = toUiError(failure);
      // statuses stay whatever the server holds
      await this.refresh(session.id).catch(() => {});
    } finally {
      this.state.busyLabel = null;
      this.emit();
    }
  }

  async reanalyze(): Promise<void> {
    const session = this.state.session;
    if (!session || this.state.busyLabel !== null) return;
    this.state.error = null;
    this.state.busyLabel = "re-analyzing";
    this.emit();
    try {
      await this.api.reanalyze(session.id);
      await this.refresh(session.id);
      this.state.compare = null;
    } catch (failure) {
      this.state.error = toUiError(failure);
    } finally {
      this.state.busyLabel = null;
      this.emit();
    }
  }
}
