/**
 * View-model derivation. The rendered state is always a pure function of
 * the last successful server fetch: mutations never touch statuses locally,
 * they trigger a re-fetch instead (poll-after-mutate).
 */

import type { Api, RecommendationDoc, SessionDoc } from "./api.js";

export interface UiRound {
  round: number;
  groups: UiGroup[];
}

export interface UiGroup {
  /** analytics category when present, otherwise the round bucket */
  label: string | null;
  recs: RecommendationDoc[];
}

export interface UiRevision {
  index: number;
  imageUrl: string | null;
  appliedIds: string[];
  renderStatus: string | null;
}

export interface UiSessionView {
  id: string;
  state: string;
  rounds: UiRound[];
  revisions: UiRevision[];
  selectable: string[];
}

function groupRound(recs: RecommendationDoc[]): UiGroup[] {
  const withCategory = recs.filter((r) => r.category);
  if (withCategory.length === 0) {
    return [{ label: null, recs }];
  }
  const byCategory = new Map<string, RecommendationDoc[]>();
  const uncategorized: RecommendationDoc[] = [];
  for (const rec of recs) {
    if (rec.category) {
      const bucket = byCategory.get(rec.category) ?? [];
      bucket.push(rec);
      byCategory.set(rec.category, bucket);
    } else {
      uncategorized.push(rec);
    }
  }
  const groups: UiGroup[] = [...byCategory.entries()]
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([label, bucket]) => ({ label, recs: bucket }));
  if (uncategorized.length) groups.push({ label: null, recs: uncategorized });
  return groups;
}

export function toSessionView(doc: SessionDoc, api: Api): UiSessionView {
  const roundNumbers = [...new Set(doc.recommendations.map((r) => r.round))].sort((a, b) => a - b);
  const rounds = roundNumbers.map((round) => ({
    round,
    groups: groupRound(doc.recommendations.filter((r) => r.round === round)),
  }));
  const revisions = doc.revisions.map((rev) => ({
    index: rev.index,
    imageUrl:
      rev.render && rev.render.status === "SUCCESS" ? api.imageUrl(doc.id, rev.index) : null,
    appliedIds: rev.applied_recommendation_ids,
    renderStatus: rev.render ? rev.render.status : null,
  }));
  return {
    id: doc.id,
    state: doc.state,
    rounds,
    revisions,
    selectable: doc.recommendations
      .filter((r) => r.status === "PROPOSED" || r.status === "SELECTED")
      .map((r) => r.id),
  };
}
