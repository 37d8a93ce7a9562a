/**
 * What-if session state: the selected firm, slider settings, locks, and the
 * most recent completed responses.  Responses carry the request sequence
 * number that produced them; anything older than the last applied response
 * is discarded, so out-of-order replies never overwrite newer ones.
 */

import type { CounterfactualPayload, HeatmapPayload, ScoreRow } from "./types.js";

export interface SliderState {
  eStar: number;
  nu0: number;
  nu1: number;
  nu2: number;
}

export type Banner =
  | { kind: "none" }
  | { kind: "validation"; message: string }
  | { kind: "retry"; message: string }
  | { kind: "partial"; message: string; gap: number | null };

export interface SessionView {
  panelId: string | null;
  inputNames: string[];
  scores: ScoreRow[];
  firm: string | null;
  sliders: SliderState;
  locks: Set<string>;
  result: CounterfactualPayload | null;
  heatmap: HeatmapPayload | null;
  banner: Banner;
  busy: boolean;
  lastIssuedSeq: number;
  lastAppliedSeq: number;
}

export function initialSession(): SessionView {
  return {
    panelId: null,
    inputNames: [],
    scores: [],
    firm: null,
    sliders: { eStar: 0.8, nu0: 0, nu1: 0, nu2: 1 },
    locks: new Set(),
    result: null,
    heatmap: null,
    banner: { kind: "none" },
    busy: false,
    lastIssuedSeq: 0,
    lastAppliedSeq: 0,
  };
}

export function baseScore(view: SessionView): number | null {
  if (view.firm === null) return null;
  const row = view.scores.find((r) => r.id === view.firm);
  return row ? row.score : null;
}

/** The E* slider is bounded to (current score, 1]. */
export function clampTarget(view: SessionView, raw: number): number {
  const floor = baseScore(view);
  let value = Math.min(1.0, raw);
  if (floor !== null && value <= floor) {
    value = Math.min(1.0, floor + 1e-6);
  }
  return value;
}

export function clampWeight(raw: number): number {
  return Number.isFinite(raw) && raw > 0 ? raw : 0;
}

/** Reserve a sequence number for the next in-flight request. */
export function issueSeq(view: SessionView): number {
  view.lastIssuedSeq += 1;
  view.busy = true;
  return view.lastIssuedSeq;
}

/**
 * Apply a completed counterfactual response unless a newer one has landed.
 * Returns true when the view changed.
 */
export function applyResult(
  view: SessionView,
  seq: number,
  result: CounterfactualPayload,
): boolean {
  if (seq <= view.lastAppliedSeq) return false;
  view.lastAppliedSeq = seq;
  view.result = result;
  view.banner = { kind: "none" };
  view.busy = seq < view.lastIssuedSeq;
  return true;
}

export function applyFailure(view: SessionView, seq: number, banner: Banner,
                             partial?: CounterfactualPayload): boolean {
  if (seq <= view.lastAppliedSeq) return false;
  view.lastAppliedSeq = seq;
  view.banner = banner;
  if (partial) view.result = partial;
  view.busy = seq < view.lastIssuedSeq;
  return true;
}
