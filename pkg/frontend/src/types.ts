/**
 * Payload types mirroring the benchmarking service JSON.
 */

export interface PanelInfo {
  panel_id: string;
  n_dmus: number;
  inputs: string[];
  outputs: string[];
  removed: string[];
  dmu_ids: string[];
}

export interface ScoreRow {
  id: string;
  score: number;
  peers: string[];
  expansion?: number;
}

export interface EfficiencyPayload {
  technology: string;
  orientation: string;
  scores: ScoreRow[];
}

export interface CostBreakdown {
  l0: number;
  l1: number;
  l2sq: number;
  weighted: number;
}

export interface CounterfactualPayload {
  firm: string;
  orientation: string;
  technology: string;
  base_score: number;
  e_target: number;
  achieved: number;
  internal_score: number;
  plan: { inputs: number[]; outputs: number[] };
  cost: CostBreakdown;
  active_peers: number[];
  changed: number[];
  solver: { status: string; nodes: number; gap: number | null };
  verification: {
    feasible: boolean;
    rescore_delta: number;
    big_m_passed: boolean;
    verified: boolean;
  };
}

export interface HeatmapPayload {
  firms: string[];
  features: string[];
  changed: boolean[][];
}

export interface BatchPayload {
  e_target: number;
  entries: {
    id: string;
    base_score: number;
    skipped: boolean;
    result?: CounterfactualPayload;
    error?: string;
  }[];
  heatmap?: HeatmapPayload;
  n_analyzed: number;
  n_skipped: number;
}

export interface JobStatus {
  status: "running" | "done" | "failed";
  result?: BatchPayload;
  error?: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  partial?: boolean;
  result?: CounterfactualPayload;
}

export interface CounterfactualRequestBody {
  firm: string;
  e_star: number;
  nu0: number;
  nu1: number;
  nu2: number;
  locks: string[];
  tech: string;
  orient: string;
}
