/**
 * Typed client for the benchmarking service.  Counterfactual calls resolve
 * to a discriminated outcome instead of throwing, so the controller can
 * route validation problems, partial (time-limited) results, and transport
 * failures to the right surface.
 */

import type {
  ApiErrorBody,
  BatchPayload,
  CounterfactualPayload,
  CounterfactualRequestBody,
  EfficiencyPayload,
  JobStatus,
  PanelInfo,
} from "./types.js";

export type CfOutcome =
  | { kind: "ok"; result: CounterfactualPayload }
  | { kind: "invalid"; message: string }
  | { kind: "partial"; result: CounterfactualPayload; message: string; gap: number | null }
  | { kind: "unavailable"; message: string }
  | { kind: "network"; message: string };

export class ApiClient {
  constructor(private baseUrl: string = "", private fetchFn: typeof fetch = fetch) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async uploadPanel(csv: string): Promise<PanelInfo> {
    const resp = await this.fetchFn(this.url("/panels"), {
      method: "POST",
      headers: { "content-type": "text/csv" },
      body: csv,
    });
    if (!resp.ok) {
      const body = (await resp.json()) as ApiErrorBody;
      throw new Error(body.message ?? `upload failed (${resp.status})`);
    }
    return (await resp.json()) as PanelInfo;
  }

  async efficiency(panelId: string): Promise<EfficiencyPayload> {
    const resp = await this.fetchFn(this.url(`/panels/${panelId}/efficiency`));
    if (!resp.ok) throw new Error(`efficiency failed (${resp.status})`);
    return (await resp.json()) as EfficiencyPayload;
  }

  async counterfactual(
    panelId: string,
    body: CounterfactualRequestBody,
  ): Promise<CfOutcome> {
    let resp: Response;
    try {
      resp = await this.fetchFn(this.url(`/panels/${panelId}/counterfactual`), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      return { kind: "network", message: String(err) };
    }
    if (resp.ok) {
      return { kind: "ok", result: (await resp.json()) as CounterfactualPayload };
    }
    const payload = (await resp.json()) as ApiErrorBody;
    if (resp.status === 422 || resp.status === 404) {
      return { kind: "invalid", message: payload.message };
    }
    if (resp.status === 503 && payload.partial && payload.result) {
      return {
        kind: "partial",
        result: payload.result,
        message: payload.message,
        gap: payload.result.solver.gap,
      };
    }
    return { kind: "unavailable", message: payload.message ?? `status ${resp.status}` };
  }

  async startBatch(panelId: string, eStar: number, preset: string): Promise<string> {
    const resp = await this.fetchFn(this.url(`/panels/${panelId}/batch`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ e_star: eStar, preset }),
    });
    if (!resp.ok) {
      const body = (await resp.json()) as ApiErrorBody;
      throw new Error(body.message ?? `batch failed (${resp.status})`);
    }
    return ((await resp.json()) as { job_id: string }).job_id;
  }

  async spiderSeries(
    panelId: string,
    firm: string,
    eStar: number,
  ): Promise<{ axes: string[]; series: Record<string, number[]> }> {
    const resp = await this.fetchFn(
      this.url(`/panels/${panelId}/spider/${firm}?e_star=${eStar}`),
    );
    if (!resp.ok) {
      const body = (await resp.json()) as ApiErrorBody;
      throw new Error(body.message ?? `spider failed (${resp.status})`);
    }
    return (await resp.json()) as { axes: string[]; series: Record<string, number[]> };
  }

  async jobStatus(jobId: string): Promise<JobStatus> {
    const resp = await this.fetchFn(this.url(`/jobs/${jobId}`));
    if (!resp.ok) throw new Error(`job poll failed (${resp.status})`);
    return (await resp.json()) as JobStatus;
  }

  async pollBatch(
    jobId: string,
    intervalMs = 500,
    maxPolls = 2400,
  ): Promise<BatchPayload> {
    for (let i = 0; i < maxPolls; i += 1) {
      const status = await this.jobStatus(jobId);
      if (status.status === "done" && status.result) return status.result;
      if (status.status === "failed") throw new Error(status.error ?? "batch failed");
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
    throw new Error("batch polling timed out");
  }
}
