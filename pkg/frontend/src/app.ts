/**
 * What-if controller: wires the firm selector, target/weight sliders and
 * lock toggles to debounced counterfactual requests, and renders the result
 * panel, spider chart and batch heatmap.
 *
 * Cost numbers shown in the result panel come straight from the service
 * payload; the client never recomputes them.
 */

import { ApiClient } from "./api.js";
import { debounce } from "./debounce.js";
import { buildHeatmapModel, heatmapTable } from "./heatmap.js";
import { buildSpiderModel, spiderSvg } from "./spider.js";
import {
  applyFailure,
  applyResult,
  baseScore,
  clampTarget,
  clampWeight,
  initialSession,
  issueSeq,
  type SessionView,
} from "./state.js";
import type { CounterfactualPayload } from "./types.js";

const DEMO_CSV = `id,in:x1,in:x2,out:y
1,0.5,1,1
2,1.5,0.5,1
3,1.75,1.25,1
4,2.5,1.25,1
`;

const RECOMPUTE_DEBOUNCE_MS = 300;

export class WhatIfController {
  readonly view: SessionView = initialSession();
  recomputeCount = 0;
  presetSeries: Record<string, number[]> | null = null;
  private originals = new Map<string, number[]>();
  private readonly scheduleRecompute = debounce(() => {
    void this.recompute();
  }, RECOMPUTE_DEBOUNCE_MS);

  constructor(
    private api: ApiClient,
    private root: Document | null = typeof document === "undefined" ? null : document,
  ) {}

  async loadPanel(csv: string): Promise<void> {
    const info = await this.api.uploadPanel(csv);
    const eff = await this.api.efficiency(info.panel_id);
    this.view.panelId = info.panel_id;
    this.view.inputNames = info.inputs;
    this.view.scores = eff.scores;
    this.view.firm = info.dmu_ids[0] ?? null;
    this.view.result = null;
    this.view.heatmap = null;
    this.originals.clear();
    csv.trim().split("\n").slice(1).forEach((line) => {
      const cells = line.split(",");
      this.originals.set(
        cells[0],
        cells.slice(1, 1 + info.inputs.length).map(Number),
      );
    });
    this.render();
  }

  /** Slider/lock changes commit through a 300 ms debounce. */
  onTargetInput(raw: number): void {
    this.view.sliders.eStar = clampTarget(this.view, raw);
    this.scheduleRecompute();
  }

  onWeightInput(which: "nu0" | "nu1" | "nu2", raw: number): void {
    this.view.sliders[which] = clampWeight(raw);
    this.scheduleRecompute();
  }

  onLockToggle(name: string, locked: boolean): void {
    if (locked) this.view.locks.add(name);
    else this.view.locks.delete(name);
    this.scheduleRecompute();
  }

  onFirmChange(firm: string): void {
    this.view.firm = firm;
    this.view.result = null;
    this.presetSeries = null;
    this.view.sliders.eStar = clampTarget(this.view, this.view.sliders.eStar);
    this.scheduleRecompute();
  }

  /** Issue the POST for the current session state; stale replies are dropped. */
  async recompute(): Promise<void> {
    const { panelId, firm, sliders } = this.view;
    if (panelId === null || firm === null) return;
    const floor = baseScore(this.view);
    if (floor !== null && sliders.eStar <= floor + 1e-12) {
      // zero-change regime: the service answers with the identity plan
      this.view.sliders.eStar = clampTarget(this.view, sliders.eStar);
    }
    const seq = issueSeq(this.view);
    this.recomputeCount += 1;
    const outcome = await this.api.counterfactual(panelId, {
      firm,
      e_star: this.view.sliders.eStar,
      nu0: sliders.nu0,
      nu1: sliders.nu1,
      nu2: sliders.nu2,
      locks: [...this.view.locks],
      tech: "crs",
      orient: "input",
    });
    switch (outcome.kind) {
      case "ok":
        applyResult(this.view, seq, outcome.result);
        break;
      case "invalid":
        applyFailure(this.view, seq, { kind: "validation", message: outcome.message });
        break;
      case "partial":
        applyFailure(
          this.view,
          seq,
          { kind: "partial", message: outcome.message, gap: outcome.gap },
          outcome.result,
        );
        break;
      case "network":
      case "unavailable":
        applyFailure(this.view, seq, { kind: "retry", message: outcome.message });
        break;
    }
    this.render();
  }

  /** Fetch the preset-comparison overlays for the current firm and target. */
  async comparePresets(): Promise<void> {
    const { panelId, firm } = this.view;
    if (panelId === null || firm === null) return;
    const payload = await this.api.spiderSeries(panelId, firm, this.view.sliders.eStar);
    this.presetSeries = payload.series;
    this.render();
  }

  async runBatch(preset = "l2"): Promise<void> {
    if (this.view.panelId === null) return;
    const jobId = await this.api.startBatch(
      this.view.panelId,
      this.view.sliders.eStar,
      preset,
    );
    const result = await this.api.pollBatch(jobId);
    this.view.heatmap = result.heatmap ?? null;
    this.render();
  }

  spiderFor(result: CounterfactualPayload): string {
    const originals = this.originals.get(result.firm);
    if (!originals) return "";
    const model = buildSpiderModel(
      this.view.inputNames,
      [{ label: "target", result }],
      originals,
    );
    if (this.presetSeries) {
      for (const [label, ratios] of Object.entries(this.presetSeries)) {
        model.series.push({ label, ratios });
        model.maxRatio = Math.max(model.maxRatio, ...ratios);
      }
    }
    return spiderSvg(model);
  }

  render(): void {
    if (!this.root) return;
    const v = this.view;
    const el = (id: string) => this.root!.getElementById(id);

    const firmSel = el("firm") as HTMLSelectElement | null;
    if (firmSel && firmSel.options.length !== v.scores.length) {
      firmSel.innerHTML = v.scores
        .map((r) => `<option value="${r.id}">${r.id} (E=${r.score.toFixed(3)})</option>`)
        .join("");
      if (v.firm) firmSel.value = v.firm;
    }

    const floor = baseScore(v);
    const slider = el("estar") as HTMLInputElement | null;
    if (slider && floor !== null) {
      slider.min = String(Math.min(1, floor + 1e-6));
      slider.value = String(v.sliders.eStar);
    }
    const label = el("estar-label");
    if (label) label.textContent = v.sliders.eStar.toFixed(3);

    const locks = el("locks");
    if (locks && locks.childElementCount === 0 && v.inputNames.length) {
      locks.innerHTML = v.inputNames
        .map((n) => `<label><input type="checkbox" data-lock="${n}"> lock ${n}</label>`)
        .join(" ");
    }

    const banner = el("banner");
    if (banner) {
      banner.className = `banner ${v.banner.kind}`;
      banner.textContent =
        v.banner.kind === "none"
          ? ""
          : v.banner.kind === "partial"
            ? `time limit hit; showing incumbent (gap ${v.banner.gap ?? "?"})`
            : v.banner.message;
    }

    const out = el("result");
    if (out) {
      if (v.result) {
        const r = v.result;
        out.innerHTML = `
          <p>firm ${r.firm}: ${r.base_score.toFixed(4)} &rarr; ${r.achieved.toFixed(4)}
             ${r.verification.verified ? "(verified)" : "(unverified)"}</p>
          <p>plan: ${r.plan.inputs.map((x) => x.toFixed(4)).join(", ")}</p>
          <p>cost: l0=${r.cost.l0} l1=${r.cost.l1} l2&sup2;=${r.cost.l2sq}
             weighted=${r.cost.weighted}</p>`;
      } else {
        out.textContent = "move a slider to compute a target";
      }
    }

    const spider = el("spider");
    if (spider) spider.innerHTML = v.result ? this.spiderFor(v.result) : "";

    const heat = el("heatmap");
    if (heat) {
      heat.innerHTML = v.heatmap ? heatmapTable(buildHeatmapModel(v.heatmap)) : "";
    }
  }

  bind(): void {
    if (!this.root) return;
    const el = (id: string) => this.root!.getElementById(id);
    (el("load-demo") as HTMLButtonElement | null)?.addEventListener("click", () => {
      void this.loadPanel(DEMO_CSV);
    });
    (el("firm") as HTMLSelectElement | null)?.addEventListener("change", (ev) => {
      this.onFirmChange((ev.target as HTMLSelectElement).value);
    });
    (el("estar") as HTMLInputElement | null)?.addEventListener("input", (ev) => {
      this.onTargetInput(Number((ev.target as HTMLInputElement).value));
    });
    for (const which of ["nu0", "nu1", "nu2"] as const) {
      (el(which) as HTMLInputElement | null)?.addEventListener("input", (ev) => {
        this.onWeightInput(which, Number((ev.target as HTMLInputElement).value));
      });
    }
    el("locks")?.addEventListener("change", (ev) => {
      const box = ev.target as HTMLInputElement;
      const name = box.dataset.lock;
      if (name) this.onLockToggle(name, box.checked);
    });
    (el("run-batch") as HTMLButtonElement | null)?.addEventListener("click", () => {
      void this.runBatch();
    });
    (el("compare") as HTMLButtonElement | null)?.addEventListener("click", () => {
      void this.comparePresets();
    });
  }
}

export function start(): WhatIfController {
  const controller = new WhatIfController(new ApiClient(""));
  controller.bind();
  return controller;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  start();
}
