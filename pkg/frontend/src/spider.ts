/**
 * Spider (radar) chart model and SVG rendering.
 *
 * One axis per input; the unit ring marks the original plan.  Series ratios
 * are taken verbatim from service payloads (plan value over original value,
 * both as served) -- no rounding happens in the model, only in tick labels.
 */

import type { CounterfactualPayload } from "./types.js";

export interface SpiderSeries {
  label: string;
  ratios: number[];
}

export interface SpiderModel {
  axes: string[];
  series: SpiderSeries[];
  maxRatio: number;
}

/** Ratios of the counterfactual plan to the original inputs, exact. */
export function ratiosFromResult(
  result: CounterfactualPayload,
  originals: number[],
): number[] {
  const plan =
    result.orientation === "input" ? result.plan.inputs : result.plan.outputs;
  if (plan.length !== originals.length) {
    throw new Error("plan and original dimensions differ");
  }
  return plan.map((v, i) => v / originals[i]);
}

export function buildSpiderModel(
  axes: string[],
  entries: { label: string; result: CounterfactualPayload }[],
  originals: number[],
): SpiderModel {
  const series = entries.map(({ label, result }) => ({
    label,
    ratios: ratiosFromResult(result, originals),
  }));
  const maxRatio = Math.max(
    1.0,
    ...series.flatMap((s) => s.ratios),
  );
  return { axes, series, maxRatio };
}

function point(cx: number, cy: number, radius: number, angle: number): string {
  const x = cx + radius * Math.cos(angle - Math.PI / 2);
  const y = cy + radius * Math.sin(angle - Math.PI / 2);
  return `${x.toFixed(2)},${y.toFixed(2)}`;
}

const PALETTE = ["#2563eb", "#dc2626", "#059669", "#9333ea", "#ea580c"];

/** Render the model as an SVG string (drop-in innerHTML). */
export function spiderSvg(model: SpiderModel, size = 320): string {
  const n = model.axes.length;
  const cx = size / 2;
  const cy = size / 2;
  const rMax = size / 2 - 40;
  const scale = rMax / (model.maxRatio * 1.05);
  const angle = (i: number) => (2 * Math.PI * i) / n;
  const parts: string[] = [];
  parts.push(`<svg viewBox="0 0 ${size} ${size}" xmlns="http://www.w3.org/2000/svg">`);
  for (let i = 0; i < n; i += 1) {
    const tip = point(cx, cy, rMax, angle(i));
    parts.push(`<line x1="${cx}" y1="${cy}" x2="${tip.split(",")[0]}" ` +
      `y2="${tip.split(",")[1]}" stroke="#d4d4d8" stroke-width="1"/>`);
    const lab = point(cx, cy, rMax + 16, angle(i));
    parts.push(`<text x="${lab.split(",")[0]}" y="${lab.split(",")[1]}" ` +
      `font-size="11" text-anchor="middle">${model.axes[i]}</text>`);
  }
  const ring = Array.from({ length: n }, (_, i) =>
    point(cx, cy, 1.0 * scale, angle(i))).join(" ");
  parts.push(`<polygon points="${ring}" fill="none" stroke="#111827" ` +
    `stroke-dasharray="4 3" stroke-width="1.2"/>`);
  model.series.forEach((s, idx) => {
    const pts = s.ratios.map((r, i) => point(cx, cy, r * scale, angle(i))).join(" ");
    const color = PALETTE[idx % PALETTE.length];
    parts.push(`<polygon points="${pts}" fill="${color}22" stroke="${color}" ` +
      `stroke-width="1.6"><title>${s.label}</title></polygon>`);
  });
  parts.push("</svg>");
  return parts.join("");
}
