/**
 * Firms-by-features change grid.  Efficient (skipped) firms keep empty rows;
 * rows are sorted by DMU id.
 */

import type { HeatmapPayload } from "./types.js";

export interface HeatmapModel {
  features: string[];
  rows: { firm: string; cells: boolean[] }[];
  totalChanged: number;
}

export function buildHeatmapModel(payload: HeatmapPayload): HeatmapModel {
  const order = payload.firms
    .map((firm, idx) => ({ firm, idx }))
    .sort((a, b) => (a.firm < b.firm ? -1 : a.firm > b.firm ? 1 : 0));
  const rows = order.map(({ firm, idx }) => ({
    firm,
    cells: payload.changed[idx].slice(),
  }));
  const totalChanged = rows.reduce(
    (acc, row) => acc + row.cells.filter(Boolean).length,
    0,
  );
  return { features: payload.features, rows, totalChanged };
}

export function heatmapTable(model: HeatmapModel): string {
  const head = ["<tr><th></th>",
    ...model.features.map((f) => `<th>${f}</th>`), "</tr>"].join("");
  const body = model.rows
    .map((row) => {
      const cells = row.cells
        .map((on) => `<td class="${on ? "cell on" : "cell"}"></td>`)
        .join("");
      return `<tr><th>${row.firm}</th>${cells}</tr>`;
    })
    .join("");
  return `<table class="heatmap">${head}${body}</table>`;
}
