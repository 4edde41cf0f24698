/** Pure SVG rendering for analysis windows. No DOM access. */

import type { WindowRecord } from "./api.js";

export type PlotMode = "residual" | "raw";

export interface PlotOptions {
  width: number;
  height: number;
  pad: number;
}

export const DEFAULT_PLOT: PlotOptions = { width: 640, height: 220, pad: 12 };

/**
 * Maps samples to evenly spaced points inside the padded plot box, with the
 * value range stretched to the box height. A flat series plots as a midline.
 */
export function polylinePoints(values: readonly number[], options: PlotOptions): string {
  const { width, height, pad } = options;
  const n = values.length;
  if (n === 0) return "";
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo;
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  const points: string[] = [];
  for (let i = 0; i < n; i++) {
    const x = n === 1 ? width / 2 : pad + (innerW * i) / (n - 1);
    const value = values[i] ?? lo;
    const frac = span === 0 ? 0.5 : (value - lo) / span;
    const y = height - pad - innerH * frac;
    points.push(`${round2(x)},${round2(y)}`);
  }
  return points.join(" ");
}

function round2(v: number): number {
  return Math.round(v * 100) / 100;
}

/** Picks the series for the requested view, falling back to the residual
 * values when no raw cutout was stored alongside the window. */
export function seriesFor(record: WindowRecord, mode: PlotMode): readonly number[] {
  if (mode === "raw" && record.raw_values !== null) return record.raw_values;
  return record.values;
}

/** Offset of the detector-flagged sample within the window values. */
export function anchorOffset(record: WindowRecord): number {
  const offset = record.source_index - record.start;
  return Math.min(Math.max(offset, 0), Math.max(record.values.length - 1, 0));
}

/**
 * Renders one window as a standalone SVG string: the sample polyline plus a
 * highlight band one sample wide around the flagged position.
 */
export function windowPlot(
  record: WindowRecord,
  mode: PlotMode,
  options: PlotOptions = DEFAULT_PLOT,
): string {
  const values = seriesFor(record, mode);
  const { width, height, pad } = options;
  const n = values.length;
  const step = n > 1 ? (width - 2 * pad) / (n - 1) : width - 2 * pad;
  const anchorX = n > 1 ? pad + step * anchorOffset(record) : width / 2;
  const bandX = round2(Math.max(anchorX - step / 2, 0));
  const bandW = round2(Math.min(step, width - bandX));
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" ` +
      `width="${width}" height="${height}" role="img">`,
    `<rect class="plot-bg" x="0" y="0" width="${width}" height="${height}" />`,
    `<rect class="plot-anchor" x="${bandX}" y="0" width="${bandW}" height="${height}" />`,
    `<polyline class="plot-line plot-${mode}" fill="none" ` +
      `points="${polylinePoints(values, options)}" />`,
    `</svg>`,
  ];
  return parts.join("");
}
