import { describe, expect, it } from "vitest";
import type { WindowRecord } from "../src/api.js";
import { anchorOffset, polylinePoints, seriesFor, windowPlot } from "../src/plot.js";

const BOX = { width: 100, height: 50, pad: 10 };

function makeWindow(overrides: Partial<WindowRecord> = {}): WindowRecord {
  return {
    id: 0,
    series_id: "sim",
    fold: 0,
    source_index: 12,
    start: 10,
    end: 15,
    padded: false,
    noise_bin: null,
    sigma: null,
    values: [0, 1, 0.5, 0.25, 0.75],
    raw_values: [5, 5, 6, 5, 5],
    labels: [],
    version: 0,
    ...overrides,
  };
}

describe("polylinePoints", () => {
  it("spaces samples evenly and stretches the value range to the box", () => {
    expect(polylinePoints([0, 1], BOX)).toBe("10,40 90,10");
  });

  it("draws a flat series as a midline", () => {
    expect(polylinePoints([2, 2, 2], BOX)).toBe("10,25 50,25 90,25");
  });

  it("centers a single sample", () => {
    expect(polylinePoints([7], BOX)).toBe("50,25");
  });

  it("is empty for no samples", () => {
    expect(polylinePoints([], BOX)).toBe("");
  });

  it("keeps every point inside the padded box", () => {
    const values = Array.from({ length: 33 }, (_, i) => Math.sin(i));
    const pairs = polylinePoints(values, BOX)
      .split(" ")
      .map((p) => p.split(",").map(Number));
    expect(pairs).toHaveLength(33);
    for (const [x, y] of pairs) {
      expect(x).toBeGreaterThanOrEqual(BOX.pad);
      expect(x).toBeLessThanOrEqual(BOX.width - BOX.pad);
      expect(y).toBeGreaterThanOrEqual(BOX.pad);
      expect(y).toBeLessThanOrEqual(BOX.height - BOX.pad);
    }
  });
});

describe("seriesFor", () => {
  it("returns the residual values by default", () => {
    const record = makeWindow();
    expect(seriesFor(record, "residual")).toBe(record.values);
  });

  it("returns the raw cutout in raw mode", () => {
    const record = makeWindow();
    expect(seriesFor(record, "raw")).toBe(record.raw_values);
  });

  it("falls back to the residual values when no raw cutout was stored", () => {
    const record = makeWindow({ raw_values: null });
    expect(seriesFor(record, "raw")).toBe(record.values);
  });
});

describe("anchorOffset", () => {
  it("locates the flagged sample inside the cutout", () => {
    expect(anchorOffset(makeWindow())).toBe(2);
  });

  it("clamps to the first sample for head-padded windows", () => {
    expect(anchorOffset(makeWindow({ start: 14, source_index: 12 }))).toBe(0);
  });

  it("clamps to the last sample", () => {
    expect(anchorOffset(makeWindow({ source_index: 99 }))).toBe(4);
  });
});

describe("windowPlot", () => {
  it("renders the polyline and a one-sample highlight band at the anchor", () => {
    const svg = windowPlot(makeWindow(), "residual", BOX);
    expect(svg).toContain("<svg");
    expect(svg).toContain(`points="${polylinePoints(makeWindow().values, BOX)}"`);
    // 5 samples over an 80px box: step 20, anchor offset 2 sits at x=50.
    expect(svg).toContain('<rect class="plot-anchor" x="40" y="0" width="20"');
    expect(svg).toContain("plot-residual");
  });

  it("switches the plotted series and style class in raw mode", () => {
    const record = makeWindow();
    const svg = windowPlot(record, "raw", BOX);
    expect(svg).toContain(`points="${polylinePoints(record.raw_values ?? [], BOX)}"`);
    expect(svg).toContain("plot-raw");
    expect(svg).not.toContain(`points="${polylinePoints(record.values, BOX)}"`);
  });
});
