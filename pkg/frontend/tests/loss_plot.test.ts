import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { computeBounds, LossPlot, xToPixel, yToPixel } from "../src/loss_plot.js";
import type { TrainMetrics } from "../src/api.js";

function metrics(loss: number, valLoss: number | null = null): TrainMetrics {
  return { loss, accuracy: null, val_loss: valLoss, val_accuracy: null, batch_duration_ms: 1 };
}

describe("plot scales", () => {
  it("computeBounds pads the range and clamps min at zero", () => {
    const { min, max } = computeBounds([0.2, 0.8]);
    expect(min).toBeGreaterThanOrEqual(0);
    expect(min).toBeLessThan(0.2);
    expect(max).toBeGreaterThan(0.8);
  });

  it("computeBounds handles flat and empty input", () => {
    expect(computeBounds([])).toEqual({ min: 0, max: 1 });
    const flat = computeBounds([0.5, 0.5]);
    expect(flat.max).toBeGreaterThan(flat.min);
  });

  it("pixel mapping puts the first point at the left edge and low loss near the bottom", () => {
    expect(xToPixel(0, 10, 400)).toBe(0);
    expect(xToPixel(9, 10, 400)).toBe(400);
    const top = yToPixel(1, 0, 1, 200);
    const bottom = yToPixel(0, 0, 1, 200);
    expect(top).toBeLessThan(bottom);
  });
});

describe("LossPlot", () => {
  let plot: LossPlot;
  let label: HTMLElement;

  beforeEach(() => {
    vi.spyOn(HTMLCanvasElement.prototype, "getContext").mockReturnValue(null);
    const canvas = document.createElement("canvas");
    canvas.width = 400;
    canvas.height = 200;
    label = document.createElement("span");
    plot = new LossPlot(canvas, label);
  });

  afterEach(() => {
    vi.restoreAllMocks();
  });

  it("appends exactly one point per batch_end", () => {
    for (let epoch = 0; epoch < 2; epoch++) {
      for (let batch = 0; batch < 3; batch++) {
        plot.handleTrainEvent("batch_end", metrics(1 / (epoch * 3 + batch + 1)));
      }
      plot.handleTrainEvent("epoch_end", metrics(0.5));
    }
    plot.handleTrainEvent("train_end");
    expect(plot.points.length).toBe(6);
    expect(plot.epochMarks).toEqual([2, 5]);
  });

  it("ignores epoch_end metrics as points", () => {
    plot.handleTrainEvent("epoch_end", metrics(0.4));
    expect(plot.points.length).toBe(0);
  });

  it("shows the latest loss on the label", () => {
    plot.handleTrainEvent("batch_end", metrics(0.123456));
    expect(label.textContent).toBe("0.123456");
  });

  it("keeps val_loss alongside loss when present", () => {
    plot.handleTrainEvent("batch_end", metrics(0.9, 0.95));
    plot.handleTrainEvent("batch_end", metrics(0.8, null));
    expect(plot.points[0].valLoss).toBe(0.95);
    expect(plot.points[1].valLoss).toBeNull();
  });

  it("reset clears points, marks and the label", () => {
    plot.handleTrainEvent("batch_end", metrics(0.5));
    plot.handleTrainEvent("epoch_end");
    plot.reset();
    expect(plot.points.length).toBe(0);
    expect(plot.epochMarks.length).toBe(0);
    expect(label.textContent).toBe("");
  });

  it("compacts instead of growing without bound", () => {
    for (let i = 0; i < 20010; i++) {
      plot.handleTrainEvent("batch_end", metrics(1 / (i + 1)));
    }
    expect(plot.points.length).toBeLessThanOrEqual(20001);
  });
});
