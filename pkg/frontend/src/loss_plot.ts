import type { TrainMetrics } from "./api.js";

// Appending line chart on a raw canvas. One point lands per batch_end
// event; epoch_end only places a tick mark. The scale maths live in
// plain functions so they can be checked without a drawing context
// (jsdom has none).

export interface PlotPoint {
  loss: number;
  valLoss: number | null;
}

export function computeBounds(values: number[]): { min: number; max: number } {
  if (values.length === 0) return { min: 0, max: 1 };
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    if (v < min) min = v;
    if (v > max) max = v;
  }
  if (!isFinite(min) || !isFinite(max)) return { min: 0, max: 1 };
  if (min === max) {
    // flat series still needs a visible band
    const pad = Math.abs(min) * 0.1 || 0.5;
    return { min: min - pad, max: max + pad };
  }
  const pad = (max - min) * 0.08;
  return { min: Math.max(0, min - pad), max: max + pad };
}

export function xToPixel(index: number, count: number, width: number): number {
  if (count <= 1) return 0;
  return (index / (count - 1)) * width;
}

export function yToPixel(value: number, min: number, max: number, height: number): number {
  if (max === min) return height / 2;
  return height - ((value - min) / (max - min)) * height;
}

const MAX_POINTS = 20000;

export class LossPlot {
  points: PlotPoint[] = [];
  epochMarks: number[] = [];
  private canvas: HTMLCanvasElement;
  private ctx: CanvasRenderingContext2D | null;
  private latest: HTMLElement | null;

  constructor(canvas: HTMLCanvasElement, latestLabel?: HTMLElement) {
    this.canvas = canvas;
    this.ctx = canvas.getContext("2d");
    this.latest = latestLabel ?? null;
  }

  handleTrainEvent(kind: string, metrics?: TrainMetrics): void {
    if (kind === "batch_end" && metrics) {
      this.points.push({ loss: metrics.loss, valLoss: metrics.val_loss });
      if (this.points.length > MAX_POINTS) {
        // drop every second old point; marks keep their meaning roughly
        this.points = this.points.filter((_, i) => i % 2 === 0);
        this.epochMarks = this.epochMarks.map((m) => Math.floor(m / 2));
      }
      if (this.latest) this.latest.textContent = metrics.loss.toFixed(6);
      this.draw();
    } else if (kind === "epoch_end") {
      this.epochMarks.push(this.points.length - 1);
      this.draw();
    }
  }

  reset(): void {
    this.points = [];
    this.epochMarks = [];
    if (this.latest) this.latest.textContent = "";
    this.draw();
  }

  draw(): void {
    const ctx = this.ctx;
    if (!ctx) return;
    const w = this.canvas.width;
    const h = this.canvas.height;
    ctx.clearRect(0, 0, w, h);
    if (this.points.length === 0) return;

    const losses = this.points.map((p) => p.loss);
    const valLosses = this.points.map((p) => p.valLoss).filter((v): v is number => v !== null);
    const { min, max } = computeBounds(losses.concat(valLosses));
    const count = this.points.length;

    ctx.strokeStyle = "#31343b";
    ctx.lineWidth = 1;
    for (const mark of this.epochMarks) {
      const x = xToPixel(mark, count, w);
      ctx.beginPath();
      ctx.moveTo(x, 0);
      ctx.lineTo(x, h);
      ctx.stroke();
    }

    ctx.strokeStyle = "#e8833a";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    this.points.forEach((p, i) => {
      const x = xToPixel(i, count, w);
      const y = yToPixel(p.loss, min, max, h);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();

    if (valLosses.length > 0) {
      ctx.strokeStyle = "#5b9bd5";
      ctx.setLineDash([4, 3]);
      ctx.beginPath();
      let started = false;
      this.points.forEach((p, i) => {
        if (p.valLoss === null) return;
        const x = xToPixel(i, count, w);
        const y = yToPixel(p.valLoss, min, max, h);
        if (!started) {
          ctx.moveTo(x, y);
          started = true;
        } else ctx.lineTo(x, y);
      });
      ctx.stroke();
      ctx.setLineDash([]);
    }

    ctx.fillStyle = "#9aa0a6";
    ctx.font = "10px sans-serif";
    ctx.fillText(max.toPrecision(3), 4, 10);
    ctx.fillText(min.toPrecision(3), 4, h - 3);
  }
}
