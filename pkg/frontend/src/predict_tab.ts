import type { SessionState } from "./api.js";
import { t, applyTranslations } from "./i18n.js";

// Inference tab. Image inputs get a drawing canvas that is sampled
// down to exactly the model's input dimensions at submit time; columns
// inputs get one number field per column; custom shapes fall back to a
// literal textarea.

export interface PixelSource {
  width: number;
  height: number;
  data: Uint8ClampedArray | number[];
}

// Box-average the drawing surface down to [h][w][channels]. The brush
// is grayscale, so every channel receives the same luminance; values
// land in [0, 1] like imported image datasets.
export function imageToLiteral(img: PixelSource, h: number, w: number, channels: number): string {
  const rows: string[] = [];
  for (let ty = 0; ty < h; ty++) {
    const cells: string[] = [];
    const y0 = Math.floor((ty * img.height) / h);
    const y1 = Math.max(Math.floor(((ty + 1) * img.height) / h), y0 + 1);
    for (let tx = 0; tx < w; tx++) {
      const x0 = Math.floor((tx * img.width) / w);
      const x1 = Math.max(Math.floor(((tx + 1) * img.width) / w), x0 + 1);
      let sum = 0;
      let count = 0;
      for (let y = y0; y < y1; y++) {
        for (let x = x0; x < x1; x++) {
          const base = (y * img.width + x) * 4;
          const r = Number(img.data[base]);
          const g = Number(img.data[base + 1]);
          const b = Number(img.data[base + 2]);
          sum += (r + g + b) / 3;
          count++;
        }
      }
      const v = count > 0 ? sum / count / 255 : 0;
      const text = String(Math.round(v * 10000) / 10000);
      cells.push("[" + new Array(channels).fill(text).join(", ") + "]");
    }
    rows.push("[" + cells.join(", ") + "]");
  }
  return "[" + rows.join(", ") + "]";
}

export function columnsLiteral(values: number[]): string {
  return "[[" + values.join(", ") + "]]";
}

export type PredictFn = (literal: string) => Promise<{ output: number[][] }>;

const BRUSH = 18;

export class PredictTab {
  private root: HTMLElement;
  private predictFn: PredictFn;
  private canvas: HTMLCanvasElement | null = null;
  private inputShape: { kind: string; h: number; w: number; channels: number; n: number } = {
    kind: "columns",
    h: 0,
    w: 0,
    channels: 0,
    n: 2,
  };
  categoryLabels: string[] | null = null;

  constructor(root: HTMLElement, predictFn: PredictFn) {
    this.root = root;
    this.predictFn = predictFn;
  }

  render(state: SessionState): void {
    const input = state.model.input;
    this.root.textContent = "";

    const hint = document.createElement("p");
    hint.className = "hint";
    const body = document.createElement("div");
    body.className = "predict-body";

    if (input.kind === "image") {
      hint.dataset.i18n = "predict.drawHint";
      this.inputShape = {
        kind: "image",
        h: input.height as number,
        w: input.width as number,
        channels: input.channels as number,
        n: 0,
      };
      body.appendChild(this.buildCanvas());
    } else if (input.kind === "columns") {
      hint.dataset.i18n = "predict.valuesHint";
      this.inputShape = { kind: "columns", h: 0, w: 0, channels: 0, n: input.n as number };
      const row = document.createElement("div");
      row.className = "field-row";
      for (let i = 0; i < this.inputShape.n; i++) {
        const field = document.createElement("input");
        field.type = "number";
        field.step = "any";
        field.value = "0";
        field.className = "predict-value";
        row.appendChild(field);
      }
      body.appendChild(row);
    } else {
      hint.dataset.i18n = "predict.literalHint";
      this.inputShape = { kind: "custom", h: 0, w: 0, channels: 0, n: 0 };
      const area = document.createElement("textarea");
      area.className = "predict-literal";
      area.rows = 4;
      body.appendChild(area);
    }

    const controls = document.createElement("div");
    controls.className = "predict-controls";
    const run = document.createElement("button");
    run.type = "button";
    run.dataset.i18n = "predict.run";
    run.className = "predict-run";
    run.addEventListener("click", () => void this.run());
    controls.appendChild(run);
    if (input.kind === "image") {
      const clear = document.createElement("button");
      clear.type = "button";
      clear.dataset.i18n = "predict.clear";
      clear.addEventListener("click", () => this.clearCanvas());
      controls.appendChild(clear);
    }

    const output = document.createElement("div");
    output.className = "predict-output";

    this.root.appendChild(hint);
    this.root.appendChild(body);
    this.root.appendChild(controls);
    this.root.appendChild(output);
    applyTranslations(this.root);
  }

  buildLiteral(): string {
    if (this.inputShape.kind === "image" && this.canvas) {
      const ctx = this.canvas.getContext("2d");
      if (!ctx) return "[]";
      const img = ctx.getImageData(0, 0, this.canvas.width, this.canvas.height);
      return imageToLiteral(img, this.inputShape.h, this.inputShape.w, this.inputShape.channels);
    }
    if (this.inputShape.kind === "columns") {
      const values = Array.from(
        this.root.querySelectorAll<HTMLInputElement>(".predict-value"),
        (el) => parseFloat(el.value) || 0,
      );
      return columnsLiteral(values);
    }
    const area = this.root.querySelector<HTMLTextAreaElement>(".predict-literal");
    return area ? area.value : "[]";
  }

  private async run(): Promise<void> {
    const out = this.root.querySelector<HTMLElement>(".predict-output");
    if (!out) return;
    try {
      const result = await this.predictFn(this.buildLiteral());
      this.showOutput(out, result.output);
    } catch (err) {
      out.textContent = `${t("error.generic")}: ${err instanceof Error ? err.message : err}`;
      out.classList.add("error");
    }
  }

  private showOutput(out: HTMLElement, output: number[][]): void {
    out.classList.remove("error");
    out.textContent = "";
    const head = document.createElement("h4");
    head.dataset.i18n = "predict.output";
    head.textContent = t("predict.output");
    out.appendChild(head);
    const vector = output[0] ?? [];
    const max = Math.max(...vector.map((v) => Math.abs(v)), 1e-9);
    vector.forEach((v, i) => {
      const row = document.createElement("div");
      row.className = "out-row";
      const label = document.createElement("span");
      label.className = "out-label";
      label.textContent = this.categoryLabels?.[i] ?? String(i);
      const bar = document.createElement("span");
      bar.className = "out-bar";
      bar.style.width = `${Math.round((Math.abs(v) / max) * 160)}px`;
      const value = document.createElement("span");
      value.className = "out-value";
      value.textContent = v.toFixed(4);
      row.appendChild(label);
      row.appendChild(bar);
      row.appendChild(value);
      out.appendChild(row);
    });
  }

  private buildCanvas(): HTMLElement {
    const { h, w } = this.inputShape;
    const scale = Math.max(1, Math.floor(240 / Math.max(h, w, 1)));
    const canvas = document.createElement("canvas");
    canvas.width = w * scale;
    canvas.height = h * scale;
    canvas.className = "draw-canvas";
    this.canvas = canvas;
    const ctx = canvas.getContext("2d");
    if (ctx) {
      ctx.fillStyle = "#000";
      ctx.fillRect(0, 0, canvas.width, canvas.height);
    }
    let drawing = false;
    const paint = (e: PointerEvent) => {
      if (!drawing || !ctx) return;
      const rect = canvas.getBoundingClientRect();
      const x = ((e.clientX - rect.left) / rect.width) * canvas.width;
      const y = ((e.clientY - rect.top) / rect.height) * canvas.height;
      ctx.fillStyle = "#fff";
      ctx.beginPath();
      ctx.arc(x, y, BRUSH, 0, Math.PI * 2);
      ctx.fill();
    };
    canvas.addEventListener("pointerdown", (e) => {
      drawing = true;
      canvas.setPointerCapture(e.pointerId);
      paint(e);
    });
    canvas.addEventListener("pointermove", paint);
    canvas.addEventListener("pointerup", () => (drawing = false));
    canvas.addEventListener("pointerleave", () => (drawing = false));
    return canvas;
  }

  private clearCanvas(): void {
    if (!this.canvas) return;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.fillStyle = "#000";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
  }
}
