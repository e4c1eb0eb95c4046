import type { DatasetPreview } from "./api.js";
import { t, applyTranslations } from "./i18n.js";

// Import tab: tensor literals, CSV with column selection, and image
// files. Imports go through callbacks so this module stays free of
// fetch wiring.

export interface DataCallbacks {
  importTensor(x: string, y: string): Promise<DatasetPreview>;
  importCsv(text: string, config: object): Promise<DatasetPreview>;
  importImages(payload: object): Promise<DatasetPreview>;
}

const XOR_X = "[[0, 0], [0, 1], [1, 0], [1, 1]]";
const XOR_Y = "[[0], [1], [1], [0]]";

interface StagedImage {
  label: string;
  name: string;
  data_base64: string;
}

export function sniffColumns(text: string, separator: string): string[] {
  const firstLine = text.split(/\r?\n/, 1)[0] ?? "";
  return firstLine
    .split(separator)
    .map((c) => c.trim())
    .filter((c) => c.length > 0);
}

export class DataTab {
  private root: HTMLElement;
  private callbacks: DataCallbacks;
  private staged: StagedImage[] = [];

  constructor(root: HTMLElement, callbacks: DataCallbacks) {
    this.root = root;
    this.callbacks = callbacks;
  }

  render(preview: DatasetPreview | null): void {
    this.root.textContent = "";
    this.root.appendChild(this.tensorSection());
    this.root.appendChild(this.csvSection());
    this.root.appendChild(this.imageSection());
    this.root.appendChild(this.previewSection(preview));
    applyTranslations(this.root);
  }

  showPreview(preview: DatasetPreview): void {
    const holder = this.root.querySelector<HTMLElement>(".preview-holder");
    if (!holder) return;
    holder.textContent = "";
    holder.appendChild(this.previewTable(preview));
  }

  private section(titleKey: string, cls: string): HTMLElement {
    const card = document.createElement("div");
    card.className = `card ${cls}`;
    const head = document.createElement("h3");
    head.dataset.i18n = titleKey;
    card.appendChild(head);
    return card;
  }

  private report(card: HTMLElement, run: () => Promise<DatasetPreview>): void {
    const note = document.createElement("p");
    note.className = "import-note";
    card.appendChild(note);
    void run()
      .then((preview) => {
        note.classList.remove("error");
        note.textContent = `${preview.n} ${t("data.rows")}`;
        if (preview.adapted_output_layer) {
          note.textContent += ` · ${t("data.adapted")}`;
        }
        this.showPreview(preview);
      })
      .catch((err) => {
        note.classList.add("error");
        note.textContent = `${t("error.generic")}: ${err instanceof Error ? err.message : err}`;
      });
  }

  private tensorSection(): HTMLElement {
    const card = this.section("data.tensor", "tensor-import");
    const xField = document.createElement("textarea");
    xField.rows = 2;
    xField.value = XOR_X;
    xField.className = "tensor-x";
    const yField = document.createElement("textarea");
    yField.rows = 2;
    yField.value = XOR_Y;
    yField.className = "tensor-y";
    const btn = document.createElement("button");
    btn.type = "button";
    btn.dataset.i18n = "data.import";
    btn.addEventListener("click", () => {
      this.report(card, () => this.callbacks.importTensor(xField.value, yField.value));
    });
    card.appendChild(this.labeled("data.x", xField));
    card.appendChild(this.labeled("data.y", yField));
    card.appendChild(btn);
    return card;
  }

  private csvSection(): HTMLElement {
    const card = this.section("data.csv", "csv-import");
    const area = document.createElement("textarea");
    area.rows = 5;
    area.dataset.i18nPlaceholder = "data.csvText";
    area.className = "csv-text";

    const file = document.createElement("input");
    file.type = "file";
    file.accept = ".csv,text/csv";
    file.addEventListener("change", () => {
      const f = file.files?.[0];
      if (!f) return;
      const reader = new FileReader();
      reader.onload = () => {
        area.value = String(reader.result ?? "");
        refreshColumns();
      };
      reader.readAsText(f);
    });

    const sep = document.createElement("input");
    sep.type = "text";
    sep.value = ",";
    sep.size = 2;
    sep.className = "csv-sep";

    const inputCols = document.createElement("select");
    inputCols.multiple = true;
    inputCols.className = "csv-inputs";
    const targetCols = document.createElement("select");
    targetCols.multiple = true;
    targetCols.className = "csv-targets";

    const refreshColumns = () => {
      const columns = sniffColumns(area.value, sep.value || ",");
      for (const sel of [inputCols, targetCols]) {
        sel.textContent = "";
        for (const col of columns) {
          const opt = document.createElement("option");
          opt.value = col;
          opt.textContent = col;
          sel.appendChild(opt);
        }
      }
    };
    area.addEventListener("change", refreshColumns);
    sep.addEventListener("change", refreshColumns);

    const btn = document.createElement("button");
    btn.type = "button";
    btn.dataset.i18n = "data.import";
    btn.addEventListener("click", () => {
      const selected = (sel: HTMLSelectElement) =>
        Array.from(sel.selectedOptions).map((o) => o.value);
      this.report(card, () =>
        this.callbacks.importCsv(area.value, {
          input_columns: selected(inputCols),
          target_columns: selected(targetCols),
          separator: sep.value || ",",
        }),
      );
    });

    card.appendChild(area);
    card.appendChild(file);
    const row = document.createElement("div");
    row.className = "field-row";
    row.appendChild(this.labeled("data.separator", sep));
    row.appendChild(this.labeled("data.inputCols", inputCols));
    row.appendChild(this.labeled("data.targetCols", targetCols));
    card.appendChild(row);
    card.appendChild(btn);
    return card;
  }

  private imageSection(): HTMLElement {
    const card = this.section("data.images", "image-import");
    const label = document.createElement("input");
    label.type = "text";
    label.className = "image-label";
    const files = document.createElement("input");
    files.type = "file";
    files.accept = "image/*";
    files.multiple = true;
    const count = document.createElement("span");
    count.className = "image-count";

    files.addEventListener("change", () => {
      const list = Array.from(files.files ?? []);
      for (const f of list) {
        const reader = new FileReader();
        reader.onload = () => {
          const url = String(reader.result ?? "");
          const base64 = url.slice(url.indexOf(",") + 1);
          this.staged.push({ label: label.value, name: f.name, data_base64: base64 });
          count.textContent = `${this.staged.length} ${t("data.fileCount")}`;
        };
        reader.readAsDataURL(f);
      }
      files.value = "";
    });

    const sizeH = document.createElement("input");
    sizeH.type = "number";
    sizeH.value = "32";
    sizeH.className = "image-h";
    const sizeW = document.createElement("input");
    sizeW.type = "number";
    sizeW.value = "32";
    sizeW.className = "image-w";

    const btn = document.createElement("button");
    btn.type = "button";
    btn.dataset.i18n = "data.import";
    btn.addEventListener("click", () => {
      const payload = {
        files: this.staged,
        target_h: parseInt(sizeH.value, 10),
        target_w: parseInt(sizeW.value, 10),
      };
      this.report(card, async () => {
        const preview = await this.callbacks.importImages(payload);
        this.staged = [];
        count.textContent = "";
        return preview;
      });
    });

    const row = document.createElement("div");
    row.className = "field-row";
    row.appendChild(this.labeled("data.label", label));
    row.appendChild(this.labeled("data.addFiles", files));
    row.appendChild(this.labeled("data.targetSize", sizeH));
    row.appendChild(sizeW);
    row.appendChild(count);
    card.appendChild(row);
    card.appendChild(btn);
    return card;
  }

  private previewSection(preview: DatasetPreview | null): HTMLElement {
    const card = this.section("data.preview", "dataset-preview");
    const holder = document.createElement("div");
    holder.className = "preview-holder";
    if (preview) holder.appendChild(this.previewTable(preview));
    else {
      const p = document.createElement("p");
      p.className = "hint";
      p.dataset.i18n = "status.noDataset";
      holder.appendChild(p);
    }
    card.appendChild(holder);
    return card;
  }

  private previewTable(preview: DatasetPreview): HTMLElement {
    const wrap = document.createElement("div");
    const meta = document.createElement("p");
    meta.className = "hint";
    meta.textContent =
      `${preview.n} ${t("data.rows")} · x ${JSON.stringify(preview.x_shape)}` +
      ` · y ${JSON.stringify(preview.y_shape)} · ${preview.source}`;
    wrap.appendChild(meta);

    if (Array.isArray(preview.x) && preview.x.length > 0 && !Array.isArray((preview.x[0] as unknown[])[0])) {
      const table = document.createElement("table");
      table.className = "preview-table";
      const body = document.createElement("tbody");
      preview.x.forEach((row, i) => {
        const tr = document.createElement("tr");
        for (const v of row as unknown[]) {
          const td = document.createElement("td");
          td.textContent = String(v);
          tr.appendChild(td);
        }
        const sep = document.createElement("td");
        sep.textContent = "→";
        tr.appendChild(sep);
        for (const v of (preview.y[i] ?? []) as unknown[]) {
          const td = document.createElement("td");
          td.className = "target-cell";
          td.textContent = String(v);
          tr.appendChild(td);
        }
        body.appendChild(tr);
      });
      table.appendChild(body);
      wrap.appendChild(table);
    }
    return wrap;
  }

  private labeled(key: string, el: HTMLElement): HTMLElement {
    const wrapEl = document.createElement("label");
    wrapEl.className = "field";
    const span = document.createElement("span");
    span.dataset.i18n = key;
    wrapEl.appendChild(span);
    wrapEl.appendChild(el);
    return wrapEl;
  }
}
