import type { SessionState, LayerJson } from "./api.js";
import { t, applyTranslations } from "./i18n.js";

// Editable model panel: input descriptor, one card per layer, loss and
// optimizer at the bottom. Every editable field carries data-path (the
// same path format the field_flag events use), so flags land by a
// simple selector lookup. Flags are kept in a map and re-applied after
// every rebuild; an SSE flag and a re-render can arrive in any order.

export interface PanelCallbacks {
  onEdit(kind: string, payload: Record<string, unknown>): void;
}

type Widget =
  | { w: "int" }
  | { w: "float" }
  | { w: "bool" }
  | { w: "pair" }
  | { w: "list" }
  | { w: "named"; options: string[] }
  | { w: "enum"; options: string[] };

const ACTIVATIONS = ["linear", "relu", "sigmoid", "tanh", "softmax", "elu"];
const INITIALIZERS = [
  "glorot_uniform",
  "he_uniform",
  "random_uniform",
  "random_normal",
  "zeros",
  "ones",
  "constant",
];
const REGULARIZERS = ["none", "l1", "l2"];
const PADDINGS = ["valid", "same"];
export const LOSSES = ["mse", "categorical_crossentropy"];

const LAYER_FIELDS: Record<string, [string, Widget][]> = {
  dense: [
    ["units", { w: "int" }],
    ["activation", { w: "named", options: ACTIVATIONS }],
    ["use_bias", { w: "bool" }],
    ["trainable", { w: "bool" }],
    ["kernel_initializer", { w: "named", options: INITIALIZERS }],
    ["bias_initializer", { w: "named", options: INITIALIZERS }],
    ["kernel_regularizer", { w: "named", options: REGULARIZERS }],
    ["bias_regularizer", { w: "named", options: REGULARIZERS }],
  ],
  conv2d: [
    ["filters", { w: "int" }],
    ["kernel_size", { w: "pair" }],
    ["stride", { w: "int" }],
    ["padding", { w: "enum", options: PADDINGS }],
    ["activation", { w: "named", options: ACTIVATIONS }],
    ["trainable", { w: "bool" }],
  ],
  max_pool2d: [
    ["pool_size", { w: "pair" }],
    ["stride", { w: "int" }],
    ["padding", { w: "enum", options: PADDINGS }],
  ],
  flatten: [],
  reshape: [["target", { w: "list" }]],
  dropout: [["rate", { w: "float" }]],
  activation: [["activation", { w: "named", options: ACTIVATIONS }]],
  batch_norm: [
    ["momentum", { w: "float" }],
    ["epsilon", { w: "float" }],
    ["trainable", { w: "bool" }],
  ],
  gaussian_noise: [["stddev", { w: "float" }]],
};

const OPTIMIZER_FIELDS: Record<string, string[]> = {
  adam: ["learning_rate", "beta1", "beta2", "epsilon"],
  sgd: ["learning_rate"],
};

// Fresh layers must arrive with their full parameter set; the service
// stores payloads verbatim and flags missing parameters as errors.
export const LAYER_DEFAULTS: Record<string, Record<string, unknown>> = {
  dense: {
    units: 8,
    activation: { name: "linear" },
    use_bias: true,
    trainable: true,
    kernel_initializer: { name: "glorot_uniform" },
    bias_initializer: { name: "zeros" },
    kernel_regularizer: { name: "none" },
    bias_regularizer: { name: "none" },
  },
  conv2d: {
    filters: 4,
    kernel_size: [3, 3],
    stride: 1,
    padding: "valid",
    activation: { name: "linear" },
    trainable: true,
  },
  max_pool2d: { pool_size: [2, 2], stride: 2, padding: "valid" },
  flatten: {},
  reshape: { target: [1] },
  dropout: { rate: 0.5 },
  activation: { activation: { name: "linear" } },
  batch_norm: { momentum: 0.99, epsilon: 0.001, trainable: true },
  gaussian_noise: { stddev: 0.1 },
};

export function freshLayer(kind: string): LayerJson {
  return { kind, params: JSON.parse(JSON.stringify(LAYER_DEFAULTS[kind] ?? {})) };
}

export function parsePair(text: string): number[] {
  return text
    .split(/[,\sx×]+/)
    .filter((p) => p.length > 0)
    .map((p) => parseInt(p, 10));
}

function namedValue(value: unknown): string {
  if (value && typeof value === "object" && "name" in (value as object)) {
    return String((value as { name: unknown }).name);
  }
  return String(value);
}

export class LayerPanel {
  private root: HTMLElement;
  private callbacks: PanelCallbacks;
  private flags = new Map<string, { state: string; message: string }>();
  private state: SessionState | null = null;

  constructor(root: HTMLElement, callbacks: PanelCallbacks) {
    this.root = root;
    this.callbacks = callbacks;
  }

  hasFocusedField(): boolean {
    const active = document.activeElement;
    return !!active && this.root.contains(active) && active.hasAttribute("data-path");
  }

  applyFlag(path: string, state: string, message: string): void {
    if (state === "invalid") this.flags.set(path, { state, message });
    else this.flags.delete(path);
    const el = this.root.querySelector<HTMLElement>(`[data-path="${path}"]`);
    if (!el) return;
    if (state === "invalid") {
      el.classList.add("invalid");
      el.title = message;
    } else {
      el.classList.remove("invalid");
      el.removeAttribute("title");
    }
  }

  render(state: SessionState): void {
    this.state = state;
    this.root.textContent = "";
    this.root.appendChild(this.inputCard(state));
    const list = document.createElement("div");
    list.className = "layer-list";
    state.model.layers.forEach((layer, i) => {
      list.appendChild(this.layerCard(layer, i, state.model.layers.length));
    });
    this.root.appendChild(list);
    this.root.appendChild(this.addLayerRow());
    this.root.appendChild(this.lossOptimizerCard(state));
    applyTranslations(this.root);
    for (const [path, flag] of this.flags) {
      const el = this.root.querySelector<HTMLElement>(`[data-path="${path}"]`);
      if (el) {
        el.classList.add("invalid");
        el.title = flag.message;
      }
    }
  }

  private emit(kind: string, payload: Record<string, unknown>): void {
    this.callbacks.onEdit(kind, payload);
  }

  private inputCard(state: SessionState): HTMLElement {
    const card = document.createElement("div");
    card.className = "card input-card";
    const head = document.createElement("h3");
    head.dataset.i18n = "panel.input";
    card.appendChild(head);
    const row = document.createElement("div");
    row.className = "field-row";
    const input = state.model.input;

    const kindSel = document.createElement("select");
    kindSel.dataset.path = "model.input";
    for (const k of ["columns", "image", "custom"]) {
      const opt = document.createElement("option");
      opt.value = k;
      opt.dataset.i18n = `input.${k}`;
      kindSel.appendChild(opt);
    }
    kindSel.value = input.kind;
    kindSel.addEventListener("change", () => {
      const descriptor =
        kindSel.value === "columns"
          ? { kind: "columns", n: 2 }
          : kindSel.value === "image"
            ? { kind: "image", height: 8, width: 8, channels: 3 }
            : { kind: "custom", shape: [4] };
      this.emit("set_input_descriptor", { input: descriptor });
    });
    row.appendChild(this.labeled("input.kind", kindSel));

    const numField = (labelKey: string, name: string, value: number) => {
      const el = document.createElement("input");
      el.type = "number";
      el.value = String(value);
      el.dataset.path = `model.input.${name}`;
      el.addEventListener("change", () => {
        const descriptor: Record<string, unknown> = { ...input, [name]: parseInt(el.value, 10) };
        this.emit("set_input_descriptor", { input: descriptor });
      });
      row.appendChild(this.labeled(labelKey, el));
    };

    if (input.kind === "columns") {
      numField("input.n", "n", input.n as number);
    } else if (input.kind === "image") {
      numField("input.height", "height", input.height as number);
      numField("input.width", "width", input.width as number);
      numField("input.channels", "channels", input.channels as number);
    } else {
      const el = document.createElement("input");
      el.type = "text";
      el.value = (input.shape as number[]).join(", ");
      el.dataset.path = "model.input.shape";
      el.addEventListener("change", () => {
        this.emit("set_input_descriptor", {
          input: { kind: "custom", shape: parsePair(el.value) },
        });
      });
      row.appendChild(this.labeled("input.shape", el));
    }
    card.appendChild(row);
    return card;
  }

  private layerCard(layer: LayerJson, index: number, total: number): HTMLElement {
    const card = document.createElement("div");
    card.className = "card layer-card";
    card.dataset.layerIndex = String(index);

    const head = document.createElement("div");
    head.className = "layer-head";
    const title = document.createElement("span");
    title.className = "layer-title";
    title.textContent = `${index} · ${layer.kind}`;
    head.appendChild(title);

    const controls = document.createElement("span");
    controls.className = "layer-controls";
    const mk = (label: string, titleKey: string, onClick: () => void, disabled = false) => {
      const btn = document.createElement("button");
      btn.type = "button";
      btn.textContent = label;
      btn.dataset.i18nTitle = titleKey;
      btn.disabled = disabled;
      btn.addEventListener("click", onClick);
      controls.appendChild(btn);
    };
    mk("↑", "panel.moveUp", () => this.emit("move_layer", { from_index: index, to_index: index - 1 }), index === 0);
    mk("↓", "panel.moveDown", () => this.emit("move_layer", { from_index: index, to_index: index + 1 }), index === total - 1);
    mk("×", "panel.remove", () => this.emit("remove_layer", { index }), total <= 1);
    head.appendChild(controls);
    card.appendChild(head);

    const fields = LAYER_FIELDS[layer.kind] ?? [];
    if (fields.length > 0) {
      const row = document.createElement("div");
      row.className = "field-row";
      for (const [name, widget] of fields) {
        row.appendChild(this.paramField(index, name, widget, layer.params[name]));
      }
      card.appendChild(row);
    }
    return card;
  }

  private paramField(index: number, name: string, widget: Widget, value: unknown): HTMLElement {
    const path = `layers[${index}].${name}`;
    let el: HTMLElement;
    const send = (v: unknown) => this.emit("set_param", { index, name, value: v });

    switch (widget.w) {
      case "int":
      case "float": {
        const input = document.createElement("input");
        input.type = "number";
        if (widget.w === "float") input.step = "any";
        input.value = String(value);
        input.addEventListener("change", () => {
          const parsed = widget.w === "int" ? parseInt(input.value, 10) : parseFloat(input.value);
          if (!Number.isNaN(parsed)) send(parsed);
        });
        el = input;
        break;
      }
      case "bool": {
        const input = document.createElement("input");
        input.type = "checkbox";
        input.checked = Boolean(value);
        input.addEventListener("change", () => send(input.checked));
        el = input;
        break;
      }
      case "pair":
      case "list": {
        const input = document.createElement("input");
        input.type = "text";
        input.value = Array.isArray(value) ? value.join(", ") : String(value);
        input.addEventListener("change", () => send(parsePair(input.value)));
        el = input;
        break;
      }
      case "named":
      case "enum": {
        const select = document.createElement("select");
        for (const option of widget.options) {
          const opt = document.createElement("option");
          opt.value = option;
          opt.textContent = option;
          select.appendChild(opt);
        }
        select.value = widget.w === "named" ? namedValue(value) : String(value);
        select.addEventListener("change", () => send(select.value));
        el = select;
        break;
      }
    }
    el.dataset.path = path;
    return this.labeled(`param.${name}`, el);
  }

  private addLayerRow(): HTMLElement {
    const row = document.createElement("div");
    row.className = "add-layer-row";
    const select = document.createElement("select");
    for (const kind of Object.keys(LAYER_FIELDS)) {
      const opt = document.createElement("option");
      opt.value = kind;
      opt.textContent = kind;
      select.appendChild(opt);
    }
    const btn = document.createElement("button");
    btn.type = "button";
    btn.dataset.i18n = "panel.addLayer";
    btn.addEventListener("click", () => {
      const count = this.state ? this.state.model.layers.length : 0;
      this.emit("add_layer", { index: count, layer: freshLayer(select.value) });
    });
    row.appendChild(select);
    row.appendChild(btn);
    return row;
  }

  private lossOptimizerCard(state: SessionState): HTMLElement {
    const card = document.createElement("div");
    card.className = "card loss-card";
    const head = document.createElement("h3");
    head.dataset.i18n = "panel.lossOptimizer";
    card.appendChild(head);
    const row = document.createElement("div");
    row.className = "field-row";

    const lossSel = document.createElement("select");
    for (const loss of LOSSES) {
      const opt = document.createElement("option");
      opt.value = loss;
      opt.textContent = loss;
      lossSel.appendChild(opt);
    }
    lossSel.value = state.model.loss;
    lossSel.dataset.path = "model.loss";
    lossSel.addEventListener("change", () => this.emit("set_loss", { loss: lossSel.value }));
    row.appendChild(this.labeled("panel.loss", lossSel));

    const optimizer = state.model.optimizer;
    const optSel = document.createElement("select");
    for (const kind of Object.keys(OPTIMIZER_FIELDS)) {
      const opt = document.createElement("option");
      opt.value = kind;
      opt.textContent = kind;
      optSel.appendChild(opt);
    }
    const OPTIMIZER_DEFAULTS: Record<string, Record<string, unknown>> = {
      adam: { kind: "adam", learning_rate: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 },
      sgd: { kind: "sgd", learning_rate: 0.01 },
    };
    optSel.value = optimizer.kind;
    optSel.dataset.path = "model.optimizer";
    optSel.addEventListener("change", () => {
      this.emit("set_optimizer", { optimizer: OPTIMIZER_DEFAULTS[optSel.value] });
    });
    row.appendChild(this.labeled("panel.optimizer", optSel));

    for (const name of OPTIMIZER_FIELDS[optimizer.kind] ?? []) {
      const input = document.createElement("input");
      input.type = "number";
      input.step = "any";
      input.value = String(optimizer[name]);
      input.dataset.path = `model.optimizer.${name}`;
      input.addEventListener("change", () => {
        const next = { ...optimizer, [name]: parseFloat(input.value) };
        this.emit("set_optimizer", { optimizer: next });
      });
      row.appendChild(this.labeled(`param.${name}`, input));
    }

    card.appendChild(row);
    return card;
  }

  private labeled(key: string, el: HTMLElement): HTMLElement {
    const wrap = document.createElement("label");
    wrap.className = "field";
    const span = document.createElement("span");
    span.dataset.i18n = key;
    wrap.appendChild(span);
    wrap.appendChild(el);
    return wrap;
  }
}
