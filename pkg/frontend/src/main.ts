import { api, connectEvents, ApiError } from "./api.js";
import type { SessionState, WorkbenchEvent, DatasetPreview } from "./api.js";
import { setLanguage, languageFromCookie, applyTranslations, t } from "./i18n.js";
import { LayerPanel } from "./layer_panel.js";
import { Ribbon } from "./ribbon.js";
import { LossPlot } from "./loss_plot.js";
import { PredictTab } from "./predict_tab.js";
import { DataTab } from "./data_tab.js";
import { renderMathDoc, renderMathUnavailable } from "./math_tab.js";
import type { MathDoc } from "./math_tab.js";
import { renderFcnn, renderLenet } from "./diagram_tab.js";
import type { FcnnDoc, LenetDoc } from "./diagram_tab.js";

const SESSION_KEY = "mlwb_session";

let sid = "";
let state: SessionState | null = null;
let lastInputJson = "";
let panel: LayerPanel;
let ribbon: Ribbon;
let plot: LossPlot;
let predictTab: PredictTab;
let dataTab: DataTab;

function statusLine(text: string, isError = false): void {
  const bar = document.getElementById("message-bar");
  if (!bar) return;
  bar.textContent = text;
  bar.classList.toggle("error", isError);
  if (text) {
    window.setTimeout(() => {
      if (bar.textContent === text) {
        bar.textContent = "";
        bar.classList.remove("error");
      }
    }, 6000);
  }
}

function applyState(next: SessionState): void {
  state = next;
  ribbon.update(next);
  applyTranslations(document.getElementById("ribbon") as HTMLElement);
  if (!panel.hasFocusedField()) panel.render(next);
  // keep the drawing canvas alive unless the input descriptor changed
  const inputJson = JSON.stringify(next.model.input);
  if (inputJson !== lastInputJson) {
    lastInputJson = inputJson;
    predictTab.render(next);
  }
}

async function refreshState(): Promise<void> {
  applyState(await api.getState(sid));
}

async function refreshPreview(): Promise<void> {
  try {
    const preview = await api.datasetPreview(sid, 8);
    predictTab.categoryLabels = preview.category_labels;
    dataTab.showPreview(preview);
  } catch {
    // no dataset yet
  }
}

async function refreshMath(): Promise<void> {
  const root = document.getElementById("tab-math") as HTMLElement;
  try {
    const doc = (await api.visualize(sid, "mathmode")) as unknown as MathDoc;
    renderMathDoc(doc, root);
  } catch (err) {
    renderMathUnavailable(err instanceof ApiError ? err.detail : String(err), root);
  }
}

async function refreshDiagram(style: "fcnn" | "lenet"): Promise<void> {
  const holder = document.getElementById("diagram-holder") as HTMLElement;
  const doc = await api.visualize(sid, style);
  holder.textContent = "";
  if (style === "fcnn") holder.appendChild(renderFcnn(doc as unknown as FcnnDoc));
  else holder.appendChild(renderLenet(doc as unknown as LenetDoc));
}

function currentDiagramStyle(): "fcnn" | "lenet" {
  const checked = document.querySelector<HTMLInputElement>("input[name=diagram-style]:checked");
  return checked?.value === "lenet" ? "lenet" : "fcnn";
}

function onEvent(event: WorkbenchEvent): void {
  switch (event.type) {
    case "field_flag":
      panel.applyFlag(event.path ?? "", event.state ?? "", event.message ?? "");
      break;
    case "model_changed":
      void refreshState();
      break;
    case "mode_changed":
      void refreshState();
      break;
    case "dataset_changed":
      void refreshState();
      void refreshPreview();
      break;
    case "train_event": {
      const kind = event.kind ?? "";
      plot.handleTrainEvent(kind, event.metrics);
      if (kind === "epoch_end" && event.epoch !== undefined) {
        const label = document.getElementById("epoch-label");
        if (label) label.textContent = `${t("train.epoch")} ${event.epoch + 1}`;
      }
      if (kind === "train_end" || kind === "aborted") void refreshState();
      break;
    }
    case "train_error":
      statusLine(event.message ?? "training failed", true);
      void refreshState();
      break;
    default:
      break;
  }
}

async function edit(kind: string, payload: Record<string, unknown>): Promise<void> {
  try {
    applyState(await api.edit(sid, kind, payload));
  } catch (err) {
    if (err instanceof ApiError) statusLine(err.detail, true);
    else statusLine(String(err), true);
    // the model may still have changed server-side (auto-fix chains)
    void refreshState();
  }
}

function wireTabs(): void {
  const buttons = Array.from(document.querySelectorAll<HTMLButtonElement>("nav [data-tab]"));
  for (const btn of buttons) {
    btn.addEventListener("click", () => {
      for (const other of buttons) other.classList.toggle("active", other === btn);
      document.querySelectorAll<HTMLElement>(".tab").forEach((tab) => {
        tab.hidden = tab.id !== `tab-${btn.dataset.tab}`;
      });
      if (btn.dataset.tab === "math") void refreshMath();
      if (btn.dataset.tab === "diagram") void refreshDiagram(currentDiagramStyle());
    });
  }
}

async function openSession(): Promise<SessionState> {
  const stored = window.localStorage.getItem(SESSION_KEY);
  if (stored) {
    try {
      const existing = await api.getState(stored);
      sid = stored;
      return existing;
    } catch {
      window.localStorage.removeItem(SESSION_KEY);
    }
  }
  const created = await api.createSession();
  sid = created.id;
  window.localStorage.setItem(SESSION_KEY, sid);
  return created;
}

async function boot(): Promise<void> {
  await setLanguage(languageFromCookie() ?? "en");

  ribbon = new Ribbon(document.getElementById("ribbon") as HTMLElement, {
    onUndo: () => void api.undo(sid).then(applyState).catch((e) => statusLine(String(e), true)),
    onRedo: () => void api.redo(sid).then(applyState).catch((e) => statusLine(String(e), true)),
    onMode: (mode) => void api.setMode(sid, mode).then(applyState),
    onTrain: (config) => {
      plot.reset();
      void api.train(sid, config).then(
        () => refreshState(),
        (e) => statusLine(e instanceof ApiError ? e.detail : String(e), true),
      );
    },
    onStop: () => void api.stopTraining(sid),
  });

  panel = new LayerPanel(document.getElementById("layer-panel") as HTMLElement, {
    onEdit: (kind, payload) => void edit(kind, payload),
  });
  plot = new LossPlot(
    document.getElementById("loss-canvas") as HTMLCanvasElement,
    document.getElementById("loss-label") as HTMLElement,
  );
  predictTab = new PredictTab(document.getElementById("tab-predict") as HTMLElement, (literal) =>
    api.predict(sid, literal),
  );
  dataTab = new DataTab(document.getElementById("tab-data") as HTMLElement, {
    importTensor: async (x, y) => {
      const preview = await api.importTensor(sid, x, y);
      await refreshState();
      return preview;
    },
    importCsv: async (text, config) => {
      const preview = await api.importCsv(sid, text, config);
      await refreshState();
      return preview;
    },
    importImages: async (payload) => {
      const preview = await api.importImages(sid, payload);
      await refreshState();
      return preview;
    },
  });

  wireTabs();
  document.querySelectorAll<HTMLInputElement>("input[name=diagram-style]").forEach((radio) => {
    radio.addEventListener("change", () => void refreshDiagram(currentDiagramStyle()));
  });

  const opened = await openSession();
  dataTab.render(null);
  applyState(opened);
  await refreshPreview();
  applyTranslations(document);

  connectEvents(sid, onEvent, (connected) => {
    ribbon.setConnected(connected);
    applyTranslations(document.getElementById("ribbon") as HTMLElement);
  });
}

void boot();
