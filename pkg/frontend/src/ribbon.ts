import type { SessionState } from "./api.js";
import { LANGUAGES, currentLanguage, setLanguage } from "./i18n.js";

// Top bar: undo/redo, mode, train controls, connection dot, language.
// Pure DOM wiring; every action goes through the callbacks.

export interface RibbonCallbacks {
  onUndo(): void;
  onRedo(): void;
  onMode(mode: string): void;
  onTrain(config: { epochs: number; batch_size: number; seed: number }): void;
  onStop(): void;
}

export class Ribbon {
  private root: HTMLElement;
  private callbacks: RibbonCallbacks;

  constructor(root: HTMLElement, callbacks: RibbonCallbacks) {
    this.root = root;
    this.callbacks = callbacks;
    this.wire();
  }

  private el<T extends HTMLElement>(selector: string): T {
    const found = this.root.querySelector<T>(selector);
    if (!found) throw new Error(`ribbon element missing: ${selector}`);
    return found;
  }

  private wire(): void {
    this.el<HTMLButtonElement>("#btn-undo").addEventListener("click", () => this.callbacks.onUndo());
    this.el<HTMLButtonElement>("#btn-redo").addEventListener("click", () => this.callbacks.onRedo());
    this.el<HTMLSelectElement>("#mode-select").addEventListener("change", (e) => {
      this.callbacks.onMode((e.target as HTMLSelectElement).value);
    });
    this.el<HTMLButtonElement>("#btn-train").addEventListener("click", () => {
      this.callbacks.onTrain({
        epochs: parseInt(this.el<HTMLInputElement>("#train-epochs").value, 10) || 1,
        batch_size: parseInt(this.el<HTMLInputElement>("#train-batch").value, 10) || 1,
        seed: parseInt(this.el<HTMLInputElement>("#train-seed").value, 10) || 0,
      });
    });
    this.el<HTMLButtonElement>("#btn-stop").addEventListener("click", () => this.callbacks.onStop());

    const langSel = this.el<HTMLSelectElement>("#lang-select");
    langSel.textContent = "";
    for (const lang of LANGUAGES) {
      const opt = document.createElement("option");
      opt.value = lang;
      opt.textContent = lang;
      langSel.appendChild(opt);
    }
    langSel.value = currentLanguage();
    langSel.addEventListener("change", () => void setLanguage(langSel.value));
  }

  update(state: SessionState): void {
    this.el<HTMLButtonElement>("#btn-undo").disabled = !state.can_undo;
    this.el<HTMLButtonElement>("#btn-redo").disabled = !state.can_redo;
    this.el<HTMLSelectElement>("#mode-select").value = state.mode;
    this.el<HTMLButtonElement>("#btn-train").disabled = state.training || !state.has_dataset;
    this.el<HTMLButtonElement>("#btn-stop").disabled = !state.training;
    const status = this.el<HTMLElement>("#train-status");
    status.dataset.i18n = state.training ? "status.training" : "status.idle";
  }

  setConnected(connected: boolean): void {
    const dot = this.el<HTMLElement>("#live-dot");
    dot.classList.toggle("disconnected", !connected);
    const label = this.el<HTMLElement>("#live-label");
    label.dataset.i18n = connected ? "status.connected" : "status.disconnected";
  }
}
