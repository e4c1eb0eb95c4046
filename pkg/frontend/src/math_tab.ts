import { t } from "./i18n.js";
import { renderLatex } from "./latex.js";

// Equation view. The service returns one lhs/rhs pair per layer plus
// the activation and loss definitions; everything renders through the
// local LaTeX subset.

export interface MathDoc {
  layers: { index: number; kind: string; lhs: string; rhs_latex: string }[];
  activations: Record<string, string>;
  loss_name: string;
  loss_definition: string;
}

export function renderMathDoc(doc: MathDoc, root: HTMLElement): void {
  root.textContent = "";
  for (const layer of doc.layers) {
    const block = document.createElement("div");
    block.className = "math-block";
    block.innerHTML = `${renderLatex(layer.lhs)} = ${renderLatex(layer.rhs_latex)}`;
    root.appendChild(block);
  }
  const defs = document.createElement("div");
  defs.className = "math-defs";
  for (const latex of Object.values(doc.activations)) {
    const line = document.createElement("div");
    line.className = "math-def";
    line.innerHTML = renderLatex(latex);
    defs.appendChild(line);
  }
  const loss = document.createElement("div");
  loss.className = "math-def";
  loss.innerHTML = renderLatex(doc.loss_definition);
  defs.appendChild(loss);
  root.appendChild(defs);
}

export function renderMathUnavailable(reason: string, root: HTMLElement): void {
  root.textContent = "";
  const note = document.createElement("p");
  note.className = "hint";
  note.textContent = `${t("math.unavailable")} ${reason}`;
  root.appendChild(note);
}
