// Renders the LaTeX subset the service emits into plain HTML spans.
// Covered: \mathrm \text \frac \sqrt \hat \sum \max \log \tanh greek
// letters, \times \odot \geq \quad, sub/superscripts, \left( \right),
// and the pmatrix / cases environments. Anything else falls through
// as literal text, so an unknown command degrades visibly instead of
// breaking the tab.

const SYMBOLS: Record<string, string> = {
  times: "×",
  odot: "⊙",
  geq: "≥",
  sigma: "σ",
  alpha: "α",
  mu: "μ",
  epsilon: "ε",
  sum: "Σ",
  max: "max",
  log: "log",
  tanh: "tanh",
  quad: " ",
};

type Token =
  | { kind: "cmd"; name: string }
  | { kind: "char"; value: string }
  | { kind: "open" }
  | { kind: "close" }
  | { kind: "sup" }
  | { kind: "sub" }
  | { kind: "amp" }
  | { kind: "newrow" };

function tokenize(src: string): Token[] {
  const toks: Token[] = [];
  let i = 0;
  while (i < src.length) {
    const c = src[i];
    if (c === "\\") {
      if (src[i + 1] === "\\") {
        toks.push({ kind: "newrow" });
        i += 2;
        continue;
      }
      let j = i + 1;
      while (j < src.length && /[a-zA-Z]/.test(src[j])) j++;
      if (j > i + 1) {
        toks.push({ kind: "cmd", name: src.slice(i + 1, j) });
        i = j;
      } else {
        toks.push({ kind: "char", value: src[i + 1] ?? "\\" });
        i += 2;
      }
      continue;
    }
    if (c === "{") toks.push({ kind: "open" });
    else if (c === "}") toks.push({ kind: "close" });
    else if (c === "^") toks.push({ kind: "sup" });
    else if (c === "_") toks.push({ kind: "sub" });
    else if (c === "&") toks.push({ kind: "amp" });
    else toks.push({ kind: "char", value: c });
    i++;
  }
  return toks;
}

function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

class Renderer {
  private toks: Token[];
  private pos = 0;

  constructor(src: string) {
    this.toks = tokenize(src);
  }

  render(): string {
    return this.sequence(() => this.pos >= this.toks.length);
  }

  private peek(): Token | undefined {
    return this.toks[this.pos];
  }

  private next(): Token | undefined {
    return this.toks[this.pos++];
  }

  // A sequence of atoms with postfix ^ and _ applied to the piece
  // rendered just before them.
  private sequence(done: () => boolean): string {
    let out = "";
    while (!done()) {
      const tok = this.peek();
      if (!tok) break;
      if (tok.kind === "sup" || tok.kind === "sub") {
        this.next();
        const arg = this.atom();
        out += tok.kind === "sup" ? `<sup>${arg}</sup>` : `<sub>${arg}</sub>`;
        continue;
      }
      out += this.atom();
    }
    return out;
  }

  private atom(): string {
    const tok = this.next();
    if (!tok) return "";
    switch (tok.kind) {
      case "open":
        return this.group();
      case "close":
        return "";
      case "char":
        return escapeHtml(tok.value);
      case "cmd":
        return this.command(tok.name);
      case "amp":
        return " ";
      case "newrow":
        return "<br>";
      default:
        return "";
    }
  }

  // Caller consumed "{"; render until the matching "}".
  private group(): string {
    let depth = 1;
    const done = () => {
      const tok = this.peek();
      if (!tok) return true;
      if (tok.kind === "open") depth++;
      if (tok.kind === "close") {
        depth--;
        if (depth === 0) {
          this.next();
          return true;
        }
      }
      return false;
    };
    return this.sequence(done);
  }

  private argument(): string {
    const tok = this.peek();
    if (tok && tok.kind === "open") {
      this.next();
      return this.group();
    }
    return this.atom();
  }

  private rawArgument(): string {
    // Argument as plain text, for \begin{...} names.
    const tok = this.peek();
    if (!tok || tok.kind !== "open") return "";
    this.next();
    let name = "";
    let t = this.next();
    while (t && t.kind !== "close") {
      if (t.kind === "char") name += t.value;
      t = this.next();
    }
    return name;
  }

  private command(name: string): string {
    if (name in SYMBOLS) {
      const cls = name === "sum" ? ' class="mm-big"' : "";
      return `<span${cls}>${SYMBOLS[name]}</span>`;
    }
    switch (name) {
      case "mathrm":
      case "text":
        return `<span class="mm-rm">${this.argument()}</span>`;
      case "frac": {
        const num = this.argument();
        const den = this.argument();
        return `<span class="mm-frac"><span class="mm-num">${num}</span><span class="mm-den">${den}</span></span>`;
      }
      case "sqrt":
        return `<span class="mm-sqrt">√<span class="mm-rad">${this.argument()}</span></span>`;
      case "hat":
        return `${this.argument()}̂`;
      case "left": {
        const open = this.atom();
        return `<span class="mm-paren">${open}</span>`;
      }
      case "right": {
        const close = this.atom();
        return `<span class="mm-paren">${close}</span>`;
      }
      case "begin": {
        const env = this.rawArgument();
        return this.environment(env);
      }
      case "end":
        this.rawArgument();
        return "";
      default:
        return escapeHtml(name);
    }
  }

  private environment(env: string): string {
    const rows: string[][] = [[""]];
    const isEnd = () => {
      const tok = this.peek();
      return !tok || (tok.kind === "cmd" && tok.name === "end");
    };
    while (!isEnd()) {
      const tok = this.peek() as Token;
      if (tok.kind === "amp") {
        this.next();
        rows[rows.length - 1].push("");
        continue;
      }
      if (tok.kind === "newrow") {
        this.next();
        rows.push([""]);
        continue;
      }
      if (tok.kind === "sup" || tok.kind === "sub") {
        this.next();
        const arg = this.atom();
        const row = rows[rows.length - 1];
        row[row.length - 1] += tok.kind === "sup" ? `<sup>${arg}</sup>` : `<sub>${arg}</sub>`;
        continue;
      }
      const row = rows[rows.length - 1];
      row[row.length - 1] += this.atom();
    }
    if (this.peek()) {
      this.next();
      this.rawArgument();
    }
    const body = rows
      .map((cells) => `<tr>${cells.map((c) => `<td>${c.trim() || "&nbsp;"}</td>`).join("")}</tr>`)
      .join("");
    const cls = env === "cases" ? "mm-cases" : "mm-matrix";
    return `<span class="${cls}"><table><tbody>${body}</tbody></table></span>`;
  }
}

export function renderLatex(src: string): string {
  return new Renderer(src).render();
}
