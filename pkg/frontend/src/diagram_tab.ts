// Client-side SVG for the two diagram styles the service describes.
// fcnn: columns of circles joined by edges. lenet: stacked slabs whose
// footprint follows the activation shape.

export interface FcnnColumn {
  layer_index: number | null;
  label: string;
  units: number;
  shown: number;
  ellipsis: boolean;
}

export interface FcnnDoc {
  style: string;
  columns: FcnnColumn[];
  edges: { from_column: number; to_column: number; pairs: [number, number][] }[];
}

export interface LenetBox {
  layer_index: number | null;
  kind: string;
  label: string;
  shape: number[];
}

export interface LenetDoc {
  style: string;
  boxes: LenetBox[];
}

const SVG_NS = "http://www.w3.org/2000/svg";
const COL_GAP = 96;
const UNIT_GAP = 30;
const RADIUS = 9;

function svgEl<K extends keyof SVGElementTagNameMap>(tag: K): SVGElementTagNameMap[K] {
  return document.createElementNS(SVG_NS, tag);
}

function unitY(i: number, shown: number, height: number): number {
  const columnHeight = (shown - 1) * UNIT_GAP;
  return height / 2 - columnHeight / 2 + i * UNIT_GAP;
}

export function renderFcnn(doc: FcnnDoc): SVGSVGElement {
  const maxShown = Math.max(...doc.columns.map((c) => c.shown), 1);
  const height = Math.max(maxShown * UNIT_GAP + 70, 160);
  const width = doc.columns.length * COL_GAP + 40;

  const svg = svgEl("svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "diagram-svg");

  const colX = (c: number) => 40 + c * COL_GAP;

  for (const edge of doc.edges) {
    const from = doc.columns[edge.from_column];
    const to = doc.columns[edge.to_column];
    for (const [a, b] of edge.pairs) {
      const line = svgEl("line");
      line.setAttribute("x1", String(colX(edge.from_column) + RADIUS));
      line.setAttribute("y1", String(unitY(a, from.shown, height)));
      line.setAttribute("x2", String(colX(edge.to_column) - RADIUS));
      line.setAttribute("y2", String(unitY(b, to.shown, height)));
      line.setAttribute("class", "fcnn-edge");
      svg.appendChild(line);
    }
  }

  doc.columns.forEach((col, c) => {
    for (let i = 0; i < col.shown; i++) {
      const circle = svgEl("circle");
      circle.setAttribute("cx", String(colX(c)));
      circle.setAttribute("cy", String(unitY(i, col.shown, height)));
      circle.setAttribute("r", String(RADIUS));
      circle.setAttribute("class", "fcnn-unit");
      svg.appendChild(circle);
    }
    if (col.ellipsis) {
      const dots = svgEl("text");
      dots.setAttribute("x", String(colX(c)));
      dots.setAttribute("y", String(unitY(col.shown, col.shown, height) + 4));
      dots.setAttribute("class", "fcnn-ellipsis");
      dots.setAttribute("text-anchor", "middle");
      dots.textContent = "⋮";
      svg.appendChild(dots);
    }
    const label = svgEl("text");
    label.setAttribute("x", String(colX(c)));
    label.setAttribute("y", String(height - 12));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("class", "diagram-label");
    label.textContent = col.ellipsis ? `${col.label} (${col.units})` : col.label;
    svg.appendChild(label);
  });

  return svg;
}

export function renderLenet(doc: LenetDoc): SVGSVGElement {
  const svg = svgEl("svg");
  const boxW = 110;
  const width = doc.boxes.length * boxW + 50;
  const height = 220;
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "diagram-svg");

  const maxSide = Math.max(
    ...doc.boxes.map((b) => (b.shape.length >= 2 ? Math.max(b.shape[0], b.shape[1]) : b.shape[0] ?? 1)),
    1,
  );
  const scale = 100 / maxSide;

  doc.boxes.forEach((box, i) => {
    const cx = 40 + i * boxW;
    const cy = height / 2 - 15;
    let bw: number;
    let bh: number;
    let depth: number;
    if (box.shape.length >= 3) {
      bh = Math.max(box.shape[0] * scale, 10);
      bw = Math.max(box.shape[1] * scale * 0.6, 8);
      depth = Math.min(box.shape[2], 8);
    } else if (box.shape.length === 2) {
      bh = Math.max(box.shape[0] * scale, 10);
      bw = Math.max(box.shape[1] * scale * 0.6, 8);
      depth = 1;
    } else {
      bh = Math.max(Math.min(box.shape[0] ?? 1, 24) * 4, 12);
      bw = 10;
      depth = 1;
    }
    for (let d = depth - 1; d >= 0; d--) {
      const rect = svgEl("rect");
      rect.setAttribute("x", String(cx - bw / 2 + d * 4));
      rect.setAttribute("y", String(cy - bh / 2 - d * 4));
      rect.setAttribute("width", String(bw));
      rect.setAttribute("height", String(bh));
      rect.setAttribute("class", d === 0 ? "lenet-box" : "lenet-box back");
      svg.appendChild(rect);
    }
    const label = svgEl("text");
    label.setAttribute("x", String(cx));
    label.setAttribute("y", String(height - 18));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("class", "diagram-label");
    label.textContent = box.label;
    svg.appendChild(label);
  });

  return svg;
}
