import { describe, expect, it } from "vitest";
import { renderFcnn, renderLenet } from "../src/diagram_tab.js";
import type { FcnnDoc, LenetDoc } from "../src/diagram_tab.js";
import { sniffColumns } from "../src/data_tab.js";

describe("renderFcnn", () => {
  const doc: FcnnDoc = {
    style: "fcnn",
    columns: [
      { layer_index: -1, label: "input", units: 2, shown: 2, ellipsis: false },
      { layer_index: 0, label: "dense", units: 64, shown: 8, ellipsis: true },
      { layer_index: 1, label: "dense", units: 1, shown: 1, ellipsis: false },
    ],
    edges: [
      { from_column: 0, to_column: 1, pairs: [[0, 0], [0, 1], [1, 0], [1, 1]] },
      { from_column: 1, to_column: 2, pairs: [[0, 0], [1, 0]] },
    ],
  };

  it("draws one circle per shown unit", () => {
    const svg = renderFcnn(doc);
    expect(svg.querySelectorAll(".fcnn-unit").length).toBe(11);
  });

  it("draws one line per edge pair", () => {
    const svg = renderFcnn(doc);
    expect(svg.querySelectorAll(".fcnn-edge").length).toBe(6);
  });

  it("marks truncated columns with an ellipsis and the true unit count", () => {
    const svg = renderFcnn(doc);
    expect(svg.querySelectorAll(".fcnn-ellipsis").length).toBe(1);
    const labels = Array.from(svg.querySelectorAll(".diagram-label"), (el) => el.textContent);
    expect(labels).toContain("dense (64)");
  });
});

describe("renderLenet", () => {
  const doc: LenetDoc = {
    style: "lenet",
    boxes: [
      { layer_index: -1, kind: "input", label: "input 8×8×3", shape: [8, 8, 3] },
      { layer_index: 0, kind: "conv2d", label: "conv 6×6×4", shape: [6, 6, 4] },
      { layer_index: 1, kind: "flatten", label: "flatten 144", shape: [144] },
    ],
  };

  it("stacks one slab per channel up to the cap", () => {
    const svg = renderLenet(doc);
    const boxes = svg.querySelectorAll("rect");
    expect(boxes.length).toBe(3 + 4 + 1);
    expect(svg.querySelectorAll("rect.back").length).toBe(2 + 3);
  });

  it("labels every stage", () => {
    const svg = renderLenet(doc);
    const labels = Array.from(svg.querySelectorAll(".diagram-label"), (el) => el.textContent);
    expect(labels).toEqual(["input 8×8×3", "conv 6×6×4", "flatten 144"]);
  });
});

describe("sniffColumns", () => {
  it("reads header names from the first line", () => {
    expect(sniffColumns("a,b,label\n1,2,x\n", ",")).toEqual(["a", "b", "label"]);
    expect(sniffColumns("x;y\n", ";")).toEqual(["x", "y"]);
    expect(sniffColumns("", ",")).toEqual([]);
  });
});
