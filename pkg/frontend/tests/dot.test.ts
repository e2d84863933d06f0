import { describe, expect, it } from "vitest";

import { dotToSvg, layout, parseDot } from "../src/dot.js";
import { DOT_ITERATION_0, DOT_ITERATION_1 } from "./mock_service.js";

describe("DOT parsing", () => {
  it("reads nodes, shapes, fills, and edges from the server output", () => {
    const graph = parseDot(DOT_ITERATION_0);
    expect(graph.nodes).toHaveLength(6);
    expect(graph.edges).toHaveLength(6);

    const source = graph.nodes.find((n) => n.id === "source0")!;
    expect(source.shape).toBe("circle");
    expect(source.fill).toBe("#c8e6c9");

    const silent = graph.nodes.find((n) => n.id === "t0")!;
    expect(silent.shape).toBe("box");
    expect(silent.fill).toBe("black");
    expect(silent.label).toBe("");

    const labelled = graph.nodes.find((n) => n.id === "t1")!;
    expect(labelled.label).toBe("Receive Claim");
    expect(graph.edges).toContainEqual(["source0", "t1"]);
  });

  it("handles escaped quotes in labels", () => {
    const graph = parseDot('digraph g {\n  "t9" [shape=box, label="say \\"hi\\""];\n}');
    expect(graph.nodes[0]!.label).toBe('say "hi"');
  });
});

describe("layout", () => {
  it("layers nodes by distance from the source place", () => {
    const positioned = layout(parseDot(DOT_ITERATION_1));
    const byId = new Map(positioned.map((n) => [n.id, n]));
    expect(byId.get("source0")!.x).toBe(0);
    expect(byId.get("t0")!.x).toBe(1);
    expect(byId.get("p2")!.x).toBe(2);
    expect(byId.get("t1")!.x).toBe(3);
    expect(byId.get("sink1")!.x).toBe(4);
  });
});

describe("SVG rendering", () => {
  it("renders places as circles and transitions as boxes", () => {
    const svg = dotToSvg(DOT_ITERATION_0);
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg.match(/<circle /g)).toHaveLength(3);
    expect(svg.match(/<rect /g)).toHaveLength(3);
    expect(svg.match(/<line /g)).toHaveLength(6);
    expect(svg).toContain('fill="black"'); // the silent transition
    expect(svg).toContain(">Receive Claim</text>");
    expect(svg).toContain('marker-end="url(#arrow)"');
  });

  it("is deterministic", () => {
    expect(dotToSvg(DOT_ITERATION_1)).toBe(dotToSvg(DOT_ITERATION_1));
  });
});
