/** Client-side rendering of the server's workflow-net DOT output.
 *
 * The server emits a fixed DOT shape (node statements with attribute lists,
 * then edge statements); layout happens entirely here, by breadth-first
 * layering from the source place.
 */

export interface DotNode {
  id: string;
  shape: "circle" | "box";
  label: string;
  fill: string | null;
}

export interface DotGraph {
  nodes: DotNode[];
  edges: Array<[string, string]>;
}

const NODE_LINE = /^"((?:[^"\\]|\\.)*)"\s+\[(.*)\];$/;
const EDGE_LINE = /^"((?:[^"\\]|\\.)*)"\s*->\s*"((?:[^"\\]|\\.)*)";$/;

function unescape(text: string): string {
  return text.replace(/\\(.)/g, "$1");
}

function parseAttributes(text: string): Map<string, string> {
  const attrs = new Map<string, string>();
  let position = 0;
  while (position < text.length) {
    const equals = text.indexOf("=", position);
    if (equals < 0) break;
    const key = text.slice(position, equals).replace(/^[,\s]+/, "").trim();
    let value: string;
    let next: number;
    if (text[equals + 1] === '"') {
      let end = equals + 2;
      while (end < text.length && (text[end] !== '"' || text[end - 1] === "\\")) end++;
      value = unescape(text.slice(equals + 2, end));
      next = end + 1;
    } else {
      let end = text.indexOf(",", equals);
      if (end < 0) end = text.length;
      value = text.slice(equals + 1, end).trim();
      next = end + 1;
    }
    attrs.set(key, value);
    position = next;
  }
  return attrs;
}

export function parseDot(dot: string): DotGraph {
  const nodes: DotNode[] = [];
  const edges: Array<[string, string]> = [];
  for (const raw of dot.split("\n")) {
    const line = raw.trim();
    const edge = EDGE_LINE.exec(line);
    if (edge) {
      edges.push([unescape(edge[1]!), unescape(edge[2]!)]);
      continue;
    }
    const node = NODE_LINE.exec(line);
    if (node) {
      const attrs = parseAttributes(node[2]!);
      nodes.push({
        id: unescape(node[1]!),
        shape: attrs.get("shape") === "box" ? "box" : "circle",
        label: attrs.get("label") ?? "",
        fill: attrs.get("fillcolor") ?? null,
      });
    }
  }
  return { nodes, edges };
}

export interface Positioned extends DotNode {
  x: number;
  y: number;
}

/** Breadth-first layering: x is the hop distance from the source place. */
export function layout(graph: DotGraph): Positioned[] {
  const successors = new Map<string, string[]>();
  for (const [from, to] of graph.edges) {
    const list = successors.get(from) ?? [];
    list.push(to);
    successors.set(from, list);
  }
  const source =
    graph.nodes.find((n) => n.fill === "#c8e6c9") ?? graph.nodes[0];
  const depth = new Map<string, number>();
  if (source) {
    depth.set(source.id, 0);
    const queue = [source.id];
    while (queue.length) {
      const node = queue.shift()!;
      for (const next of (successors.get(node) ?? []).slice().sort()) {
        if (!depth.has(next)) {
          depth.set(next, depth.get(node)! + 1);
          queue.push(next);
        }
      }
    }
  }
  for (const node of graph.nodes) {
    if (!depth.has(node.id)) depth.set(node.id, 0);
  }
  const layers = new Map<number, DotNode[]>();
  for (const node of graph.nodes) {
    const level = depth.get(node.id)!;
    const members = layers.get(level) ?? [];
    members.push(node);
    layers.set(level, members);
  }
  const positioned: Positioned[] = [];
  for (const [level, members] of layers) {
    members.sort((a, b) => (a.id < b.id ? -1 : 1));
    members.forEach((node, row) => {
      positioned.push({
        ...node,
        x: level,
        y: row - (members.length - 1) / 2,
      });
    });
  }
  return positioned;
}

const SCALE_X = 110;
const SCALE_Y = 70;
const MARGIN = 50;

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Render a parsed workflow net as an SVG string. */
export function renderSvg(graph: DotGraph): string {
  const positioned = layout(graph);
  const byId = new Map(positioned.map((n) => [n.id, n]));
  const xs = positioned.map((n) => n.x);
  const ys = positioned.map((n) => n.y);
  const width = (Math.max(0, ...xs) + 1) * SCALE_X + MARGIN;
  const height = (Math.max(0, ...ys) - Math.min(0, ...ys) + 1) * SCALE_Y + MARGIN;
  const offsetY = -Math.min(0, ...ys) * SCALE_Y + MARGIN / 2 + SCALE_Y / 4;

  const px = (n: Positioned) => n.x * SCALE_X + MARGIN;
  const py = (n: Positioned) => n.y * SCALE_Y + offsetY;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}" class="net">`,
    `<defs><marker id="arrow" viewBox="0 0 8 8" refX="8" refY="4" ` +
      `markerWidth="7" markerHeight="7" orient="auto"><path d="M0,0 L8,4 L0,8 z" fill="#555"/></marker></defs>`,
  );
  for (const [from, to] of graph.edges) {
    const a = byId.get(from);
    const b = byId.get(to);
    if (!a || !b) continue;
    parts.push(
      `<line x1="${px(a)}" y1="${py(a)}" x2="${px(b)}" y2="${py(b)}" ` +
        `stroke="#555" stroke-width="1" marker-end="url(#arrow)"/>`,
    );
  }
  for (const node of positioned) {
    const x = px(node);
    const y = py(node);
    if (node.shape === "circle") {
      parts.push(
        `<circle data-node="${escapeXml(node.id)}" cx="${x}" cy="${y}" r="12" ` +
          `fill="${node.fill ?? "white"}" stroke="black"/>`,
      );
    } else {
      const silent = node.fill === "black";
      parts.push(
        `<rect data-node="${escapeXml(node.id)}" x="${x - 14}" y="${y - 11}" ` +
          `width="28" height="22" fill="${silent ? "black" : "#fff3c4"}" stroke="black"/>`,
      );
      if (node.label) {
        parts.push(
          `<text x="${x}" y="${y + 26}" text-anchor="middle" font-size="10">` +
            `${escapeXml(node.label)}</text>`,
        );
      }
    }
  }
  parts.push("</svg>");
  return parts.join("");
}

export function dotToSvg(dot: string): string {
  return renderSvg(parseDot(dot));
}
