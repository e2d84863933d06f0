"""Discovery reports: delimited rule summaries plus rendered figures.

The report path writes, next to the exported model, a CSV with one row per
rule (confidence on the log, verdict on the model) and two PNG figures: a
rule-confidence bar chart and a drawing of the discovered workflow net.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.lines import Line2D
from matplotlib.patches import Circle, FancyArrowPatch, Rectangle

from .declare import DeclareRule
from .event_log import EventLog
from .model_io import WorkflowNet, to_workflow_net
from .pipeline import DiscoveryRun, rule_check_rows

SUMMARY_COLUMNS = ("rule", "template", "args", "confidence", "verdict", "witness")


def write_rule_summary(path: Path, log: EventLog, run: DiscoveryRun) -> None:
    """One CSV row per rule: confidence on the log and verdict on the model."""
    rows = rule_check_rows(log, [rule for rule, _ in run.verdicts])
    verdicts = {str(rule): verdict for rule, verdict in run.verdicts}
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, delimiter=";")
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            verdict = verdicts[row["rule"]]
            writer.writerow([
                row["rule"], row["template"], ",".join(row["args"]),
                f"{row['confidence']:.6f}",
                "holds" if verdict.holds else "violated",
                " ".join(verdict.witness) if verdict.witness else "",
            ])


def confidence_figure(path: Path, log: EventLog, rules: list[DeclareRule]) -> None:
    """Horizontal bar chart of per-rule confidence, threshold line at 1.0."""
    rows = rule_check_rows(log, rules)
    labels = [row["rule"] for row in rows]
    values = [row["confidence"] for row in rows]
    height = max(2.0, 0.4 * len(rows) + 1.2)
    fig, ax = plt.subplots(figsize=(9, height))
    bars = ax.barh(range(len(rows)), values, color="#4878a8")
    for bar, value in zip(bars, values):
        ax.text(min(value + 0.01, 1.04), bar.get_y() + bar.get_height() / 2,
                f"{value:.3f}", va="center", fontsize=8)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlim(0, 1.1)
    ax.axvline(1.0, color="#888888", linestyle="--", linewidth=0.8)
    ax.set_xlabel("confidence (fraction of satisfying traces)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _layered_positions(net: WorkflowNet) -> dict[str, tuple[float, float]]:
    """Simple left-to-right BFS layering from the source place."""
    successors: dict[str, list[str]] = {}
    for src, dst in net.arcs:
        successors.setdefault(src, []).append(dst)
    depth = {net.source: 0}
    frontier = [net.source]
    while frontier:
        node = frontier.pop(0)
        for succ in sorted(successors.get(node, [])):
            if succ not in depth:
                depth[succ] = depth[node] + 1
                frontier.append(succ)
    nodes = list(net.places) + [t for t, _ in net.transitions]
    for node in nodes:  # disconnected safety net
        depth.setdefault(node, 0)
    max_depth = max(depth.values(), default=0)
    depth[net.sink] = max_depth if depth[net.sink] < max_depth else depth[net.sink]
    layers: dict[int, list[str]] = {}
    for node in nodes:
        layers.setdefault(depth[node], []).append(node)
    positions: dict[str, tuple[float, float]] = {}
    for level, members in layers.items():
        members.sort()
        for i, node in enumerate(members):
            positions[node] = (float(level), -(i - (len(members) - 1) / 2))
    return positions


def net_figure(path: Path, net: WorkflowNet) -> None:
    """Draw the workflow net: places as circles, transitions as boxes."""
    positions = _layered_positions(net)
    xs = [p[0] for p in positions.values()]
    ys = [p[1] for p in positions.values()]
    width = max(6.0, (max(xs) - min(xs) + 1) * 1.1)
    height = max(3.0, (max(ys) - min(ys) + 1) * 0.9)
    fig, ax = plt.subplots(figsize=(width, height))
    labels = dict(net.transitions)
    for src, dst in net.arcs:
        ax.add_patch(FancyArrowPatch(
            positions[src], positions[dst], arrowstyle="-|>",
            mutation_scale=10, color="#555555", shrinkA=12, shrinkB=12,
            linewidth=0.8))
    for place in net.places:
        x, y = positions[place]
        face = "#c8e6c9" if place == net.source else (
            "#ffcdd2" if place == net.sink else "white")
        ax.add_patch(Circle((x, y), 0.14, facecolor=face, edgecolor="black",
                            zorder=3))
    for t_id, label in net.transitions:
        x, y = positions[t_id]
        silent_t = label is None
        ax.add_patch(Rectangle(
            (x - 0.16, y - 0.12), 0.32, 0.24,
            facecolor="black" if silent_t else "#fff3c4",
            edgecolor="black", zorder=3))
        if not silent_t:
            ax.text(x, y - 0.22, label, ha="center", va="top", fontsize=7,
                    rotation=20)
    ax.legend(handles=[
        Line2D([], [], marker="o", linestyle="", markerfacecolor="white",
               markeredgecolor="black", label="place"),
        Line2D([], [], marker="s", linestyle="", markerfacecolor="#fff3c4",
               markeredgecolor="black", label="activity"),
        Line2D([], [], marker="s", linestyle="", markerfacecolor="black",
               label="silent step"),
    ], loc="upper right", fontsize=7)
    ax.autoscale_view()
    ax.set_aspect("equal")
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(directory: str | Path, log: EventLog, run: DiscoveryRun) -> list[Path]:
    """Write the full report bundle; returns the created file paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    created = []

    model_txt = directory / "model.txt"
    model_txt.write_text(run.tree_text + "\n", encoding="utf-8")
    created.append(model_txt)

    model_dot = directory / "model.dot"
    model_dot.write_text(run.export("graph-dot"), encoding="utf-8")
    created.append(model_dot)

    summary = directory / "summary.csv"
    write_rule_summary(summary, log, run)
    created.append(summary)

    rules = [rule for rule, _ in run.verdicts]
    if rules:
        chart = directory / "rule_confidence.png"
        confidence_figure(chart, log, rules)
        created.append(chart)

    graph = directory / "model.png"
    net_figure(graph, to_workflow_net(run.tree))
    created.append(graph)
    return created
