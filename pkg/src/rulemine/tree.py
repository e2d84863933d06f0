"""Block-structured process trees.

Leaves are activities or the silent step; inner nodes apply sequence,
exclusive choice, parallel, or loop composition to an ordered child list.
Loop nodes have exactly two children (body, redo).
"""

from __future__ import annotations

from dataclasses import dataclass

OPERATORS = ("sequence", "xor", "parallel", "loop")
# Operator glyphs used by the textual export.
GLYPHS = {"sequence": "seq", "xor": "xor", "parallel": "par", "loop": "loop"}
OPERATOR_FOR_GLYPH = {glyph: op for op, glyph in GLYPHS.items()}


@dataclass(frozen=True)
class ProcessTree:
    kind: str  # "activity" | "silent" | one of OPERATORS
    label: str | None = None
    children: tuple["ProcessTree", ...] = ()

    def __post_init__(self):
        if self.kind == "activity":
            if not self.label or self.children:
                raise ValueError("activity leaves carry a label and no children")
        elif self.kind == "silent":
            if self.label is not None or self.children:
                raise ValueError("silent leaves carry no label or children")
        elif self.kind in OPERATORS:
            if self.label is not None:
                raise ValueError("operator nodes carry no label")
            if len(self.children) < 2:
                raise ValueError(f"{self.kind} node needs at least two children")
            if self.kind == "loop" and len(self.children) != 2:
                raise ValueError("loop nodes take exactly (body, redo)")
        else:
            raise ValueError(f"unknown node kind {self.kind!r}")

    @property
    def is_leaf(self) -> bool:
        return self.kind in ("activity", "silent")

    def leaf_labels(self) -> list[str]:
        """Activity labels in left-to-right leaf order (with repeats, if any)."""
        if self.kind == "activity":
            return [self.label]
        return [label for child in self.children for label in child.leaf_labels()]

    def loop_free(self) -> bool:
        if self.kind == "loop":
            return False
        return all(child.loop_free() for child in self.children)

    def __str__(self) -> str:
        from .model_io import format_tree_text

        return format_tree_text(self)


def activity(label: str) -> ProcessTree:
    return ProcessTree("activity", label=label)


def silent() -> ProcessTree:
    return ProcessTree("silent")


def operator(kind: str, children: list[ProcessTree] | tuple[ProcessTree, ...]) -> ProcessTree:
    return ProcessTree(kind, children=tuple(children))


def sequence(*children: ProcessTree) -> ProcessTree:
    return operator("sequence", children)


def xor(*children: ProcessTree) -> ProcessTree:
    return operator("xor", children)


def parallel(*children: ProcessTree) -> ProcessTree:
    return operator("parallel", children)


def loop(body: ProcessTree, redo: ProcessTree) -> ProcessTree:
    return operator("loop", (body, redo))


def flatten(tree: ProcessTree) -> ProcessTree:
    """Merge directly nested nodes of the same associative operator.

    seq(a, seq(b, c)) becomes seq(a, b, c); loop nodes are left alone since
    their two child slots have distinct roles.
    """
    if tree.is_leaf:
        return tree
    children = [flatten(child) for child in tree.children]
    if tree.kind in ("sequence", "xor", "parallel"):
        merged: list[ProcessTree] = []
        for child in children:
            if child.kind == tree.kind:
                merged.extend(child.children)
            else:
                merged.append(child)
        children = merged
    return ProcessTree(tree.kind, children=tuple(children))
