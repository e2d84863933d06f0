"""Event logs as weighted variants, directly-follows graphs, and log splitting.

A log is a multiset of traces: each distinct trace (tuple of activity labels)
is stored once together with its occurrence count.  All types are immutable
after construction; every operation returns a new value.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping

Trace = tuple[str, ...]


class LogError(Exception):
    """Base class for event-log ingestion errors."""


class MissingColumn(LogError):
    def __init__(self, name: str):
        super().__init__(f"missing column: {name!r}")
        self.name = name


class UnparseableTimestamp(LogError):
    def __init__(self, row: int, value: str):
        super().__init__(f"row {row}: unparseable timestamp {value!r}")
        self.row = row
        self.value = value


class EmptyInput(LogError):
    pass


class BadCount(LogError):
    def __init__(self, line: int, value: str):
        super().__init__(f"line {line}: bad count {value!r}")
        self.line = line


class DuplicateVariant(LogError):
    def __init__(self, line: int, trace: Trace):
        super().__init__(f"line {line}: duplicate variant {list(trace)}")
        self.line = line
        self.trace = trace


class InvalidPartition(LogError):
    pass


@dataclass(frozen=True)
class EventLog:
    """Multiset of traces over an activity alphabet.

    ``variants`` maps each distinct trace to a positive count; the alphabet is
    derived from the variants, so every label in it occurs somewhere.  The
    empty trace is a permitted variant.
    """

    variants: Mapping[Trace, int]
    alphabet: frozenset[str] = field(init=False)
    total_traces: int = field(init=False)

    def __post_init__(self):
        frozen = dict(self.variants)
        for trace, count in frozen.items():
            if count < 1:
                raise ValueError(f"variant count must be >= 1, got {count} for {trace}")
        object.__setattr__(self, "variants", frozen)
        object.__setattr__(
            self, "alphabet", frozenset(label for trace in frozen for label in trace)
        )
        object.__setattr__(self, "total_traces", sum(frozen.values()))

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return dict(self.variants) == dict(other.variants)

    def __hash__(self):
        return hash(frozenset(self.variants.items()))

    @property
    def empty_trace_count(self) -> int:
        return self.variants.get((), 0)

    def sorted_variants(self) -> list[tuple[Trace, int]]:
        """Variants in a canonical (trace-lexicographic) order."""
        return sorted(self.variants.items(), key=lambda item: item[0])


@dataclass(frozen=True)
class Dfg:
    """Weighted directly-follows relation with artificial start/end frequencies.

    ``alphabet`` is carried explicitly so that an activity with no surviving
    occurrences (possible in recursion sub-logs) still participates in cut
    enumeration.
    """

    edges: Mapping[tuple[str, str], int]
    start_freq: Mapping[str, int]
    end_freq: Mapping[str, int]
    empty_traces: int
    alphabet: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "edges", dict(self.edges))
        object.__setattr__(self, "start_freq", dict(self.start_freq))
        object.__setattr__(self, "end_freq", dict(self.end_freq))

    def frequency(self, x: str, y: str) -> int:
        return self.edges.get((x, y), 0)

    def with_alphabet(self, alphabet: Iterable[str]) -> "Dfg":
        return Dfg(self.edges, self.start_freq, self.end_freq, self.empty_traces,
                   frozenset(alphabet))


@dataclass(frozen=True)
class CsvColumns:
    """Column names used when ingesting CSV event data."""

    case_id: str = "case_id"
    activity: str = "activity"
    timestamp: str = "timestamp"


def _parse_timestamp(value: str, row: int) -> datetime:
    text = value.strip()
    # datetime.fromisoformat in 3.10 rejects a trailing Z; normalize it.
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        raise UnparseableTimestamp(row, value) from None


def parse_csv_log(text: str, config: CsvColumns | None = None) -> EventLog:
    """Parse CSV event data into an event log.

    Rows are grouped by case id and ordered by (timestamp, original row index)
    within each case, so timestamp ties keep file order.  Cases with identical
    activity sequences merge into one variant.
    """
    config = config or CsvColumns()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise EmptyInput("no header row")
    header = [name.strip() for name in reader.fieldnames]
    for needed in (config.case_id, config.activity, config.timestamp):
        if needed not in header:
            raise MissingColumn(needed)

    cases: dict[str, list[tuple[datetime, int, str]]] = {}
    rows = 0
    for index, row in enumerate(reader):
        row = {(k or "").strip(): (v or "") for k, v in row.items()}
        rows += 1
        stamp = _parse_timestamp(row[config.timestamp], index + 2)
        case = row[config.case_id]
        cases.setdefault(case, []).append((stamp, index, row[config.activity].strip()))
    if rows == 0:
        raise EmptyInput("no data rows")

    variants: dict[Trace, int] = {}
    for events in cases.values():
        try:
            events.sort(key=lambda e: (e[0], e[1]))
        except TypeError:
            # Mixing offset-aware and naive timestamps within one case.
            raise UnparseableTimestamp(events[0][1] + 2, str(events[0][0])) from None
        trace = tuple(activity for _, _, activity in events)
        variants[trace] = variants.get(trace, 0) + 1
    return EventLog(variants)


def parse_variants(text: str) -> EventLog:
    """Parse the ``<count>;<act1>,<act2>,...`` variants format.

    Lines whose first non-blank character is ``#`` are comments; blank lines
    are skipped.  ``<count>;`` denotes empty traces.  A trace listed twice is
    an error (fixture typo guard), not an implicit merge.
    """
    variants: dict[Trace, int] = {}
    seen_any = False
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        seen_any = True
        head, sep, tail = line.partition(";")
        if not sep:
            raise BadCount(number, line)
        try:
            count = int(head.strip())
        except ValueError:
            raise BadCount(number, head.strip()) from None
        if count < 1:
            raise BadCount(number, head.strip())
        tail = tail.strip()
        trace: Trace = ()
        if tail:
            trace = tuple(label.strip() for label in tail.split(","))
            if any(not label for label in trace):
                raise BadCount(number, raw.strip())
        if trace in variants:
            raise DuplicateVariant(number, trace)
        variants[trace] = count
    if not seen_any:
        raise EmptyInput("no variant lines")
    return EventLog(variants)


def format_variants(log: EventLog) -> str:
    """Render a log in the variants format; inverse of :func:`parse_variants`."""
    lines = [f"{count};{','.join(trace)}" for trace, count in log.sorted_variants()]
    return "\n".join(lines) + "\n"


def build_dfg(log: EventLog) -> Dfg:
    """Count directly-follows edges plus start/end frequencies."""
    edges: dict[tuple[str, str], int] = {}
    start: dict[str, int] = {}
    end: dict[str, int] = {}
    empty = 0
    for trace, count in log.variants.items():
        if not trace:
            empty += count
            continue
        start[trace[0]] = start.get(trace[0], 0) + count
        end[trace[-1]] = end.get(trace[-1], 0) + count
        for x, y in zip(trace, trace[1:]):
            edges[(x, y)] = edges.get((x, y), 0) + count
    return Dfg(edges, start, end, empty, log.alphabet)


def project_log(log: EventLog, keep: Iterable[str]) -> EventLog:
    """Filter every trace to the ``keep`` labels, merging identical results."""
    keep = frozenset(keep)
    variants: dict[Trace, int] = {}
    for trace, count in log.variants.items():
        projected = tuple(label for label in trace if label in keep)
        variants[projected] = variants.get(projected, 0) + count
    return EventLog(variants)


def _check_partition(alphabet: frozenset[str], sigma1: frozenset[str],
                     sigma2: frozenset[str]) -> None:
    # The sides must be disjoint, nonempty, and jointly cover the log's
    # alphabet; they may cover more (recursion keeps activities that vanished
    # from a sub-log).
    if not sigma1 or not sigma2 or (sigma1 & sigma2) or not alphabet <= (sigma1 | sigma2):
        raise InvalidPartition(
            f"{sorted(sigma1)} / {sorted(sigma2)} does not partition {sorted(alphabet)}"
        )


def _split_xor(trace: Trace, sigma1: frozenset[str]) -> bool:
    """True when the trace belongs to the sigma1 side (ties and empty go left)."""
    left = sum(1 for label in trace if label in sigma1)
    return left * 2 >= len(trace)


def _split_sequence(trace: Trace, sigma1: frozenset[str]) -> int:
    """Split index minimising misplaced events; ties take the smallest index."""
    suffix_left = sum(1 for label in trace if label in sigma1)
    best_index, best_cost = 0, suffix_left
    prefix_right = 0
    for i, label in enumerate(trace, start=1):
        if label in sigma1:
            suffix_left -= 1
        else:
            prefix_right += 1
        cost = prefix_right + suffix_left
        if cost < best_cost:
            best_index, best_cost = i, cost
    return best_index


def _split_loop(trace: Trace, sigma1: frozenset[str]) -> tuple[list[Trace], list[Trace]]:
    """Maximal same-side segments; leading/trailing redo segments imply empty bodies."""
    if not trace:
        return [()], []
    body: list[Trace] = []
    redo: list[Trace] = []
    segment: list[str] = [trace[0]]
    side_left = trace[0] in sigma1
    for label in trace[1:]:
        if (label in sigma1) == side_left:
            segment.append(label)
        else:
            (body if side_left else redo).append(tuple(segment))
            segment = [label]
            side_left = label in sigma1
    (body if side_left else redo).append(tuple(segment))
    if trace[0] not in sigma1:
        body.insert(0, ())
    if trace[-1] not in sigma1:
        body.append(())
    return body, redo


def split_log(log: EventLog, cut) -> tuple[EventLog, EventLog]:
    """Split a log along a cut into the two sub-logs of the recursion.

    ``cut`` carries an operator in {xor, sequence, parallel, loop} and the
    side alphabets; see :mod:`rulemine.discovery`.
    """
    sigma1, sigma2 = frozenset(cut.sigma1), frozenset(cut.sigma2)
    _check_partition(log.alphabet, sigma1, sigma2)

    left: dict[Trace, int] = {}
    right: dict[Trace, int] = {}

    def add(target: dict[Trace, int], trace: Trace, count: int) -> None:
        target[trace] = target.get(trace, 0) + count

    operator = cut.operator
    for trace, count in log.variants.items():
        if operator == "xor":
            if _split_xor(trace, sigma1):
                add(left, tuple(l for l in trace if l in sigma1), count)
            else:
                add(right, tuple(l for l in trace if l in sigma2), count)
        elif operator == "sequence":
            index = _split_sequence(trace, sigma1)
            add(left, tuple(l for l in trace[:index] if l in sigma1), count)
            add(right, tuple(l for l in trace[index:] if l in sigma2), count)
        elif operator == "parallel":
            add(left, tuple(l for l in trace if l in sigma1), count)
            add(right, tuple(l for l in trace if l in sigma2), count)
        elif operator == "loop":
            body, redo = _split_loop(trace, sigma1)
            for segment in body:
                add(left, segment, count)
            for segment in redo:
                add(right, segment, count)
        else:
            raise ValueError(f"unknown cut operator {operator!r}")

    def build(variants: dict[Trace, int]) -> EventLog:
        return EventLog(variants) if variants else EventLog({})

    return build(left), build(right)
