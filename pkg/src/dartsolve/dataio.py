"""Load, validate, and summarize aggregated throw-count data.

The on-disk format is CSV with header ``player,target,outcome,count``.
Counts are stored densely: every (player, target) pair becomes one vector
ordered by the target's outcome set, with absent outcomes filled with zero,
so estimation code never special-cases missing rows.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import board
from .errors import DataValidationError

TREBLE_FIXTURE = "trebles_2019.csv"


@dataclass(frozen=True)
class CountTable:
    """Outcome counts for one (player, target) pair, in outcome_set order."""

    player: str
    target: str
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or len(counts) != len(self.outcome_set()):
            raise DataValidationError(
                f"{self.player}/{self.target}: expected {len(self.outcome_set())} counts, "
                f"got shape {counts.shape}")
        if (counts < 0).any():
            raise DataValidationError(f"{self.player}/{self.target}: negative count")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def outcome_set(self) -> tuple[str, ...]:
        return board.outcome_set(self.target)

    def fractions(self) -> np.ndarray:
        if self.n == 0:
            raise DataValidationError(f"{self.player}/{self.target}: no throws recorded")
        return self.counts / self.n


@dataclass(frozen=True)
class SummaryRow:
    """Success rate and expected score for one (player, target) pair.

    ``success_rate`` and ``expected_score`` are None when there are no
    attempts; they are never silently reported as zero.
    """

    player: str
    target: str
    attempts: int
    success_rate: float | None
    expected_score: float | None
    coverage: int


def load_dataset(source) -> list[CountTable]:
    """Parse a CSV stream or path into dense per-(player, target) count tables.

    Raises DataValidationError on malformed rows (with line number), on
    outcomes that are impossible for their target, and on duplicate
    (player, target, outcome) rows.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", newline="") as fh:
            return load_dataset(fh)

    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataValidationError("empty input: missing header")
    if [h.strip() for h in header] != ["player", "target", "outcome", "count"]:
        raise DataValidationError(f"bad header {header!r}; expected player,target,outcome,count")

    seen: dict[tuple[str, str], dict[str, int]] = {}
    order: list[tuple[str, str]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise DataValidationError(f"line {lineno}: expected 4 fields, got {len(row)}")
        player, target, outcome, count_text = (f.strip() for f in row)
        if target not in board.TARGETS:
            raise DataValidationError(f"line {lineno}: unknown target {target!r}")
        valid = board.outcome_set(target)
        if outcome not in valid:
            raise DataValidationError(
                f"line {lineno}: outcome {outcome!r} not possible for target {target!r}")
        try:
            count = int(count_text)
        except ValueError:
            raise DataValidationError(f"line {lineno}: count {count_text!r} is not an integer")
        if count < 0:
            raise DataValidationError(f"line {lineno}: negative count {count}")
        key = (player, target)
        if key not in seen:
            seen[key] = {}
            order.append(key)
        if outcome in seen[key]:
            raise DataValidationError(
                f"line {lineno}: duplicate entry for ({player}, {target}, {outcome})")
        seen[key][outcome] = count

    tables = []
    for player, target in order:
        labels = board.outcome_set(target)
        counts = np.array([seen[(player, target)].get(lbl, 0) for lbl in labels], dtype=np.int64)
        tables.append(CountTable(player=player, target=target, counts=counts))
    return tables


def write_dataset(tables: Iterable[CountTable], sink) -> None:
    """Serialize tables back to CSV (inverse of load_dataset, zeros included)."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", newline="") as fh:
            write_dataset(tables, fh)
            return
    writer = csv.writer(sink)
    writer.writerow(["player", "target", "outcome", "count"])
    for table in tables:
        for outcome, count in zip(table.outcome_set(), table.counts):
            writer.writerow([table.player, table.target, outcome, int(count)])


def load_bundled_trebles() -> list[CountTable]:
    """The 2019-season treble counts shipped with the package."""
    text = resources.files("dartsolve").joinpath("data", TREBLE_FIXTURE).read_text()
    return load_dataset(io.StringIO(text))


def coverage(table: CountTable) -> int:
    """Number of outcomes with at least one observation."""
    return int((table.counts > 0).sum())


def _summary_of(player: str, target: str, counts: np.ndarray) -> SummaryRow:
    n = int(counts.sum())
    if n == 0:
        return SummaryRow(player, target, 0, None, None, 0)
    labels = board.outcome_set(target)
    scores = np.array([board.numeric_score(lbl) for lbl in labels], dtype=float)
    return SummaryRow(
        player=player,
        target=target,
        attempts=n,
        success_rate=float(counts[0] / n),
        expected_score=float(counts @ scores / n),
        coverage=int((counts > 0).sum()),
    )


def summarize(tables: Sequence[CountTable], *, total_label: str = "Total") -> list[SummaryRow]:
    """Per-(player, target) summary rows plus one aggregate row per target.

    The aggregate row sums counts across players before computing rates, so
    it matches a summary of the componentwise-summed tables.
    """
    if not tables:
        raise DataValidationError("summarize requires at least one table")
    rows = [_summary_of(t.player, t.target, t.counts) for t in tables]
    targets: dict[str, np.ndarray] = {}
    for t in tables:
        if t.target in targets:
            targets[t.target] = targets[t.target] + t.counts
        else:
            targets[t.target] = t.counts.copy()
    for target, counts in targets.items():
        rows.append(_summary_of(total_label, target, counts))
    return rows


def summary_to_json(rows: Sequence[SummaryRow]) -> str:
    return json.dumps([
        {"player": r.player, "target": r.target, "attempts": r.attempts,
         "success_rate": r.success_rate, "expected_score": r.expected_score,
         "coverage": r.coverage}
        for r in rows
    ], indent=2)
