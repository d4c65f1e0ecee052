"""Token-level scoring: alignment-based edit counts, position-paired
multi-stream scoring, and error-rate aggregation."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class EditCounts:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0

    @property
    def total(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
        )

    def as_tuple(self):
        return (self.substitutions, self.deletions, self.insertions)


def edit_distance(reference, hypothesis) -> EditCounts:
    """Minimum-edit alignment counts; cost ties prefer substitutions, then
    deletions, then insertions."""
    rows = len(reference) + 1
    cols = len(hypothesis) + 1
    # dp[i][j] = (total, subs, dels, ins) for ref[:i] vs hyp[:j]
    dp = [[None] * cols for _ in range(rows)]
    dp[0][0] = (0, 0, 0, 0)
    for j in range(1, cols):
        t, s, d, i = dp[0][j - 1]
        dp[0][j] = (t + 1, s, d, i + 1)
    for i in range(1, rows):
        t, s, d, ins = dp[i - 1][0]
        dp[i][0] = (t + 1, s, d + 1, ins)
    for i in range(1, rows):
        for j in range(1, cols):
            match = reference[i - 1] == hypothesis[j - 1]
            dt, ds, dd, di = dp[i - 1][j - 1]
            diag = (dt + (0 if match else 1), ds + (0 if match else 1), dd, di)
            et, es, ed, ei = dp[i - 1][j]
            dele = (et + 1, es, ed + 1, ei)
            it, is_, id_, ii = dp[i][j - 1]
            inse = (it + 1, is_, id_, ii + 1)
            best = min(diag[0], dele[0], inse[0])
            # candidate order encodes the tie preference
            for candidate in (diag, dele, inse):
                if candidate[0] == best:
                    dp[i][j] = candidate
                    break
    total, subs, dels, ins = dp[-1][-1]
    assert total == subs + dels + ins
    return EditCounts(subs, dels, ins)


def score_multistream(reference_streams, hypothesis_streams) -> EditCounts:
    """Pair streams by serialized position; a missing hypothesis stream
    counts its reference as deletions, an extra one as insertions."""
    counts = EditCounts()
    pairs = max(len(reference_streams), len(hypothesis_streams))
    for i in range(pairs):
        ref = reference_streams[i] if i < len(reference_streams) else []
        hyp = hypothesis_streams[i] if i < len(hypothesis_streams) else []
        counts = counts + edit_distance(ref, hyp)
    return counts


@dataclass
class _Cell:
    counts: EditCounts
    reference_tokens: int
    samples: int

    @property
    def rate(self) -> float:
        if self.reference_tokens == 0:
            return 0.0
        return counts_rate(self.counts, self.reference_tokens)


def counts_rate(counts: EditCounts, reference_tokens: int) -> float:
    return counts.total / reference_tokens


class ErrorRateReport:
    """Micro-averaged token error rates keyed by (talker_count, condition)."""

    def __init__(self):
        self.cells: dict[tuple, _Cell] = {}

    def add(self, talker_count: int, condition: str, counts: EditCounts, reference_tokens: int):
        key = (talker_count, condition)
        cell = self.cells.get(key)
        if cell is None:
            cell = _Cell(EditCounts(), 0, 0)
            self.cells[key] = cell
        cell.counts = cell.counts + counts
        cell.reference_tokens += reference_tokens
        cell.samples += 1

    def rate(self, talker_count: int | None = None, condition: str | None = None) -> float:
        counts = EditCounts()
        tokens = 0
        for (count_key, cond_key), cell in self.cells.items():
            if talker_count is not None and count_key != talker_count:
                continue
            if condition is not None and cond_key != condition:
                continue
            counts = counts + cell.counts
            tokens += cell.reference_tokens
        if tokens == 0:
            return 0.0
        return counts.total / tokens

    def rows(self) -> list:
        out = []
        for (count, condition) in sorted(self.cells):
            cell = self.cells[(count, condition)]
            out.append(
                {
                    "talker_count": count,
                    "condition": condition,
                    "samples": cell.samples,
                    "reference_tokens": cell.reference_tokens,
                    "substitutions": cell.counts.substitutions,
                    "deletions": cell.counts.deletions,
                    "insertions": cell.counts.insertions,
                    "token_error_rate": cell.rate,
                }
            )
        return out

    def to_csv(self) -> str:
        header = (
            "talker_count,condition,samples,reference_tokens,"
            "substitutions,deletions,insertions,token_error_rate"
        )
        lines = [header]
        for row in self.rows():
            lines.append(
                f"{row['talker_count']},{row['condition']},{row['samples']},"
                f"{row['reference_tokens']},{row['substitutions']},{row['deletions']},"
                f"{row['insertions']},{row['token_error_rate']:.6f}"
            )
        return "\n".join(lines) + "\n"
