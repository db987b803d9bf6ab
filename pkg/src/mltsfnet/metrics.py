"""Word error rate with a substitution / deletion / insertion breakdown."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class EditStats:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_len: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def __add__(self, other: "EditStats") -> "EditStats":
        return EditStats(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.ref_len + other.ref_len,
        )


def edit_stats(reference: Sequence, hypothesis: Sequence) -> EditStats:
    """Minimum-cost alignment counts (unit costs).

    Backtrace preference on equal cost: match/substitution, then deletion,
    then insertion. The total is the Levenshtein distance either way; the
    preference only fixes how it splits.
    """
    n, m = len(reference), len(hypothesis)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        ri = reference[i - 1]
        row, prev = cost[i], cost[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (ri != hypothesis[j - 1])
            row[j] = min(diag, prev[j] + 1, row[j - 1] + 1)

    sub = dele = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            mismatch = reference[i - 1] != hypothesis[j - 1]
            if cost[i][j] == cost[i - 1][j - 1] + mismatch:
                sub += mismatch
                i -= 1
                j -= 1
                continue
        if i > 0 and cost[i][j] == cost[i - 1][j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditStats(sub, dele, ins, n)


def corpus_stats(pairs: Iterable[tuple[Sequence, Sequence]]) -> EditStats:
    total = EditStats()
    for ref, hyp in pairs:
        total = total + edit_stats(ref, hyp)
    return total


def wer(stats: EditStats) -> float:
    if stats.ref_len <= 0:
        raise UndefinedMetricError("WER is undefined for an empty reference")
    return stats.errors / stats.ref_len


@dataclass(frozen=True)
class WerReport:
    stats: EditStats
    num_sentences: int

    @property
    def wer(self) -> float:
        return wer(self.stats)

    @property
    def sub_rate(self) -> float:
        return self.stats.substitutions / self.stats.ref_len

    @property
    def del_rate(self) -> float:
        return self.stats.deletions / self.stats.ref_len

    @property
    def ins_rate(self) -> float:
        return self.stats.insertions / self.stats.ref_len

    def as_dict(self) -> dict[str, float | int]:
        s = self.stats
        return {
            "wer": self.wer,
            "del_rate": self.del_rate,
            "ins_rate": self.ins_rate,
            "sub_rate": self.sub_rate,
            "substitutions": s.substitutions,
            "deletions": s.deletions,
            "insertions": s.insertions,
            "ref_len": s.ref_len,
            "sentences": self.num_sentences,
        }

    def to_text(self) -> str:
        return (
            f"sentences {self.num_sentences}  reference glosses {self.stats.ref_len}\n"
            f"{'del/ins':>12s} | {'WER':>6s}\n"
            f"{100 * self.del_rate:5.1f}/{100 * self.ins_rate:<5.1f} | {100 * self.wer:6.1f}\n"
            f"(sub {100 * self.sub_rate:.1f}%)"
        )

    def to_keyvalue(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.as_dict().items())


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def parse_keyvalue_report(text: str) -> dict[str, float]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key.strip()] = float(value)
    return out
