"""Evaluation: the four accuracies, the confusion matrix, ambiguity analysis,
and uniform error sampling for manual inspection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .baselines import words_of
from .lang import DiacriticTable, dediacritize


def _ratio(correct: int, total: int) -> float:
    return correct / total if total else 1.0


@dataclass
class MetricsReport:
    """Counts behind each accuracy; each ratio equals exactly correct/total."""

    char_correct: int = 0
    char_total: int = 0
    important_correct: int = 0
    important_total: int = 0
    word_correct: int = 0
    word_total: int = 0
    seq_correct: int = 0
    seq_total: int = 0

    @property
    def character_accuracy(self) -> float:
        return _ratio(self.char_correct, self.char_total)

    @property
    def important_char_accuracy(self) -> float:
        return _ratio(self.important_correct, self.important_total)

    @property
    def alpha_word_accuracy(self) -> float:
        return _ratio(self.word_correct, self.word_total)

    @property
    def sequence_accuracy(self) -> float:
        return _ratio(self.seq_correct, self.seq_total)

    def to_rows(self) -> list[tuple[str, object]]:
        return [
            ("character_accuracy", round(self.character_accuracy, 6)),
            ("character_correct", self.char_correct),
            ("character_total", self.char_total),
            ("important_char_accuracy", round(self.important_char_accuracy, 6)),
            ("important_char_correct", self.important_correct),
            ("important_char_total", self.important_total),
            ("alpha_word_accuracy", round(self.alpha_word_accuracy, 6)),
            ("alpha_word_correct", self.word_correct),
            ("alpha_word_total", self.word_total),
            ("sequence_accuracy", round(self.sequence_accuracy, 6)),
            ("sequence_correct", self.seq_correct),
            ("sequence_total", self.seq_total),
        ]

    def summary(self) -> str:
        return (f"char {self.character_accuracy:.4f} | important {self.important_char_accuracy:.4f}"
                f" | alpha-word {self.alpha_word_accuracy:.4f} | sequence {self.sequence_accuracy:.4f}")


def _check_pair(index: int, ref: str, hyp: str):
    if len(ref) != len(hyp):
        raise ValueError(
            f"line {index}: reference has {len(ref)} characters but hypothesis has {len(hyp)}")


def score_sequences(refs: Sequence[str], hyps: Sequence[str],
                    table: DiacriticTable) -> MetricsReport:
    """Character / important-character / alpha-word / sequence accuracy.

    Character accuracy counts every position (whitespace and punctuation
    included).  Important positions are those whose reference character's base
    family has at least two variants in the table.  Alpha words are whitespace
    tokens of the reference containing at least one alphabetic character, and
    must match over their whole span.
    """
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    report = MetricsReport()
    for index, (ref, hyp) in enumerate(zip(refs, hyps)):
        _check_pair(index, ref, hyp)
        report.seq_total += 1
        if ref == hyp:
            report.seq_correct += 1
        report.char_total += len(ref)
        for r, h in zip(ref, hyp):
            if r == h:
                report.char_correct += 1
            if table.is_important(r):
                report.important_total += 1
                if r == h:
                    report.important_correct += 1
        start = 0
        length = len(ref)
        while start < length:
            if ref[start].isspace():
                start += 1
                continue
            end = start
            while end < length and not ref[end].isspace():
                end += 1
            token = ref[start:end]
            if any(ch.isalpha() for ch in token):
                report.word_total += 1
                if hyp[start:end] == token:
                    report.word_correct += 1
            start = end
    return report


@dataclass
class ConfusionMatrix:
    """Counts over important positions, grouped by base family of the actual
    character.  Predictions outside the actual character's family land in
    `cross_family` (none are expected from a trained model)."""

    families: tuple[tuple[str, ...], ...]
    counts: dict[tuple[str, str], int] = field(default_factory=dict)
    cross_family: dict[tuple[str, str], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values()) + sum(self.cross_family.values())

    def row_sum(self, actual: str) -> int:
        in_family = sum(c for (a, _), c in self.counts.items() if a == actual)
        return in_family + sum(c for (a, _), c in self.cross_family.items() if a == actual)

    def col_sum(self, predicted: str) -> int:
        in_family = sum(c for (_, p), c in self.counts.items() if p == predicted)
        return in_family + sum(c for (_, p), c in self.cross_family.items() if p == predicted)

    def diagonal(self, ch: str) -> int:
        return self.counts.get((ch, ch), 0)

    def tpr(self, ch: str) -> float:
        return _ratio(self.diagonal(ch), self.row_sum(ch))

    def ppv(self, ch: str) -> float:
        return _ratio(self.diagonal(ch), self.col_sum(ch))

    def f1(self, ch: str) -> float:
        p, r = self.ppv(ch), self.tpr(ch)
        return 2 * p * r / (p + r) if p + r else 0.0

    def weighted_f1(self) -> float:
        """Support-weighted mean F1 over every class that actually occurs."""
        total = self.total
        if total == 0:
            return 1.0
        return sum(self.row_sum(ch) / total * self.f1(ch)
                   for fam in self.families for ch in fam if self.row_sum(ch))

    @property
    def in_family_errors(self) -> int:
        return sum(c for (a, p), c in self.counts.items() if a != p)

    @property
    def cross_family_errors(self) -> int:
        return sum(self.cross_family.values())

    def to_rows(self) -> list[tuple[str, object]]:
        rows: list[tuple[str, object]] = [("important_positions", self.total),
                                          ("weighted_f1", round(self.weighted_f1(), 6)),
                                          ("in_family_errors", self.in_family_errors),
                                          ("cross_family_errors", self.cross_family_errors)]
        for fam in self.families:
            for a in fam:
                if not self.row_sum(a):
                    continue
                for p in fam:
                    rows.append((f"count[{a}->{p}]", self.counts.get((a, p), 0)))
                rows.append((f"tpr[{a}]", round(self.tpr(a), 6)))
                rows.append((f"ppv[{a}]", round(self.ppv(a), 6)))
        for (a, p), c in sorted(self.cross_family.items()):
            rows.append((f"cross[{a}->{p}]", c))
        return rows

    def format_table(self) -> str:
        """Aligned text tables, one per base family: rows actual, columns predicted."""
        blocks = []
        for fam in self.families:
            if not any(self.row_sum(ch) for ch in fam):
                continue
            width = max(7, max(len(str(self.counts.get((a, p), 0))) for a in fam for p in fam) + 2)
            header = " " * 4 + "".join(f"{p:>{width}}" for p in fam) + f"{'TPR':>{width}}"
            lines = [header]
            for a in fam:
                cells = "".join(f"{self.counts.get((a, p), 0):>{width}}" for p in fam)
                lines.append(f"{a:>4}" + cells + f"{self.tpr(a):>{width}.3f}")
            ppv_cells = "".join(f"{self.ppv(p):>{width}.3f}" for p in fam)
            lines.append(f"{'PPV':>4}" + ppv_cells)
            blocks.append("\n".join(lines))
        summary = (f"weighted F1 {self.weighted_f1():.4f} | "
                   f"in-family errors {self.in_family_errors} | "
                   f"cross-family errors {self.cross_family_errors}")
        return ("\n\n".join(blocks) + "\n" + summary) if blocks else summary


def confusion(refs: Sequence[str], hyps: Sequence[str],
              table: DiacriticTable) -> ConfusionMatrix:
    """Confusion counts over important positions, keyed by the gold character."""
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    families = tuple(tuple(table.variants(base)) for base in table.mapped_bases)
    matrix = ConfusionMatrix(families)
    for index, (ref, hyp) in enumerate(zip(refs, hyps)):
        _check_pair(index, ref, hyp)
        for r, h in zip(ref, hyp):
            if not table.is_important(r):
                continue
            if h in table.variants(r):
                key = (r, h)
                matrix.counts[key] = matrix.counts.get(key, 0) + 1
            else:
                key = (r, h)
                matrix.cross_family[key] = matrix.cross_family.get(key, 0) + 1
    return matrix


@dataclass
class AmbiguityStats:
    """How many words/bases have a single observed diacritization vs several."""

    unambiguous_words: int = 0
    unambiguous_bases: int = 0
    ambiguous_words: int = 0
    ambiguous_bases: int = 0

    @property
    def total_words(self) -> int:
        return self.unambiguous_words + self.ambiguous_words

    @property
    def word_ratio(self) -> float:
        """Unambiguous over ambiguous word occurrences."""
        return self.unambiguous_words / self.ambiguous_words if self.ambiguous_words else float("inf")

    @property
    def base_ratio(self) -> float:
        return self.unambiguous_bases / self.ambiguous_bases if self.ambiguous_bases else float("inf")

    def to_rows(self) -> list[tuple[str, object]]:
        return [
            ("words", self.total_words),
            ("unambiguous_words", self.unambiguous_words),
            ("unambiguous_bases", self.unambiguous_bases),
            ("ambiguous_words", self.ambiguous_words),
            ("ambiguous_bases", self.ambiguous_bases),
            ("word_ratio", round(self.word_ratio, 3) if self.ambiguous_words else "inf"),
            ("base_ratio", round(self.base_ratio, 3) if self.ambiguous_bases else "inf"),
        ]


def analyze_ambiguity(gold_lines: Iterable[str], table: DiacriticTable) -> AmbiguityStats:
    """A base is ambiguous when the data holds >= 2 diacritized versions of it;
    word occurrences are attributed to their base's class."""
    forms: dict[str, set[str]] = {}
    occurrences: dict[str, int] = {}
    for line in gold_lines:
        for _, word in words_of(line):
            base = dediacritize(word, table)
            forms.setdefault(base, set()).add(word)
            occurrences[base] = occurrences.get(base, 0) + 1
    stats = AmbiguityStats()
    for base, variants in forms.items():
        if len(variants) >= 2:
            stats.ambiguous_bases += 1
            stats.ambiguous_words += occurrences[base]
        else:
            stats.unambiguous_bases += 1
            stats.unambiguous_words += occurrences[base]
    return stats


@dataclass(frozen=True)
class ErrorSample:
    line_index: int
    position: int
    ref_char: str
    hyp_char: str
    context: str


def sample_errors(refs: Sequence[str], hyps: Sequence[str], k: int,
                  rng_seed: int = 0, context: int = 40) -> list[ErrorSample]:
    """Uniform sample (without replacement) of character mismatches.

    Deterministic under the seed; when there are fewer than k errors, all of
    them are returned.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    errors: list[ErrorSample] = []
    for index, (ref, hyp) in enumerate(zip(refs, hyps)):
        _check_pair(index, ref, hyp)
        for pos, (r, h) in enumerate(zip(ref, hyp)):
            if r != h:
                window = ref[max(0, pos - context):pos + context + 1]
                errors.append(ErrorSample(index, pos, r, h, window))
    if len(errors) <= k:
        return errors
    rng = np.random.default_rng(rng_seed)
    picks = rng.choice(len(errors), size=k, replace=False)
    return [errors[i] for i in sorted(picks)]
