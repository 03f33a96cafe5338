"""Copy and dictionary baselines for the comparison rows of the reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .lang import DiacriticTable, dediacritize


def copy_restore(text: str) -> str:
    """The do-nothing baseline: emit the input unchanged."""
    return text


def words_of(text: str) -> Iterator[tuple[int, str]]:
    """Maximal alphabetic runs with their start offsets; punctuation never
    blocks a lookup this way."""
    start = None
    for i, ch in enumerate(text):
        if ch.isalpha():
            if start is None:
                start = i
        elif start is not None:
            yield start, text[start:i]
            start = None
    if start is not None:
        yield start, text[start:]


@dataclass
class DiacriticDictionary:
    """Occurrence counts of diacritized forms per word base, with the most
    frequent form chosen for restoration (ties break to the codepoint-smaller
    form)."""

    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    _best: dict[str, str] | None = field(default=None, repr=False)

    def add(self, base: str, form: str, count: int = 1):
        self.counts.setdefault(base, {})
        self.counts[base][form] = self.counts[base].get(form, 0) + count
        self._best = None

    @property
    def best(self) -> dict[str, str]:
        if self._best is None:
            self._best = {
                base: min(forms, key=lambda f: (-forms[f], f))
                for base, forms in self.counts.items()
            }
        return self._best

    def __len__(self) -> int:
        return len(self.counts)

    def save(self, path):
        """Sorted `base TAB form TAB count` lines, UTF-8."""
        with open(path, "w", encoding="utf-8") as fh:
            for base in sorted(self.counts):
                for form in sorted(self.counts[base]):
                    fh.write(f"{base}\t{form}\t{self.counts[base][form]}\n")

    @classmethod
    def load(cls, path) -> "DiacriticDictionary":
        dictionary = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            base, form, count = line.split("\t")
            dictionary.add(base, form, int(count))
        return dictionary


def build_dictionary(target_lines: Iterable[str], table: DiacriticTable) -> DiacriticDictionary:
    """Count every diacritized form per base over gold text."""
    dictionary = DiacriticDictionary()
    for line in target_lines:
        for _, word in words_of(line):
            dictionary.add(dediacritize(word, table), word)
    return dictionary


def _reapply_case(pattern: str, form: str) -> str:
    return "".join(f.upper() if p.isupper() else f for p, f in zip(pattern, form))


def dictionary_restore(text: str, dictionary: DiacriticDictionary,
                       table: DiacriticTable) -> str:
    """Replace each alphabetic run by its base's most frequent form.

    Exact-case lookup first, then a lowercase lookup with the original case
    pattern reapplied; unknown bases are copied through.
    """
    best = dictionary.best
    out = list(text)
    for start, word in words_of(text):
        base = dediacritize(word, table)
        form = best.get(base)
        if form is None:
            lower_form = best.get(base.lower())
            if lower_form is not None and len(lower_form) == len(word):
                form = _reapply_case(word, lower_form)
        if form is not None and len(form) == len(word):
            out[start:start + len(word)] = form
    return "".join(out)
