"""Self-supervised dataset construction: cleaning, stripping, augmentation, batching.

Corpora are UTF-8 plain text, one sequence per line.  Stripping the marks off
gold text yields the training input, so any text in the target language is
training data.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .lang import DiacriticTable
from .model import CharVocab

log = logging.getLogger(__name__)

# beyond printable ASCII and the language's own characters, these common
# typographic marks do not make a line exotic
DEFAULT_EXTRA_CHARS = "«»„“”‘’–—…° "

_ASCII_PRINTABLE = frozenset(chr(c) for c in range(0x20, 0x7F))


@dataclass
class CleanStats:
    """Per-reason drop counts plus summary statistics of the kept lines."""

    kept: int = 0
    dropped_exotic: int = 0
    dropped_low_ratio: int = 0
    dropped_invalid_utf8: int = 0
    dropped_empty: int = 0
    truncated: int = 0
    kept_characters: int = 0

    @property
    def total_seen(self) -> int:
        return (self.kept + self.dropped_exotic + self.dropped_low_ratio
                + self.dropped_invalid_utf8 + self.dropped_empty)

    @property
    def average_length(self) -> float:
        return self.kept_characters / self.kept if self.kept else 0.0

    def to_rows(self) -> list[tuple[str, object]]:
        return [
            ("sequences", self.kept),
            ("avg_seq_len", round(self.average_length, 2)),
            ("characters", self.kept_characters),
            ("dropped_exotic", self.dropped_exotic),
            ("dropped_low_ratio", self.dropped_low_ratio),
            ("dropped_invalid_utf8", self.dropped_invalid_utf8),
            ("dropped_empty", self.dropped_empty),
            ("truncated", self.truncated),
        ]


def allowed_characters(table: DiacriticTable, extra: str = DEFAULT_EXTRA_CHARS) -> frozenset[str]:
    """Characters that do not count as exotic: printable ASCII, the table's
    marked characters and their bases, plus a configurable punctuation set."""
    return frozenset(_ASCII_PRINTABLE | set(table.marked_chars)
                     | set(table.mapped_bases) | set(extra))


def truncate_line(line: str, max_len: int) -> str:
    """Cut to at most max_len scalars at the last whitespace before the limit
    (hard cut when the prefix has no whitespace)."""
    if len(line) <= max_len:
        return line
    prefix = line[:max_len]
    cut = max(prefix.rfind(ch) for ch in " \t")
    if cut <= 0:
        return prefix
    return prefix[:cut].rstrip()


def diacritic_ratio(line: str, table: DiacriticTable) -> float | None:
    """Marked characters over markable characters; None when nothing is markable."""
    marked = sum(1 for ch in line if ch in table.mapping)
    markable = sum(1 for ch in line if table.is_important(ch))
    if markable == 0:
        return None
    return marked / markable


def clean_corpus(
    lines: Iterable[str | bytes],
    table: DiacriticTable,
    max_len: int = 500,
    min_diacritic_ratio: float = 0.05,
    extra_chars: str = DEFAULT_EXTRA_CHARS,
) -> Iterator[tuple[str | None, CleanStats]]:
    """Filter and truncate lines one by one.

    Yields (kept_line_or_None, stats) pairs so callers can stream; the stats
    object is shared and accumulates across the iteration.  Byte inputs that
    fail to decode are dropped with their own counter, never aborting the run.
    """
    allowed = allowed_characters(table, extra_chars)
    stats = CleanStats()
    for raw in lines:
        if isinstance(raw, bytes):
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                stats.dropped_invalid_utf8 += 1
                yield None, stats
                continue
        else:
            line = raw
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            stats.dropped_empty += 1
            yield None, stats
            continue
        if any(ch not in allowed for ch in line):
            stats.dropped_exotic += 1
            yield None, stats
            continue
        truncated = truncate_line(line, max_len)
        if len(truncated) < len(line):
            stats.truncated += 1
        line = truncated
        ratio = diacritic_ratio(line, table)
        if ratio is not None and ratio < min_diacritic_ratio:
            stats.dropped_low_ratio += 1
            yield None, stats
            continue
        stats.kept += 1
        stats.kept_characters += len(line)
        yield line, stats


def clean_lines(lines, table, **kwargs) -> tuple[list[str], CleanStats]:
    """Non-streaming convenience wrapper around clean_corpus."""
    kept: list[str] = []
    stats = CleanStats()
    for line, stats in clean_corpus(lines, table, **kwargs):
        if line is not None:
            kept.append(line)
    return kept, stats


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

N_SHARDS = 1000


def shard_of(line: str) -> int:
    """Deterministic content hash into one of 1000 shards (stable across runs)."""
    digest = hashlib.sha1(line.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % N_SHARDS


def parse_shard_set(spec: str) -> frozenset[int]:
    """A bare "N" means the first N shards; otherwise a comma list of shard
    numbers and "a-b" ranges."""
    spec = spec.strip()
    if spec.isdigit():
        return frozenset(range(int(spec)))
    shards: set[int] = set()
    for part in spec.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            shards.update(range(int(lo), int(hi) + 1))
        elif part:
            shards.add(int(part))
    return frozenset(s for s in shards if 0 <= s < N_SHARDS)


def split_lines(lines: Iterable[str], dev_shards: frozenset[int]) -> tuple[list[str], list[str]]:
    train, dev = [], []
    for line in lines:
        (dev if shard_of(line) in dev_shards else train).append(line)
    return train, dev


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

def augment(target_line: str, table: DiacriticTable, p: float = 0.8, rng=0) -> str:
    """Strip each marked character independently with probability p.

    p=1 equals dediacritize, p=0 is the identity; deterministic under seed.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"augmentation probability must be in [0,1], got {p}")
    if p == 0.0:
        return target_line
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    out = []
    for ch in target_line:
        base = table.mapping.get(ch)
        if base is not None and (p >= 1.0 or rng.random() < p):
            out.append(base)
        else:
            out.append(ch)
    return "".join(out)


# ---------------------------------------------------------------------------
# datasets and batching
# ---------------------------------------------------------------------------

class LineIndex:
    """Random access into a text file by line number via a byte-offset index,
    so epoch streaming holds O(1) of the corpus in memory."""

    def __init__(self, path):
        self.path = Path(path)
        offsets = []
        with open(self.path, "rb") as fh:
            pos = fh.tell()
            for raw in fh:
                offsets.append(pos)
                pos += len(raw)
        self._offsets = np.array(offsets, dtype=np.int64)
        self._fh = open(self.path, "rb")

    def __len__(self) -> int:
        return len(self._offsets)

    def __getitem__(self, i: int) -> str:
        self._fh.seek(self._offsets[i])
        return self._fh.readline().decode("utf-8").rstrip("\n").rstrip("\r")

    def close(self):
        self._fh.close()


@dataclass
class SequenceBatch:
    """Padded id matrices for one batch: augmented inputs, gold targets, mask."""

    input_ids: np.ndarray        # int32 [B, n_max]
    target_ids: np.ndarray       # int32 [B, n_max]
    mask: np.ndarray             # bool  [B, n_max], True = real position
    lengths: np.ndarray          # int32 [B]
    gold_lines: list[str] = field(repr=False, default_factory=list)


def encode_pairs(input_lines: Sequence[str], gold_lines: Sequence[str],
                 vocab: CharVocab) -> SequenceBatch:
    lengths = np.array([len(t) for t in gold_lines], dtype=np.int32)
    n_max = max(1, int(lengths.max(initial=0)))
    batch = len(gold_lines)
    input_ids = np.full((batch, n_max), CharVocab.PAD, dtype=np.int32)
    target_ids = np.full((batch, n_max), CharVocab.PAD, dtype=np.int32)
    mask = np.zeros((batch, n_max), dtype=bool)
    for b, (inp, gold) in enumerate(zip(input_lines, gold_lines)):
        input_ids[b, :len(inp)] = vocab.encode(inp)
        target_ids[b, :len(gold)] = vocab.encode(gold)
        mask[b, :len(gold)] = True
    return SequenceBatch(input_ids, target_ids, mask, lengths, list(gold_lines))


class BatchPartition:
    """Fixed partition of the dataset into persistent batches.

    Built once per training run: a seed-deterministic shuffle chunked into
    groups of batch_size line indices.  Epochs draw batches uniformly with
    replacement; augmentation is re-randomized at every access.
    """

    def __init__(self, dataset, batch_size: int, seed: int):
        if len(dataset) == 0:
            raise ValueError("dataset is empty")
        self.dataset = dataset
        if batch_size > len(dataset):
            log.warning("batch size %d exceeds dataset size %d; using one smaller batch",
                        batch_size, len(dataset))
            batch_size = len(dataset)
        order = np.random.default_rng([seed, 0x9a27]).permutation(len(dataset))
        self.groups = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]

    def __len__(self) -> int:
        return len(self.groups)

    def gold_lines(self, group_index: int) -> list[str]:
        return [self.dataset[int(i)] for i in self.groups[group_index]]


def make_epoch(
    partition: BatchPartition,
    epoch: int,
    vocab: CharVocab,
    table: DiacriticTable,
    augment_p: float = 0.8,
    batches_per_epoch: int = 500,
    seed: int = 0,
) -> Iterator[SequenceBatch]:
    """One epoch: batches_per_epoch uniform draws (with replacement) from the
    persistent partition, freshly augmented on every access.  All randomness
    derives statelessly from (seed, epoch, draw index)."""
    draw_rng = np.random.default_rng([seed, epoch, 0x5eed])
    picks = draw_rng.integers(0, len(partition), size=batches_per_epoch)
    for draw_index, group_index in enumerate(picks):
        gold = partition.gold_lines(int(group_index))
        aug_rng = np.random.default_rng([seed, epoch, draw_index, 0xa46])
        inputs = [augment(line, table, augment_p, aug_rng) for line in gold]
        yield encode_pairs(inputs, gold, vocab)


def corpus_stats(lines: Iterable[str]) -> tuple[int, float, int]:
    """(sequences, average length, characters) of a corpus."""
    count = 0
    chars = 0
    for line in lines:
        count += 1
        chars += len(line)
    return count, (chars / count if count else 0.0), chars
