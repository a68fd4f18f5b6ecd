"""Byte Pair Encoding over token-id corpora.

Learning repeatedly replaces the globally most frequent adjacent id pair
with a fresh id until the vocabulary reaches its target size or no pair
occurs twice. Pairs containing special tokens are never merged and pairs
never form across sequence boundaries. Occurrences are counted and
substituted greedily left to right, so a run of three equal ids yields
one merge plus one leftover. Frequency ties go to the pair whose first
occurrence comes earliest in corpus scan order, which makes learning
fully reproducible.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .tokenizer import TokenSequence
from .vocab import SPECIAL_IDS, TokenType, Vocabulary

Pair = tuple[int, int]


@dataclass
class MergeTable:
    """Ordered merge rules; the id of rank ``r`` is ``base_size + r``.

    ``target_size`` records the size learning aimed for; the achieved
    size (``base_size + len(merges)``) may be smaller when the corpus
    ran out of repeating pairs.
    """

    base_size: int
    merges: list[Pair] = field(default_factory=list)
    vocabulary: Vocabulary | None = None
    target_size: int | None = None
    _expansions: dict[int, tuple[int, ...]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        for rank, (left, right) in enumerate(self.merges):
            new_id = self.base_size + rank
            for side in (left, right):
                if side in SPECIAL_IDS:
                    raise ValueError("merge references a special token")
                if not 0 <= side < new_id:
                    raise ValueError(f"merge rank {rank} references unknown id {side}")

    def __len__(self) -> int:
        return len(self.merges)

    @property
    def size(self) -> int:
        return self.base_size + len(self.merges)

    def expansion(self, token_id: int) -> tuple[int, ...]:
        """Base-id expansion of ``token_id`` (identity for base ids)."""
        if token_id < self.base_size:
            if token_id < 0:
                raise ValueError(f"negative token id {token_id}")
            return (token_id,)
        if token_id >= self.size:
            raise ValueError(f"id {token_id} outside the extended vocabulary")
        cached = self._expansions.get(token_id)
        if cached is None:
            left, right = self.merges[token_id - self.base_size]
            cached = self.expansion(left) + self.expansion(right)
            self._expansions[token_id] = cached
        return cached

    def to_json(self) -> dict:
        return {"base_size": self.base_size, "merges": [list(m) for m in self.merges]}

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json(), handle, indent=0)
            handle.write("\n")

    @classmethod
    def from_json(cls, data: dict, vocabulary: Vocabulary | None = None) -> "MergeTable":
        return cls(
            base_size=int(data["base_size"]),
            merges=[(int(l), int(r)) for l, r in data["merges"]],
            vocabulary=vocabulary,
        )

    @classmethod
    def load(cls, path, vocabulary: Vocabulary | None = None) -> "MergeTable":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_json(json.load(handle), vocabulary=vocabulary)

    def truncated(self, n_merges: int) -> "MergeTable":
        """Prefix table with at most ``n_merges`` rules (smaller budget)."""
        return MergeTable(self.base_size, self.merges[:n_merges], self.vocabulary)


def _pair_counts(ids: list[int]) -> Counter:
    """Left-to-right non-overlapping pair counts, special ids excluded."""
    counts: Counter = Counter()
    n = len(ids)
    i = 0
    while i < n - 1:
        a, b = ids[i], ids[i + 1]
        if a == b:
            j = i
            while j < n and ids[j] == a:
                j += 1
            if a not in SPECIAL_IDS:
                counts[a, a] += (j - i) // 2
            i = j - 1
        else:
            if a not in SPECIAL_IDS and b not in SPECIAL_IDS:
                counts[a, b] += 1
            i += 1
    return counts


def _substitute(ids: list[int], pair: Pair, new_id: int) -> list[int]:
    left, right = pair
    out: list[int] = []
    i = 0
    n = len(ids)
    while i < n:
        if i < n - 1 and ids[i] == left and ids[i + 1] == right:
            out.append(new_id)
            i += 2
        else:
            out.append(ids[i])
            i += 1
    return out


def _first_occurrence_winner(corpus: list[list[int]], candidates: set[Pair]) -> Pair:
    for ids in corpus:
        for i in range(len(ids) - 1):
            pair = (ids[i], ids[i + 1])
            if pair in candidates:
                return pair
    raise RuntimeError("tied pair vanished from the corpus")


def _as_id_lists(corpus) -> list[list[int]]:
    out = []
    for item in corpus:
        out.append(list(item.ids) if isinstance(item, TokenSequence) else list(item))
    return out


def learn_bpe(
    corpus,
    target_size: int,
    base_size: int | None = None,
    vocabulary: Vocabulary | None = None,
) -> MergeTable:
    """Learn merges greedily until the vocabulary reaches ``target_size``.

    ``corpus`` is a list of :class:`TokenSequence` or raw id lists over
    the base vocabulary. Learning stops early when the best pair occurs
    fewer than twice; the returned table then holds fewer merges.
    """
    if vocabulary is not None and base_size is None:
        base_size = len(vocabulary)
    if base_size is None:
        raise ValueError("base_size or vocabulary required")
    if target_size < base_size:
        raise ValueError(f"target size {target_size} below base size {base_size}")
    sequences = _as_id_lists(corpus)
    if not sequences:
        raise ValueError("empty corpus")
    for ids in sequences:
        for token_id in ids:
            if not 0 <= token_id < base_size:
                raise ValueError(f"id {token_id} outside the base vocabulary")

    per_sequence = [_pair_counts(ids) for ids in sequences]
    totals: Counter = Counter()
    containing: dict[Pair, set[int]] = {}
    for index, counts in enumerate(per_sequence):
        totals.update(counts)
        for pair in counts:
            containing.setdefault(pair, set()).add(index)

    merges: list[Pair] = []
    while base_size + len(merges) < target_size:
        if not totals:
            break
        best_count = max(totals.values())
        if best_count < 2:
            break
        candidates = {p for p, c in totals.items() if c == best_count}
        if len(candidates) == 1:
            best = next(iter(candidates))
        else:
            best = _first_occurrence_winner(sequences, candidates)
        new_id = base_size + len(merges)
        merges.append(best)
        for index in sorted(containing.get(best, ())):
            old_counts = per_sequence[index]
            sequences[index] = _substitute(sequences[index], best, new_id)
            new_counts = _pair_counts(sequences[index])
            per_sequence[index] = new_counts
            for pair, count in old_counts.items():
                totals[pair] -= count
                if totals[pair] <= 0:
                    del totals[pair]
                members = containing.get(pair)
                if members is not None:
                    members.discard(index)
                    if not members:
                        del containing[pair]
            totals.update(new_counts)
            for pair in new_counts:
                containing.setdefault(pair, set()).add(index)

    return MergeTable(base_size, merges, vocabulary=vocabulary, target_size=target_size)


def _apply_ids(ids: list[int], table: MergeTable) -> list[int]:
    out = list(ids)
    present = set(out)
    for rank, pair in enumerate(table.merges):
        if pair[0] in present and pair[1] in present:
            new = _substitute(out, pair, table.base_size + rank)
            if len(new) != len(out):
                out = new
                present = set(out)
    return out


def apply_bpe(sequence: TokenSequence | list[int], table: MergeTable):
    """Encode a base-id sequence with the merge table.

    Merges apply in rank order, each substituting all of its occurrences
    left to right, which reproduces the state learning left the corpus in.
    """
    ids = sequence.ids if isinstance(sequence, TokenSequence) else sequence
    for token_id in ids:
        if not 0 <= token_id < table.base_size:
            raise ValueError(f"id {token_id} outside the base vocabulary")
    encoded = _apply_ids(list(ids), table)
    if isinstance(sequence, TokenSequence):
        return TokenSequence(
            sequence.scheme, encoded, sequence.ticks_per_beat, sequence.program
        )
    return encoded


def undo_bpe(sequence: TokenSequence | list[int], table: MergeTable):
    """Expand every learned id back to base ids; inverse of :func:`apply_bpe`."""
    ids = sequence.ids if isinstance(sequence, TokenSequence) else sequence
    decoded: list[int] = []
    for token_id in ids:
        decoded.extend(table.expansion(token_id))
    if isinstance(sequence, TokenSequence):
        return TokenSequence(
            sequence.scheme, decoded, sequence.ticks_per_beat, sequence.program
        )
    return decoded


@dataclass
class BpeStats:
    """Shape of a learned vocabulary: expansion lengths and type make-up."""

    lengths: dict[int, int] = field(default_factory=dict)
    compositions: dict[int, tuple[str, ...]] = field(default_factory=dict)
    average_length: float = 0.0
    max_length: int = 0
    # (vocabulary size, running average, running max) after each merge
    length_curve: list[tuple[int, float, int]] = field(default_factory=list)
    type_histogram: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "average_length": self.average_length,
            "max_length": self.max_length,
            "length_curve": [
                {"vocab_size": v, "average": a, "max": m} for v, a, m in self.length_curve
            ],
            "type_histogram": dict(self.type_histogram),
        }


def merge_stats(table: MergeTable, vocabulary: Vocabulary | None = None) -> BpeStats:
    """Expansion lengths and base-type composition of the learned tokens."""
    vocabulary = vocabulary or table.vocabulary
    stats = BpeStats()
    if not table.merges:
        return stats
    total = 0
    running_max = 0
    for rank in range(len(table.merges)):
        token_id = table.base_size + rank
        expansion = table.expansion(token_id)
        stats.lengths[token_id] = len(expansion)
        total += len(expansion)
        running_max = max(running_max, len(expansion))
        stats.length_curve.append((table.base_size + rank + 1, total / (rank + 1), running_max))
        if vocabulary is not None:
            composition = tuple(
                vocabulary.descriptor(i).type.value for i in expansion
            )
            stats.compositions[token_id] = composition
    stats.average_length = total / len(table.merges)
    stats.max_length = running_max
    if stats.compositions:
        histogram: Counter = Counter(
            "-".join(parts) for parts in stats.compositions.values()
        )
        n = sum(histogram.values())
        stats.type_histogram = {k: v / n for k, v in sorted(histogram.items())}
    return stats


def extended_vocabulary(vocabulary: Vocabulary, table: MergeTable) -> Vocabulary:
    """Base vocabulary plus one descriptor per learned merge."""
    if table.base_size != len(vocabulary):
        raise ValueError("merge table does not extend this vocabulary")
    from .vocab import TokenDescriptor

    entries = list(vocabulary.entries)
    for rank, (left, right) in enumerate(table.merges):
        token_id = table.base_size + rank
        entries.append(
            TokenDescriptor(token_id, f"BPE_{left}.{right}", TokenType.BPE, (left, right))
        )
    return Vocabulary(entries, scheme=vocabulary.scheme, config=vocabulary.config)
