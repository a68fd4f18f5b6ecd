"""Sequence and corpus metrics: syntax-error ratios, tokens per beat,
vocabulary coverage and wall-clock conversion timing.

Syntax errors are counted per category over every non-special token
after the first; each violating token lands in exactly one category
(type outranks time outranks duplicate-note) and is skipped for state
update, mirroring decoder recovery. Categories a scheme cannot express
are reported as not applicable rather than zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable, Sequence

from .bpe import MergeTable, undo_bpe
from .grammar import ErrorCategory, GrammarState, applicable_categories
from .score import Score
from .tokenizer import TokenSequence, detokenize, tokenize
from .vocab import SPECIAL_IDS, SchemeId, Vocabulary, build_vocabulary

DEFAULT_NNOF_MAX_BEATS = 16.0

CATEGORIES = tuple(c.value for c in ErrorCategory)


@dataclass
class TSEReport:
    """Per-category syntax-error counts and ratios for one sequence.

    ``ratios`` holds None for categories the scheme cannot produce.
    """

    counts: dict[str, int]
    denominator: int
    applicable: frozenset[str]

    @property
    def ratios(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        for category in CATEGORIES:
            if category not in self.applicable:
                out[category] = None
            elif self.denominator == 0:
                out[category] = 0.0
            else:
                out[category] = self.counts.get(category, 0) / self.denominator
        return out

    @property
    def total_errors(self) -> int:
        return sum(self.counts.values())

    def to_json(self) -> dict:
        return {
            "ratios": self.ratios,
            "counts": {c: self.counts.get(c, 0) for c in self.applicable},
            "denominator": self.denominator,
        }


def tse(
    sequence: TokenSequence,
    vocabulary: Vocabulary | None = None,
    merge_table: MergeTable | None = None,
    prompt_offset: int = 0,
    nnof_max_beats: float = DEFAULT_NNOF_MAX_BEATS,
) -> TSEReport:
    """Tokenization syntax errors of ``sequence``.

    Sequences holding learned ids must come with their ``merge_table``;
    they are expanded before evaluation since the grammar is defined on
    base tokens. Tokens before ``prompt_offset`` feed the grammar state
    without being counted, so a generated continuation can be scored in
    the context of its prompt.
    """
    scheme = sequence.scheme
    vocabulary = vocabulary or build_vocabulary(scheme)
    if merge_table is not None:
        if prompt_offset:
            head = undo_bpe(sequence.ids[:prompt_offset], merge_table)
            tail = undo_bpe(sequence.ids[prompt_offset:], merge_table)
            ids = head + tail
            prompt_offset = len(head)
        else:
            ids = undo_bpe(sequence.ids, merge_table)
    else:
        ids = list(sequence.ids)
        for token_id in ids:
            if not 0 <= token_id < len(vocabulary):
                raise ValueError(f"id {token_id} outside the vocabulary")

    state = GrammarState(vocabulary)
    counts: dict[str, int] = {}
    denominator = 0
    first_evaluated = max(prompt_offset, 1)  # the opening token only seeds the state
    for index, token_id in enumerate(ids):
        if token_id in SPECIAL_IDS:
            continue
        evaluated = index >= first_evaluated
        category = state.classify(token_id)
        if evaluated:
            denominator += 1
        if category is None:
            state.advance(token_id, evaluated=evaluated)
        elif evaluated:
            counts[category.value] = counts.get(category.value, 0) + 1

    applicable = frozenset(c.value for c in applicable_categories(scheme))
    if ErrorCategory.NNOF.value in applicable:
        missing = state.missing_noteoff_count(nnof_max_beats)
        if missing:
            counts[ErrorCategory.NNOF.value] = missing
    return TSEReport(counts=counts, denominator=denominator, applicable=applicable)


def aggregate_tse(reports: Iterable[TSEReport]) -> TSEReport:
    """Pool several reports into one (counts and denominators add up)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    counts: dict[str, int] = {}
    denominator = 0
    applicable: frozenset[str] = frozenset()
    for report in reports:
        denominator += report.denominator
        applicable = applicable | report.applicable
        for category, count in report.counts.items():
            counts[category] = counts.get(category, 0) + count
    return TSEReport(counts=counts, denominator=denominator, applicable=applicable)


def _file_token_count(sequences: Sequence[TokenSequence]) -> int:
    return sum(len(s.non_special_ids()) for s in sequences)


def _beats_spanned(score: Score) -> float:
    return max(1.0, score.end_tick() / score.ticks_per_beat)


def tokens_per_beat(
    scores: Sequence[Score],
    scheme: SchemeId,
    merge_table: MergeTable | None = None,
    vocabulary: Vocabulary | None = None,
) -> float:
    """Mean over files of non-special token count per beat spanned."""
    if not scores:
        raise ValueError("empty corpus")
    vocabulary = vocabulary or build_vocabulary(scheme)
    ratios = []
    for score in scores:
        sequences = tokenize(score, scheme, vocabulary=vocabulary)
        if merge_table is not None:
            from .bpe import apply_bpe

            sequences = [apply_bpe(s, merge_table) for s in sequences]
        ratios.append(_file_token_count(sequences) / _beats_spanned(score))
    return sum(ratios) / len(ratios)


def vocab_coverage(
    sequences: Iterable[TokenSequence | list[int]], vocabulary_size: int | Vocabulary
) -> float:
    """Fraction of non-special vocabulary ids appearing at least once."""
    size = (
        len(vocabulary_size) if isinstance(vocabulary_size, Vocabulary) else vocabulary_size
    )
    usable = size - len(SPECIAL_IDS)
    if usable <= 0:
        raise ValueError("vocabulary holds only special tokens")
    seen: set[int] = set()
    for sequence in sequences:
        ids = sequence.ids if isinstance(sequence, TokenSequence) else sequence
        for token_id in ids:
            if token_id not in SPECIAL_IDS:
                if not 0 <= token_id < size:
                    raise ValueError(f"id {token_id} outside the vocabulary")
                seen.add(token_id)
    return len(seen) / usable


@dataclass
class TimingProfile:
    """Mean wall-clock conversion cost per file, in seconds."""

    tokenize_seconds_per_file: float
    detokenize_seconds_per_file: float
    repetitions: int

    def to_json(self) -> dict:
        return {
            "tokenize_seconds_per_file": self.tokenize_seconds_per_file,
            "detokenize_seconds_per_file": self.detokenize_seconds_per_file,
            "repetitions": self.repetitions,
        }


def timing_profile(
    scores: Sequence[Score],
    scheme: SchemeId,
    merge_table: MergeTable | None = None,
    repetitions: int = 3,
    vocabulary: Vocabulary | None = None,
) -> TimingProfile:
    """Measure tokenize/detokenize wall-clock means over warm repetitions.

    Purely informational: hardware-dependent, never compared to any
    reference figure.
    """
    if not scores:
        raise ValueError("empty corpus")
    repetitions = max(3, repetitions)
    vocabulary = vocabulary or build_vocabulary(scheme)
    from .bpe import apply_bpe

    # warm-up pass, also captures the sequences for the decode timing
    encoded: list[list[TokenSequence]] = []
    for score in scores:
        sequences = tokenize(score, scheme, vocabulary=vocabulary)
        if merge_table is not None:
            sequences = [apply_bpe(s, merge_table) for s in sequences]
        encoded.append(sequences)

    start = time.perf_counter()
    for _ in range(repetitions):
        for score in scores:
            sequences = tokenize(score, scheme, vocabulary=vocabulary)
            if merge_table is not None:
                for sequence in sequences:
                    apply_bpe(sequence, merge_table)
    tokenize_seconds = (time.perf_counter() - start) / (repetitions * len(scores))

    start = time.perf_counter()
    for _ in range(repetitions):
        for sequences in encoded:
            if merge_table is not None:
                sequences = [undo_bpe(s, merge_table) for s in sequences]
            detokenize(sequences, vocabulary=vocabulary)
    detokenize_seconds = (time.perf_counter() - start) / (repetitions * len(scores))

    return TimingProfile(tokenize_seconds, detokenize_seconds, repetitions)


@dataclass
class CorpusStats:
    """Corpus-level summary used by the reporting path."""

    tokens_per_beat: float
    vocab_coverage: float
    file_count: int
    token_count: int
    timing: TimingProfile | None = None

    def to_json(self) -> dict:
        data = {
            "tokens_per_beat": self.tokens_per_beat,
            "coverage": self.vocab_coverage,
            "file_count": self.file_count,
            "token_count": self.token_count,
        }
        if self.timing is not None:
            data["timing"] = self.timing.to_json()
        return data


def corpus_stats(
    scores: Sequence[Score],
    scheme: SchemeId,
    merge_table: MergeTable | None = None,
    vocabulary: Vocabulary | None = None,
    with_timing: bool = True,
) -> CorpusStats:
    """Tokens/beat, coverage and timing for a corpus of scores."""
    if not scores:
        raise ValueError("empty corpus")
    vocabulary = vocabulary or build_vocabulary(scheme)
    from .bpe import apply_bpe

    all_sequences: list[TokenSequence] = []
    ratios = []
    for score in scores:
        sequences = tokenize(score, scheme, vocabulary=vocabulary)
        if merge_table is not None:
            sequences = [apply_bpe(s, merge_table) for s in sequences]
        all_sequences.extend(sequences)
        ratios.append(_file_token_count(sequences) / _beats_spanned(score))

    size = len(vocabulary) + (len(merge_table) if merge_table is not None else 0)
    return CorpusStats(
        tokens_per_beat=sum(ratios) / len(ratios),
        vocab_coverage=vocab_coverage(all_sequences, size),
        file_count=len(scores),
        token_count=sum(len(s.ids) for s in all_sequences),
        timing=timing_profile(scores, scheme, merge_table, vocabulary=vocabulary)
        if with_timing
        else None,
    )
