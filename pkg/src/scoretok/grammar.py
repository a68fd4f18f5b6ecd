"""Token-grammar state machine shared by masking, validation and decoding.

Each tokenization scheme induces a syntax over token types and values:
which types may follow which, that positions only move forward within a
bar, that a note is not re-onset at the same moment by the same
instrument, and that note-offs only close sounding notes. A
:class:`GrammarState` tracks everything needed to answer "which tokens
are valid next" and to classify a violating token into exactly one error
category. Violating tokens never update the state, which is also how the
decoder recovers from malformed sequences.
"""

from __future__ import annotations

from collections import deque
from enum import Enum
from fractions import Fraction

from .vocab import (
    EOS_ID,
    SchemeId,
    SchemeKind,
    TokenDescriptor,
    TokenType,
    Vocabulary,
)

_SPECIALS = {TokenType.PAD, TokenType.BOS, TokenType.EOS, TokenType.MASK, TokenType.SEP}
_PITCH_BEARING = {TokenType.PITCH, TokenType.NOTE_ON, TokenType.MERGED}


class ErrorCategory(str, Enum):
    TYPE = "type"
    TIME = "time"
    DUPN = "dupn"
    NNOF = "nnof"
    NNON = "nnon"


def applicable_categories(scheme: SchemeId) -> frozenset[ErrorCategory]:
    """Error categories that can occur at all under ``scheme``."""
    categories = {ErrorCategory.TYPE, ErrorCategory.DUPN}
    if scheme.time_model == SchemeKind.REMI:
        categories.add(ErrorCategory.TIME)
    if scheme.kind == SchemeKind.MIDI_LIKE:
        categories.update({ErrorCategory.NNOF, ErrorCategory.NNON})
    return frozenset(categories)


def _merged_pitch(descriptor: TokenDescriptor) -> int:
    return descriptor.value[0][1]


class _NoteOnRecord:
    __slots__ = ("evaluated", "onset_steps", "closed_steps")

    def __init__(self, evaluated: bool, onset_steps: int):
        self.evaluated = evaluated
        self.onset_steps = onset_steps
        self.closed_steps: int | None = None


class GrammarState:
    """Incremental grammar state over one token sequence.

    Feed tokens through :meth:`step`; query :meth:`allowed_ids` for the
    rule-based mask of valid next tokens. Special tokens are transparent:
    they are never classified and never change the state.
    """

    def __init__(self, vocabulary: Vocabulary):
        if vocabulary.scheme is None or vocabulary.config is None:
            raise ValueError("vocabulary must carry its scheme and config")
        self.vocabulary = vocabulary
        self.scheme = vocabulary.scheme
        config = vocabulary.config
        self._resolution = config.resolution_per_beat
        self._bar_steps = 4 * self._resolution
        self._position_steps = self._bar_steps // config.positions_per_bar

        self.last: TokenType | None = None
        self.bar = -1
        self.position: int | None = None
        self.time_steps = 0
        self.pending_program: int | None = None
        self.onset_registry: set[tuple[int, int]] = set()
        self.sounding: dict[tuple[int, int], deque[int]] = {}
        self.noteon_log: list[_NoteOnRecord] = []
        self._merged_ids_by_pitch = vocabulary.merged_ids_by_pitch()

    def clone(self) -> "GrammarState":
        """Independent copy; cheap enough for lookahead probes."""
        other = GrammarState.__new__(GrammarState)
        other.vocabulary = self.vocabulary
        other.scheme = self.scheme
        other._resolution = self._resolution
        other._bar_steps = self._bar_steps
        other._position_steps = self._position_steps
        other.last = self.last
        other.bar = self.bar
        other.position = self.position
        other.time_steps = self.time_steps
        other.pending_program = self.pending_program
        other.onset_registry = set(self.onset_registry)
        other.sounding = {k: deque(v) for k, v in self.sounding.items()}
        other.noteon_log = []
        for record in self.noteon_log:
            copy = _NoteOnRecord(record.evaluated, record.onset_steps)
            copy.closed_steps = record.closed_steps
            other.noteon_log.append(copy)
        other._merged_ids_by_pitch = self._merged_ids_by_pitch
        return other

    # -- state queries -------------------------------------------------

    def _effective_program(self) -> int:
        return self.pending_program if self.pending_program is not None else 0

    @property
    def current_onset_steps(self) -> int | None:
        """Absolute time of a note onset emitted now, in grid steps."""
        if self.scheme.time_model == SchemeKind.REMI:
            if self.position is None:
                return None
            return self.bar * self._bar_steps + self.position * self._position_steps
        return self.time_steps

    def shift_steps(self, value: Fraction) -> int:
        return int(value * self._resolution)

    def _note_start(self) -> frozenset[TokenType]:
        if self.scheme.use_programs:
            return frozenset({TokenType.PROGRAM})
        if self.scheme.kind == SchemeKind.MIDI_LIKE:
            return frozenset({TokenType.NOTE_ON, TokenType.NOTE_OFF})
        return frozenset({self.scheme.note_token_type})

    def allowed_types(self) -> frozenset[TokenType]:
        """Token types that cannot create a syntax error from this state."""
        scheme, last = self.scheme, self.last
        start = self._note_start()
        if scheme.kind == SchemeKind.MIDI_LIKE:
            if last == TokenType.PROGRAM:
                return frozenset({TokenType.NOTE_ON, TokenType.NOTE_OFF})
            if last == TokenType.NOTE_ON:
                return frozenset({TokenType.VELOCITY})
            return frozenset({TokenType.TIME_SHIFT}) | start
        if scheme.time_model == SchemeKind.REMI:
            if last is None:
                return frozenset({TokenType.BAR})
            if last == TokenType.BAR:
                return frozenset({TokenType.BAR, TokenType.POSITION})
            if last == TokenType.POSITION:
                return start
            if last == TokenType.PROGRAM:
                return frozenset({scheme.note_token_type})
            if last == TokenType.PITCH:
                return frozenset({TokenType.VELOCITY})
            if last == TokenType.VELOCITY:
                return frozenset({TokenType.DURATION})
            if last == TokenType.MERGED and scheme.kind == SchemeKind.PVM:
                return frozenset({TokenType.DURATION})
            # after a completed note (Duration, or a PVDm merged token)
            return start | frozenset({TokenType.POSITION, TokenType.BAR})
        # TSD-style time shifts
        if last == TokenType.PROGRAM:
            return frozenset({scheme.note_token_type})
        if last == TokenType.PITCH:
            return frozenset({TokenType.VELOCITY})
        if last == TokenType.VELOCITY:
            return frozenset({TokenType.DURATION})
        if last == TokenType.MERGED and scheme.kind == SchemeKind.PVM:
            return frozenset({TokenType.DURATION})
        return frozenset({TokenType.TIME_SHIFT}) | start

    def is_complete(self) -> bool:
        """True when the sequence may validly end here."""
        last = self.last
        if last is None:
            return True
        if self.scheme.kind == SchemeKind.MIDI_LIKE:
            return last in (TokenType.TIME_SHIFT, TokenType.VELOCITY, TokenType.NOTE_OFF)
        if last == TokenType.MERGED:
            return self.scheme.kind == SchemeKind.PVDM
        if self.scheme.time_model == SchemeKind.REMI:
            return last in (TokenType.BAR, TokenType.DURATION)
        return last in (TokenType.TIME_SHIFT, TokenType.DURATION)

    # -- classification and transitions ---------------------------------

    def classify(self, token_id: int) -> ErrorCategory | None:
        """Error category the token would create now, or None if valid."""
        descriptor = self.vocabulary.descriptor(token_id)
        token_type = descriptor.type
        if token_type in _SPECIALS:
            return None
        if token_type not in self.allowed_types():
            return ErrorCategory.TYPE
        if token_type == TokenType.POSITION:
            if self.position is not None and descriptor.value <= self.position:
                return ErrorCategory.TIME
        elif token_type in _PITCH_BEARING:
            program = self._effective_program()
            pitch = (
                _merged_pitch(descriptor)
                if token_type == TokenType.MERGED
                else descriptor.value
            )
            if (program, pitch) in self.onset_registry:
                return ErrorCategory.DUPN
        elif token_type == TokenType.NOTE_OFF:
            program = self._effective_program()
            if not self.sounding.get((program, descriptor.value)):
                return ErrorCategory.NNON
        return None

    def advance(self, token_id: int, evaluated: bool = True) -> None:
        """Apply a valid token; call only when :meth:`classify` returned None."""
        descriptor = self.vocabulary.descriptor(token_id)
        token_type = descriptor.type
        if token_type in _SPECIALS:
            return
        if token_type == TokenType.BAR:
            self.bar += 1
            self.position = None
            self.onset_registry.clear()
        elif token_type == TokenType.POSITION:
            self.position = descriptor.value
            self.time_steps = (
                self.bar * self._bar_steps + descriptor.value * self._position_steps
            )
            self.onset_registry.clear()
        elif token_type == TokenType.TIME_SHIFT:
            self.time_steps += self.shift_steps(descriptor.value)
            self.onset_registry.clear()
        elif token_type == TokenType.PROGRAM:
            self.pending_program = descriptor.value
        elif token_type in (TokenType.PITCH, TokenType.MERGED):
            program = self._effective_program()
            pitch = (
                _merged_pitch(descriptor)
                if token_type == TokenType.MERGED
                else descriptor.value
            )
            self.onset_registry.add((program, pitch))
            self.pending_program = None
        elif token_type == TokenType.NOTE_ON:
            key = (self._effective_program(), descriptor.value)
            self.onset_registry.add(key)
            record = _NoteOnRecord(evaluated, self.time_steps)
            self.sounding.setdefault(key, deque()).append(len(self.noteon_log))
            self.noteon_log.append(record)
            self.pending_program = None
        elif token_type == TokenType.NOTE_OFF:
            key = (self._effective_program(), descriptor.value)
            index = self.sounding[key].popleft()
            self.noteon_log[index].closed_steps = self.time_steps
            self.pending_program = None
        self.last = token_type

    def step(self, token_id: int, evaluated: bool = True) -> ErrorCategory | None:
        """Classify, then advance when valid; returns the error, if any."""
        category = self.classify(token_id)
        if category is None:
            self.advance(token_id, evaluated=evaluated)
        return category

    def missing_noteoff_count(self, max_beats: float) -> int:
        """Evaluated note-ons never closed, or closed beyond ``max_beats``."""
        max_steps = max_beats * self._resolution
        count = 0
        for record in self.noteon_log:
            if not record.evaluated:
                continue
            if record.closed_steps is None:
                count += 1
            elif record.closed_steps - record.onset_steps > max_steps:
                count += 1
        return count

    # -- masking ---------------------------------------------------------

    def allowed_ids(self) -> frozenset[int]:
        """Ids whose selection creates no syntax error from this state."""
        vocab = self.vocabulary
        allowed: set[int] = set()
        program = self._effective_program()
        for token_type in self.allowed_types():
            ids = vocab.ids_of_type(token_type)
            if token_type == TokenType.POSITION and self.position is not None:
                current = self.position
                allowed.update(
                    i for i in ids if vocab.descriptor(i).value > current
                )
            elif token_type in (TokenType.PITCH, TokenType.NOTE_ON):
                allowed.update(ids)
                for prog, pitch in self.onset_registry:
                    if prog == program:
                        allowed.discard(vocab.token_id(token_type, pitch))
            elif token_type == TokenType.MERGED:
                allowed.update(ids)
                for prog, pitch in self.onset_registry:
                    if prog == program:
                        allowed.difference_update(
                            self._merged_ids_by_pitch.get(pitch, ())
                        )
            elif token_type == TokenType.NOTE_OFF:
                for (prog, pitch), fifo in self.sounding.items():
                    if prog == program and fifo:
                        allowed.add(vocab.token_id(token_type, pitch))
            else:
                allowed.update(ids)
        if self.is_complete():
            allowed.add(EOS_ID)
        return frozenset(allowed)


def valid_next_ids(state: GrammarState) -> frozenset[int]:
    """Rule-based logits mask: every id that keeps the sequence error-free."""
    return state.allowed_ids()


def valid_next_types(state: GrammarState) -> frozenset[TokenType]:
    """Type-level view of the mask (value constraints live in the id mask)."""
    return state.allowed_types()
