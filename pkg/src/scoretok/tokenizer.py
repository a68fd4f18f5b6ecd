"""Score-to-token conversion and its inverse for all supported schemes.

``tokenize`` expects preprocessed scores (grid membership is checked and
violations raise). ``detokenize`` inverts it exactly on well-formed
sequences; on malformed ones it recovers by skipping the violating
tokens, never moving time backward, and reports what it skipped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .grammar import GrammarState
from .score import DRUM_PROGRAM, Note, PreprocessConfig, Score, Track
from .vocab import (
    BOS_ID,
    EOS_ID,
    SPECIAL_IDS,
    SchemeId,
    SchemeKind,
    TokenType,
    Vocabulary,
    build_vocabulary,
)

DEFAULT_TICKS_PER_BEAT = 480


@dataclass
class TokenSequence:
    """Ordered token ids under one scheme.

    ``ticks_per_beat`` and ``program`` are carried so a sequence can be
    decoded back to the exact source timing and track instrument;
    ``program`` is the reserved drum value for drum tracks and None for
    merged multi-track streams.
    """

    scheme: SchemeId
    ids: list[int]
    ticks_per_beat: int | None = None
    program: int | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def non_special_ids(self) -> list[int]:
        return [i for i in self.ids if i not in SPECIAL_IDS]

    def to_json(self) -> dict:
        data: dict = {"scheme": str(self.scheme), "ids": list(self.ids)}
        if self.ticks_per_beat is not None:
            data["ticks_per_beat"] = self.ticks_per_beat
        if self.program is not None:
            data["program"] = self.program
        return data

    @classmethod
    def from_json(cls, data: dict) -> "TokenSequence":
        return cls(
            scheme=SchemeId.parse(data["scheme"]),
            ids=[int(i) for i in data["ids"]],
            ticks_per_beat=data.get("ticks_per_beat"),
            program=data.get("program"),
        )


def save_sequences(sequences: list[TokenSequence], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump([s.to_json() for s in sequences], handle)
        handle.write("\n")


def load_sequences(path) -> list[TokenSequence]:
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if isinstance(data, dict):
        data = [data]
    return [TokenSequence.from_json(item) for item in data]


@dataclass
class DecodeDiagnostics:
    """Recovery report: tokens skipped and note constructs dropped."""

    skipped_tokens: int = 0
    dropped_notes: int = 0

    @property
    def errors(self) -> int:
        return self.skipped_tokens + self.dropped_notes

    def merge(self, other: "DecodeDiagnostics") -> None:
        self.skipped_tokens += other.skipped_tokens
        self.dropped_notes += other.dropped_notes


@dataclass
class _StreamNote:
    onset_steps: int
    program: int
    pitch: int
    velocity: int
    duration_steps: int


def _grid_check(score: Score, config: PreprocessConfig) -> None:
    resolution = config.resolution_per_beat
    tpb = score.ticks_per_beat
    if tpb % resolution:
        raise ValueError(
            f"ticks_per_beat {tpb} does not carry the {resolution}-per-beat grid; "
            "preprocess the score first"
        )
    position_ticks = tpb * 4 // config.positions_per_bar
    centers = set(config.velocity_centers())
    duration_steps = {
        int(v * resolution) for v in config.duration_values()
    }
    step = tpb // resolution
    for track in score.tracks:
        for note in track.notes:
            if not config.pitch_min <= note.pitch <= config.pitch_max:
                raise ValueError(f"pitch {note.pitch} outside the configured range")
            if note.velocity not in centers:
                raise ValueError(f"velocity {note.velocity} is not a bin center")
            if note.onset_tick % position_ticks:
                raise ValueError(f"onset {note.onset_tick} off the position grid")
            if note.duration_tick % step or (
                note.duration_tick // step not in duration_steps
            ):
                raise ValueError(f"duration {note.duration_tick} off the duration grid")


def _stream_notes(tracks: Iterable[Track], step: int, merged: bool) -> list[_StreamNote]:
    notes = []
    for track in tracks:
        program = track.effective_program() if merged else 0
        for note in track.notes:
            notes.append(
                _StreamNote(
                    note.onset_tick // step,
                    program,
                    note.pitch,
                    note.velocity,
                    note.duration_tick // step,
                )
            )
    notes.sort(
        key=lambda n: (n.onset_steps, n.program, n.pitch, n.velocity, n.duration_steps)
    )
    return notes


class _Emitter:
    """Shared id-emission helpers bound to one vocabulary."""

    def __init__(self, vocabulary: Vocabulary):
        self.vocab = vocabulary
        self.scheme = vocabulary.scheme
        config = vocabulary.config
        self.resolution = config.resolution_per_beat
        self.bar_steps = 4 * self.resolution
        self.position_steps = self.bar_steps // config.positions_per_bar
        self.shift_choices = sorted(
            (
                (int(value * self.resolution), self.vocab.token_id(TokenType.TIME_SHIFT, value))
                for value in config.duration_values()
            ),
            reverse=True,
        ) if vocabulary.has_type(TokenType.TIME_SHIFT) else []
        self.duration_ids = (
            {
                int(value * self.resolution): self.vocab.token_id(TokenType.DURATION, value)
                for value in config.duration_values()
            }
            if vocabulary.has_type(TokenType.DURATION)
            else {}
        )

    def shifts(self, gap_steps: int) -> list[int]:
        out = []
        while gap_steps > 0:
            for steps, token_id in self.shift_choices:
                if steps <= gap_steps:
                    out.append(token_id)
                    gap_steps -= steps
                    break
            else:
                raise ValueError(f"time gap of {gap_steps} steps is not representable")
        return out

    def note_ids(self, note: _StreamNote, use_programs: bool) -> list[int]:
        vocab, scheme = self.vocab, self.scheme
        out = []
        if use_programs:
            out.append(vocab.token_id(TokenType.PROGRAM, note.program))
        duration = Fraction(note.duration_steps, self.resolution)
        if scheme.kind == SchemeKind.PVM:
            value = (
                (TokenType.PITCH, note.pitch),
                (TokenType.VELOCITY, note.velocity),
            )
            out.append(vocab.token_id(TokenType.MERGED, value))
            out.append(self.duration_ids[note.duration_steps])
        elif scheme.kind == SchemeKind.PVDM:
            value = (
                (TokenType.PITCH, note.pitch),
                (TokenType.VELOCITY, note.velocity),
                (TokenType.DURATION, duration),
            )
            out.append(vocab.token_id(TokenType.MERGED, value))
        else:
            out.append(vocab.token_id(TokenType.PITCH, note.pitch))
            out.append(vocab.token_id(TokenType.VELOCITY, note.velocity))
            out.append(self.duration_ids[note.duration_steps])
        return out


def _emit_bar_position(emitter: _Emitter, notes: list[_StreamNote], use_programs: bool) -> list[int]:
    vocab = emitter.vocab
    bar_id = vocab.token_id(TokenType.BAR, None)
    ids = [BOS_ID]
    bar, position = -1, None
    for note in notes:
        note_bar, in_bar = divmod(note.onset_steps, emitter.bar_steps)
        note_position = in_bar // emitter.position_steps
        while bar < note_bar:
            ids.append(bar_id)
            bar += 1
            position = None
        if position != note_position:
            ids.append(vocab.token_id(TokenType.POSITION, note_position))
            position = note_position
        ids.extend(emitter.note_ids(note, use_programs))
    ids.append(EOS_ID)
    return ids


def _emit_time_shift(emitter: _Emitter, notes: list[_StreamNote], use_programs: bool) -> list[int]:
    ids = [BOS_ID]
    now = 0
    for note in notes:
        ids.extend(emitter.shifts(note.onset_steps - now))
        now = note.onset_steps
        ids.extend(emitter.note_ids(note, use_programs))
    ids.append(EOS_ID)
    return ids


def _emit_note_on_off(emitter: _Emitter, notes: list[_StreamNote], use_programs: bool) -> list[int]:
    vocab = emitter.vocab
    events: list[tuple[int, int, int, int, int]] = []
    for note in notes:
        events.append((note.onset_steps, 1, note.program, note.pitch, note.velocity))
        offset = note.onset_steps + note.duration_steps
        events.append((offset, 0, note.program, note.pitch, 0))
    events.sort()
    ids = [BOS_ID]
    now = 0
    for time, on, program, pitch, velocity in events:
        ids.extend(emitter.shifts(time - now))
        now = time
        if use_programs:
            ids.append(vocab.token_id(TokenType.PROGRAM, program))
        if on:
            ids.append(vocab.token_id(TokenType.NOTE_ON, pitch))
            ids.append(vocab.token_id(TokenType.VELOCITY, velocity))
        else:
            ids.append(vocab.token_id(TokenType.NOTE_OFF, pitch))
    ids.append(EOS_ID)
    return ids


def tokenize(
    score: Score,
    scheme: SchemeId,
    config: PreprocessConfig | None = None,
    vocabulary: Vocabulary | None = None,
) -> list[TokenSequence]:
    """Convert a preprocessed score to token sequences.

    Returns one sequence per track, or a single merged stream when the
    scheme uses program tokens. Identical scores always produce identical
    id sequences.
    """
    config = config or (vocabulary.config if vocabulary else None) or PreprocessConfig()
    vocabulary = vocabulary or build_vocabulary(scheme, config)
    if vocabulary.scheme != scheme:
        raise ValueError("vocabulary was built for a different scheme")
    _grid_check(score, config)
    emitter = _Emitter(vocabulary)
    step = score.ticks_per_beat // config.resolution_per_beat

    emit = {
        SchemeKind.REMI: _emit_bar_position,
        SchemeKind.TSD: _emit_time_shift,
        SchemeKind.MIDI_LIKE: _emit_note_on_off,
    }[scheme.time_model if scheme.kind != SchemeKind.MIDI_LIKE else SchemeKind.MIDI_LIKE]

    if scheme.use_programs:
        notes = _stream_notes(score.tracks, step, merged=True)
        ids = emit(emitter, notes, use_programs=True)
        return [TokenSequence(scheme, ids, ticks_per_beat=score.ticks_per_beat)]

    sequences = []
    tracks = score.tracks or [Track()]
    for track in tracks:
        notes = _stream_notes([track], step, merged=False)
        ids = emit(emitter, notes, use_programs=False)
        sequences.append(
            TokenSequence(
                scheme,
                ids,
                ticks_per_beat=score.ticks_per_beat,
                program=track.effective_program(),
            )
        )
    return sequences


@dataclass
class _PartialNote:
    onset_steps: int
    program: int
    pitch: int
    velocity: int | None = None


def _decode_stream(
    sequence: TokenSequence, vocabulary: Vocabulary
) -> tuple[list[_StreamNote], DecodeDiagnostics]:
    scheme = vocabulary.scheme
    state = GrammarState(vocabulary)
    diagnostics = DecodeDiagnostics()
    notes: list[_StreamNote] = []
    pending: _PartialNote | None = None
    open_notes: dict[tuple[int, int], list[_PartialNote]] = {}
    program = 0

    def close_pending(duration_steps: int) -> None:
        nonlocal pending
        notes.append(
            _StreamNote(
                pending.onset_steps,
                pending.program,
                pending.pitch,
                pending.velocity,
                duration_steps,
            )
        )
        pending = None

    for token_id in sequence.ids:
        descriptor = vocabulary.descriptor(token_id)
        token_type = descriptor.type
        if token_id in SPECIAL_IDS:
            continue
        if state.classify(token_id) is not None:
            diagnostics.skipped_tokens += 1
            continue

        if token_type == TokenType.PROGRAM:
            program = descriptor.value
        elif token_type == TokenType.PITCH:
            pending = _PartialNote(state.current_onset_steps, program, descriptor.value)
        elif token_type == TokenType.MERGED:
            parts = dict(descriptor.value)
            pending = _PartialNote(
                state.current_onset_steps,
                program,
                parts[TokenType.PITCH],
                parts[TokenType.VELOCITY],
            )
            if scheme.kind == SchemeKind.PVDM:
                close_pending(state.shift_steps(parts[TokenType.DURATION]))
        elif token_type == TokenType.VELOCITY:
            if pending is not None:
                pending.velocity = descriptor.value
        elif token_type == TokenType.DURATION:
            if pending is not None and pending.velocity is not None:
                close_pending(state.shift_steps(descriptor.value))
        elif token_type == TokenType.NOTE_ON:
            pending = _PartialNote(state.time_steps, program, descriptor.value)
            open_notes.setdefault((program, descriptor.value), []).append(pending)
        elif token_type == TokenType.NOTE_OFF:
            entry = open_notes[(program, descriptor.value)].pop(0)
            duration = max(1, state.time_steps - entry.onset_steps)
            if entry.velocity is not None:
                notes.append(
                    _StreamNote(
                        entry.onset_steps, entry.program, entry.pitch, entry.velocity, duration
                    )
                )
            else:
                diagnostics.dropped_notes += 1
            if pending is entry:
                pending = None
        state.advance(token_id)

    if scheme.kind == SchemeKind.MIDI_LIKE:
        diagnostics.dropped_notes += sum(len(v) for v in open_notes.values())
    elif pending is not None:
        diagnostics.dropped_notes += 1
    return notes, diagnostics


def detokenize(
    sequences: TokenSequence | Iterable[TokenSequence],
    vocabulary: Vocabulary | None = None,
    ticks_per_beat: int | None = None,
    return_diagnostics: bool = False,
):
    """Rebuild a :class:`Score` from token sequences.

    Inverse of :func:`tokenize` on well-formed input; malformed tokens
    are skipped (time never moves backward) and counted in the
    diagnostics returned when ``return_diagnostics`` is set.
    """
    if isinstance(sequences, TokenSequence):
        sequences = [sequences]
    sequences = list(sequences)
    if not sequences:
        raise ValueError("no sequences to decode")
    scheme = sequences[0].scheme
    if any(s.scheme != scheme for s in sequences):
        raise ValueError("sequences mix different schemes")
    vocabulary = vocabulary or build_vocabulary(scheme)
    if vocabulary.scheme != scheme:
        raise ValueError("vocabulary was built for a different scheme")
    config = vocabulary.config
    resolution = config.resolution_per_beat
    tpb = (
        ticks_per_beat
        or next((s.ticks_per_beat for s in sequences if s.ticks_per_beat), None)
        or DEFAULT_TICKS_PER_BEAT
    )
    if tpb % resolution:
        raise ValueError(f"ticks_per_beat {tpb} does not carry the grid")
    step = tpb // resolution

    diagnostics = DecodeDiagnostics()
    tracks: list[Track] = []
    if scheme.use_programs:
        merged: dict[int, list[Note]] = {}
        for sequence in sequences:
            stream, diag = _decode_stream(sequence, vocabulary)
            diagnostics.merge(diag)
            for note in stream:
                merged.setdefault(note.program, []).append(
                    Note(note.onset_steps * step, note.duration_steps * step, note.pitch, note.velocity)
                )
        for program in sorted(merged, key=lambda p: (p == DRUM_PROGRAM, p)):
            track = Track(
                program=0 if program == DRUM_PROGRAM else program,
                is_drum=program == DRUM_PROGRAM,
                notes=merged[program],
            )
            track.sort_notes()
            tracks.append(track)
    else:
        for sequence in sequences:
            stream, diag = _decode_stream(sequence, vocabulary)
            diagnostics.merge(diag)
            if sequence.program is None and not stream:
                continue
            program = sequence.program if sequence.program is not None else 0
            track = Track(
                program=0 if program == DRUM_PROGRAM else program,
                is_drum=program == DRUM_PROGRAM,
                notes=[
                    Note(n.onset_steps * step, n.duration_steps * step, n.pitch, n.velocity)
                    for n in stream
                ],
            )
            track.sort_notes()
            tracks.append(track)

    score = Score(ticks_per_beat=tpb, tracks=tracks)
    if return_diagnostics:
        return score, diagnostics
    return score
