"""Token vocabularies for the supported tokenization schemes.

Every vocabulary starts with the five special tokens at fixed ids
(PAD=0, BOS=1, EOS=2, MASK=3, SEP=4) followed by the scheme's value
tokens in a deterministic order, so identical scheme/config pairs always
produce identical id assignments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Any, Iterable

from .score import PreprocessConfig

PAD_ID, BOS_ID, EOS_ID, MASK_ID, SEP_ID = range(5)
SPECIAL_IDS = frozenset(range(5))


class TokenType(str, Enum):
    PAD = "Pad"
    BOS = "Bos"
    EOS = "Eos"
    MASK = "Mask"
    SEP = "Sep"
    BAR = "Bar"
    POSITION = "Position"
    PITCH = "Pitch"
    VELOCITY = "Velocity"
    DURATION = "Duration"
    TIME_SHIFT = "TimeShift"
    NOTE_ON = "NoteOn"
    NOTE_OFF = "NoteOff"
    PROGRAM = "Program"
    MERGED = "Merged"
    BPE = "BPE"


SPECIAL_TYPES = (
    TokenType.PAD,
    TokenType.BOS,
    TokenType.EOS,
    TokenType.MASK,
    TokenType.SEP,
)


class SchemeKind(str, Enum):
    TSD = "TSD"
    REMI = "REMI"
    MIDI_LIKE = "MIDILike"
    PVM = "PVm"
    PVDM = "PVDm"


_MERGED_KINDS = (SchemeKind.PVM, SchemeKind.PVDM)


@dataclass(frozen=True)
class SchemeId:
    """A tokenization scheme: kind, program-token usage, and time model.

    ``base`` selects the time model (REMI bars/positions or TSD time
    shifts) for the merged-token kinds; for the other kinds it is forced
    to the kind itself.
    """

    kind: SchemeKind
    use_programs: bool = False
    base: SchemeKind = SchemeKind.REMI

    def __post_init__(self) -> None:
        if self.kind in _MERGED_KINDS:
            if self.base not in (SchemeKind.TSD, SchemeKind.REMI):
                raise ValueError("merged schemes must build on TSD or REMI")
        else:
            object.__setattr__(self, "base", self.kind)

    @property
    def time_model(self) -> SchemeKind:
        """REMI for bar/position time, otherwise TSD-style time shifts."""
        if self.kind in _MERGED_KINDS:
            return self.base
        if self.kind == SchemeKind.MIDI_LIKE:
            return SchemeKind.TSD
        return self.kind

    @property
    def note_token_type(self) -> TokenType:
        if self.kind in _MERGED_KINDS:
            return TokenType.MERGED
        if self.kind == SchemeKind.MIDI_LIKE:
            return TokenType.NOTE_ON
        return TokenType.PITCH

    def __str__(self) -> str:
        name = self.kind.value
        if self.kind in _MERGED_KINDS:
            name = f"{name}:{self.base.value}"
        if self.use_programs:
            name += "+Programs"
        return name

    @classmethod
    def parse(cls, text: str) -> "SchemeId":
        body = text
        use_programs = False
        if body.endswith("+Programs"):
            use_programs = True
            body = body[: -len("+Programs")]
        kind_text, _, base_text = body.partition(":")
        try:
            kind = SchemeKind(kind_text)
            base = SchemeKind(base_text) if base_text else SchemeKind.REMI
        except ValueError as exc:
            raise ValueError(f"unknown scheme {text!r}") from exc
        return cls(kind=kind, use_programs=use_programs, base=base)


@dataclass(frozen=True)
class TokenDescriptor:
    """One vocabulary entry; ``value`` is the type-specific payload."""

    id: int
    text: str
    type: TokenType
    value: Any

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "type": self.type.value,
            "value": _value_to_json(self.value),
        }


def _value_to_json(value: Any) -> Any:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, tuple):
        return [[t.value, _value_to_json(v)] for t, v in value]
    return value


def _value_from_json(token_type: TokenType, raw: Any) -> Any:
    if token_type in (TokenType.DURATION, TokenType.TIME_SHIFT):
        return Fraction(raw)
    if token_type == TokenType.MERGED:
        return tuple((TokenType(t), _value_from_json(TokenType(t), v)) for t, v in raw)
    return raw


def _fraction_text(value: Fraction) -> str:
    return str(value)


class Vocabulary:
    """Bidirectional token-string/id map with typed descriptors."""

    def __init__(
        self,
        entries: Iterable[TokenDescriptor],
        scheme: SchemeId | None = None,
        config: PreprocessConfig | None = None,
    ):
        self.entries: list[TokenDescriptor] = list(entries)
        self.scheme = scheme
        self.config = config
        self.index: dict[str, int] = {}
        self._by_type_value: dict[tuple[TokenType, Any], int] = {}
        self._ids_by_type: dict[TokenType, list[int]] = {}
        self._merged_ids_by_pitch: dict[int, list[int]] | None = None
        for expected, entry in enumerate(self.entries):
            if entry.id != expected:
                raise ValueError("vocabulary ids must be dense from 0")
            if entry.text in self.index:
                raise ValueError(f"duplicate token text {entry.text!r}")
            self.index[entry.text] = entry.id
            self._by_type_value[(entry.type, entry.value)] = entry.id
            self._ids_by_type.setdefault(entry.type, []).append(entry.id)
        for special_id, special_type in zip(range(5), SPECIAL_TYPES):
            if self.entries[special_id].type is not special_type:
                raise ValueError("special tokens must occupy ids 0..4")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, text: str) -> bool:
        return text in self.index

    def descriptor(self, token_id: int) -> TokenDescriptor:
        if not 0 <= token_id < len(self.entries):
            raise KeyError(f"token id {token_id} outside the vocabulary")
        return self.entries[token_id]

    def id_of(self, text: str) -> int:
        return self.index[text]

    def token_id(self, token_type: TokenType, value: Any = None) -> int:
        try:
            return self._by_type_value[(token_type, value)]
        except KeyError:
            raise KeyError(f"no token of type {token_type.value} with value {value!r}")

    def ids_of_type(self, token_type: TokenType) -> list[int]:
        return self._ids_by_type.get(token_type, [])

    def has_type(self, token_type: TokenType) -> bool:
        return token_type in self._ids_by_type

    def merged_ids_by_pitch(self) -> dict[int, list[int]]:
        """Merged-token ids grouped by their pitch component (cached)."""
        if self._merged_ids_by_pitch is None:
            groups: dict[int, list[int]] = {}
            for token_id in self.ids_of_type(TokenType.MERGED):
                pitch = self.entries[token_id].value[0][1]
                groups.setdefault(pitch, []).append(token_id)
            self._merged_ids_by_pitch = groups
        return self._merged_ids_by_pitch

    def to_json(self) -> list[dict]:
        return [entry.to_json() for entry in self.entries]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json(), handle, indent=1)
            handle.write("\n")

    @classmethod
    def from_json(
        cls,
        data: list[dict],
        scheme: SchemeId | None = None,
        config: PreprocessConfig | None = None,
    ) -> "Vocabulary":
        entries = []
        for item in data:
            token_type = TokenType(item["type"])
            entries.append(
                TokenDescriptor(
                    id=int(item["id"]),
                    text=item["text"],
                    type=token_type,
                    value=_value_from_json(token_type, item["value"]),
                )
            )
        return cls(entries, scheme=scheme, config=config)


def _special_descriptors() -> list[TokenDescriptor]:
    return [
        TokenDescriptor(PAD_ID, "PAD", TokenType.PAD, None),
        TokenDescriptor(BOS_ID, "BOS", TokenType.BOS, None),
        TokenDescriptor(EOS_ID, "EOS", TokenType.EOS, None),
        TokenDescriptor(MASK_ID, "MASK", TokenType.MASK, None),
        TokenDescriptor(SEP_ID, "SEP", TokenType.SEP, None),
    ]


def build_vocabulary(
    scheme: SchemeId, config: PreprocessConfig | None = None
) -> Vocabulary:
    """Base vocabulary for ``scheme`` under ``config``.

    Vocabularies are immutable once built, so identical scheme/config
    pairs share one cached instance.
    """
    return _build_vocabulary(scheme, config or PreprocessConfig())


@lru_cache(maxsize=64)
def _build_vocabulary(scheme: SchemeId, config: PreprocessConfig) -> Vocabulary:
    entries = _special_descriptors()

    def add(token_type: TokenType, value: Any, text: str) -> None:
        entries.append(TokenDescriptor(len(entries), text, token_type, value))

    durations = config.duration_values()
    pitches = range(config.pitch_min, config.pitch_max + 1)
    velocities = config.velocity_centers()

    if scheme.time_model == SchemeKind.REMI:
        add(TokenType.BAR, None, "Bar")
        for position in range(config.positions_per_bar):
            add(TokenType.POSITION, position, f"Position_{position}")
    else:
        for value in durations:
            add(TokenType.TIME_SHIFT, value, f"TimeShift_{_fraction_text(value)}")

    if scheme.use_programs:
        for program in range(-1, 128):
            add(TokenType.PROGRAM, program, f"Program_{program}")

    if scheme.kind == SchemeKind.MIDI_LIKE:
        for pitch in pitches:
            add(TokenType.NOTE_ON, pitch, f"NoteOn_{pitch}")
        for pitch in pitches:
            add(TokenType.NOTE_OFF, pitch, f"NoteOff_{pitch}")
        for velocity in velocities:
            add(TokenType.VELOCITY, velocity, f"Velocity_{velocity}")
    elif scheme.kind == SchemeKind.PVM:
        for pitch in pitches:
            for velocity in velocities:
                value = ((TokenType.PITCH, pitch), (TokenType.VELOCITY, velocity))
                add(TokenType.MERGED, value, f"PitchVel_{pitch}_{velocity}")
        for value in durations:
            add(TokenType.DURATION, value, f"Duration_{_fraction_text(value)}")
    elif scheme.kind == SchemeKind.PVDM:
        for pitch in pitches:
            for velocity in velocities:
                for duration in durations:
                    value = (
                        (TokenType.PITCH, pitch),
                        (TokenType.VELOCITY, velocity),
                        (TokenType.DURATION, duration),
                    )
                    add(
                        TokenType.MERGED,
                        value,
                        f"PitchVelDur_{pitch}_{velocity}_{_fraction_text(duration)}",
                    )
    else:
        for pitch in pitches:
            add(TokenType.PITCH, pitch, f"Pitch_{pitch}")
        for velocity in velocities:
            add(TokenType.VELOCITY, velocity, f"Velocity_{velocity}")
        for value in durations:
            add(TokenType.DURATION, value, f"Duration_{_fraction_text(value)}")

    return Vocabulary(entries, scheme=scheme, config=config)
