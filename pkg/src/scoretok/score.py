"""In-memory musical score model and grid-based preprocessing.

The :class:`Score` is the pivot between MIDI bytes and token sequences.
Preprocessing quantizes note attributes onto the fixed grids every
tokenization scheme assumes: velocities to a small set of bin centers,
onsets to a per-bar position grid, and durations to a multi-resolution
beat grid (finer for short notes, coarser for long ones).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import lcm

DRUM_PROGRAM = -1

# (max_beats, samples_per_beat) segments; contiguous, increasing max_beats.
DEFAULT_DURATION_GRID: tuple[tuple[int, int], ...] = ((1, 8), (2, 4), (4, 2), (8, 1))


@dataclass
class Note:
    """One note: onset/duration in ticks, MIDI pitch and velocity."""

    onset_tick: int
    duration_tick: int
    pitch: int
    velocity: int

    def validate(self) -> None:
        if self.onset_tick < 0:
            raise ValueError(f"negative onset tick {self.onset_tick}")
        if self.duration_tick < 1:
            raise ValueError(f"non-positive duration {self.duration_tick}")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside 0..127")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside 1..127")

    @property
    def offset_tick(self) -> int:
        return self.onset_tick + self.duration_tick


@dataclass
class Track:
    """A single-instrument note list.

    ``program`` is ignored for tokenization when ``is_drum`` is set; drum
    tracks always map to the reserved drum program value.
    """

    program: int = 0
    is_drum: bool = False
    notes: list[Note] = field(default_factory=list)

    def sort_notes(self) -> None:
        self.notes.sort(key=lambda n: (n.onset_tick, n.pitch, n.velocity, n.duration_tick))

    def validate(self) -> None:
        if not 0 <= self.program <= 127:
            raise ValueError(f"program {self.program} outside 0..127")
        for note in self.notes:
            note.validate()
        keys = [(n.onset_tick, n.pitch) for n in self.notes]
        if keys != sorted(keys):
            raise ValueError("track notes not sorted by (onset_tick, pitch)")

    def effective_program(self) -> int:
        return DRUM_PROGRAM if self.is_drum else self.program


@dataclass
class Score:
    """Tracks plus tempo and time-signature maps, tick-resolved.

    ``time_signatures`` entries are ``(tick, numerator, denominator)``;
    ``tempos`` entries are ``(tick, microseconds_per_beat)``.
    """

    ticks_per_beat: int = 480
    tracks: list[Track] = field(default_factory=list)
    time_signatures: list[tuple[int, int, int]] = field(
        default_factory=lambda: [(0, 4, 4)]
    )
    tempos: list[tuple[int, int]] = field(default_factory=lambda: [(0, 500_000)])

    def validate(self) -> None:
        if self.ticks_per_beat <= 0:
            raise ValueError("ticks_per_beat must be positive")
        for track in self.tracks:
            track.validate()
        if not any(tick == 0 for tick, _, _ in self.time_signatures):
            raise ValueError("no time signature at tick 0")
        for events in (self.time_signatures, self.tempos):
            ticks = [e[0] for e in events]
            if ticks != sorted(ticks):
                raise ValueError("event list not sorted by tick")

    def note_count(self) -> int:
        return sum(len(t.notes) for t in self.tracks)

    def all_notes(self) -> list[Note]:
        return [n for t in self.tracks for n in t.notes]

    def end_tick(self) -> int:
        return max((n.offset_tick for n in self.all_notes()), default=0)


def notes_equal(a: Score, b: Score) -> bool:
    """Compare two scores on note content and track identity only."""
    if len(a.tracks) != len(b.tracks):
        return False
    for ta, tb in zip(a.tracks, b.tracks):
        if ta.is_drum != tb.is_drum:
            return False
        if not ta.is_drum and ta.program != tb.program:
            return False
        if len(ta.notes) != len(tb.notes):
            return False
        for na, nb in zip(ta.notes, tb.notes):
            if (na.onset_tick, na.duration_tick, na.pitch, na.velocity) != (
                nb.onset_tick,
                nb.duration_tick,
                nb.pitch,
                nb.velocity,
            ):
                return False
    return True


@dataclass(frozen=True)
class PreprocessConfig:
    """Downsampling grids applied before tokenization.

    ``duration_grid`` lists contiguous ``(max_beats, samples_per_beat)``
    segments; the default yields the 20-value duration/time-shift grid.
    ``positions_per_bar`` covers a four-beat bar (all input is treated as
    4/4 for bar computation; set ``require_four_four`` to reject scores
    carrying any other signature instead).
    """

    velocity_bin_count: int = 8
    duration_grid: tuple[tuple[int, int], ...] = DEFAULT_DURATION_GRID
    positions_per_bar: int = 32
    pitch_min: int = 21
    pitch_max: int = 108
    merge_programs: bool = True
    require_four_four: bool = False

    def __post_init__(self) -> None:
        if not 1 <= self.velocity_bin_count <= 127:
            raise ValueError("velocity_bin_count must be within 1..127")
        if len(set(self.velocity_centers())) != self.velocity_bin_count:
            raise ValueError("velocity bins collapse; use fewer bins")
        if not self.duration_grid:
            raise ValueError("duration_grid must not be empty")
        prev = 0
        for max_beats, spb in self.duration_grid:
            if max_beats <= prev:
                raise ValueError("duration_grid segments must be increasing")
            if spb <= 0:
                raise ValueError("samples_per_beat must be positive")
            prev = max_beats
        if self.positions_per_bar < 4 or self.positions_per_bar % 4:
            raise ValueError("positions_per_bar must be a positive multiple of 4")
        if not 0 <= self.pitch_min < self.pitch_max <= 127:
            raise ValueError("pitch range must satisfy 0 <= min < max <= 127")
        max_spb = max(spb for _, spb in self.duration_grid)
        if max_spb % (self.positions_per_bar // 4):
            raise ValueError(
                "finest duration resolution must cover the position grid"
            )
        if any(max_spb % spb for _, spb in self.duration_grid):
            raise ValueError(
                "every duration segment resolution must divide the finest one"
            )

    def velocity_centers(self) -> tuple[int, ...]:
        # Uniform partition of 1..127; 8 bins give {15, 31, ..., 127}.
        k = self.velocity_bin_count
        return tuple(round((i + 1) * 128 / k) - 1 for i in range(k))

    def duration_values(self) -> tuple[Fraction, ...]:
        """Ascending grid of representable durations, in beats."""
        values: list[Fraction] = []
        prev = Fraction(0)
        for max_beats, spb in self.duration_grid:
            step = Fraction(1, spb)
            v = prev + step
            while v <= max_beats:
                values.append(v)
                v += step
            prev = Fraction(max_beats)
        return tuple(values)

    @property
    def resolution_per_beat(self) -> int:
        """Samples per beat of the common time grid (positions and durations)."""
        return lcm(self.positions_per_bar // 4, *(spb for _, spb in self.duration_grid))

    def canonical_ticks_per_beat(self, ticks_per_beat: int) -> int:
        """Keep ``ticks_per_beat`` when it carries the grid exactly, else rescale."""
        res = self.resolution_per_beat
        if ticks_per_beat % res == 0:
            return ticks_per_beat
        return 480 if 480 % res == 0 else res * 60

    def to_json(self) -> dict:
        return {
            "velocity_bin_count": self.velocity_bin_count,
            "duration_grid": [list(seg) for seg in self.duration_grid],
            "positions_per_bar": self.positions_per_bar,
            "pitch_min": self.pitch_min,
            "pitch_max": self.pitch_max,
            "merge_programs": self.merge_programs,
            "require_four_four": self.require_four_four,
        }

    @classmethod
    def from_json(cls, data: dict) -> "PreprocessConfig":
        kwargs = dict(data)
        if "duration_grid" in kwargs:
            kwargs["duration_grid"] = tuple(
                (int(m), int(s)) for m, s in kwargs["duration_grid"]
            )
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PreprocessConfig":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_json(json.load(handle))


def _snap_to_multiple(value: int, step: int) -> int:
    """Nearest multiple of ``step``, ties resolved upward."""
    return (2 * value + step) // (2 * step) * step


def _snap_velocity(velocity: int, centers: tuple[int, ...]) -> int:
    # Ties resolved toward the larger center, mirroring duration snapping.
    return min(centers, key=lambda c: (abs(c - velocity), -c))


def _snap_duration(beats: Fraction, values: tuple[Fraction, ...]) -> Fraction:
    if beats >= values[-1]:
        return values[-1]
    return min(values, key=lambda v: (abs(v - beats), -v))


def _merged_program(program: int) -> int:
    # Instrument categories span 8 programs; ensembles (48..55) stay as-is,
    # as do programs above 95.
    if 0 <= program <= 95 and not 48 <= program <= 55:
        return program - program % 8
    return program


def _rescale(score: Score, new_tpb: int) -> Score:
    factor = Fraction(new_tpb, score.ticks_per_beat)

    def scale(tick: int) -> int:
        return int(round(tick * factor))

    tracks = [
        Track(
            program=t.program,
            is_drum=t.is_drum,
            notes=[
                Note(scale(n.onset_tick), max(1, scale(n.duration_tick)), n.pitch, n.velocity)
                for n in t.notes
            ],
        )
        for t in score.tracks
    ]
    return Score(
        ticks_per_beat=new_tpb,
        tracks=tracks,
        time_signatures=[(scale(t), n, d) for t, n, d in score.time_signatures],
        tempos=[(scale(t), mpb) for t, mpb in score.tempos],
    )


def preprocess(score: Score, config: PreprocessConfig | None = None) -> Score:
    """Return a quantized copy of ``score``.

    Pitches outside the configured range are dropped; velocities snap to
    bin centers, onsets to the position grid and durations to the beat
    grid (ties upward, values beyond the grid clamped to its maximum).
    Duplicate notes (same track, onset, pitch) keep their first
    occurrence. With ``merge_programs``, instrument programs collapse to
    category representatives and tracks sharing a resulting program are
    merged. The operation is idempotent.
    """
    config = config or PreprocessConfig()
    if config.require_four_four:
        for _, numerator, _ in score.time_signatures:
            if numerator != 4:
                raise ValueError("score carries a non-4/* time signature")

    tpb = config.canonical_ticks_per_beat(score.ticks_per_beat)
    if tpb != score.ticks_per_beat:
        score = _rescale(score, tpb)
    position_step = tpb * 4 // config.positions_per_bar
    centers = config.velocity_centers()
    grid = config.duration_values()

    snapped: list[Track] = []
    for track in score.tracks:
        notes = []
        for note in track.notes:
            if not config.pitch_min <= note.pitch <= config.pitch_max:
                continue
            onset = _snap_to_multiple(note.onset_tick, position_step)
            beats = _snap_duration(Fraction(note.duration_tick, tpb), grid)
            duration = int(beats * tpb)
            velocity = _snap_velocity(note.velocity, centers)
            notes.append(Note(onset, duration, note.pitch, velocity))
        snapped.append(replace(track, notes=notes))

    if config.merge_programs:
        groups: dict[tuple[bool, int], list[Note]] = {}
        for track in snapped:
            program = track.program if track.is_drum else _merged_program(track.program)
            key = (track.is_drum, DRUM_PROGRAM if track.is_drum else program)
            groups.setdefault(key, []).extend(track.notes)
        snapped = [
            Track(program=0 if is_drum else program, is_drum=is_drum, notes=notes)
            for (is_drum, program), notes in sorted(groups.items())
        ]

    tracks: list[Track] = []
    for track in snapped:
        seen: set[tuple[int, int]] = set()
        kept = []
        for note in track.notes:
            key = (note.onset_tick, note.pitch)
            if key in seen:
                continue
            seen.add(key)
            kept.append(note)
        merged = replace(track, notes=kept)
        merged.sort_notes()
        tracks.append(merged)

    return Score(
        ticks_per_beat=tpb,
        tracks=tracks,
        time_signatures=list(score.time_signatures),
        tempos=list(score.tempos),
    )


def simultaneous_note_ratio(
    score: Score, align: bool = False, config: PreprocessConfig | None = None
) -> float:
    """Fraction of notes sharing onset, offset and velocity with another note.

    With ``align``, onset and offset ticks are first snapped to the
    position grid, mimicking the comparison on preprocessed timings.
    """
    notes = score.all_notes()
    if not notes:
        raise ValueError("simultaneous-note ratio undefined for an empty score")
    config = config or PreprocessConfig()
    step = None
    if align:
        tpb = config.canonical_ticks_per_beat(score.ticks_per_beat)
        if tpb != score.ticks_per_beat:
            score = _rescale(score, tpb)
            notes = score.all_notes()
        step = tpb * 4 // config.positions_per_bar

    def key(note: Note) -> tuple[int, int, int]:
        onset, offset = note.onset_tick, note.offset_tick
        if step is not None:
            onset = _snap_to_multiple(onset, step)
            offset = _snap_to_multiple(offset, step)
        return onset, offset, note.velocity

    counts = Counter(key(n) for n in notes)
    shared = sum(c for c in counts.values() if c >= 2)
    return shared / len(notes)
