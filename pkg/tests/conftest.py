"""Shared generators for random scores, raw and grid-aligned."""

from __future__ import annotations

import random

import pytest

from scoretok import Note, PreprocessConfig, Score, Track

# duration grid in eighth-of-a-beat steps
GRID_DURATION_STEPS = [1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 14, 16, 20, 24, 28, 32, 40, 48, 56, 64]
VELOCITY_CENTERS = [15, 31, 47, 63, 79, 95, 111, 127]
MERGED_PROGRAMS = [0, 8, 16, 24, 32, 40, 48, 51, 55, 56, 64, 72, 80, 88]


def random_raw_score(
    rng: random.Random,
    max_tracks: int = 3,
    max_notes: int = 40,
    ticks_per_beat: int | None = None,
) -> Score:
    """Arbitrary valid score, not aligned to any grid."""
    tpb = ticks_per_beat or rng.choice([96, 384, 480, 960])
    tracks = []
    for _ in range(rng.randint(1, max_tracks)):
        notes = [
            Note(
                onset_tick=rng.randrange(0, tpb * 24),
                duration_tick=rng.randrange(1, tpb * 10),
                pitch=rng.randrange(0, 128),
                velocity=rng.randrange(1, 128),
            )
            for _ in range(rng.randint(1, max_notes))
        ]
        track = Track(program=rng.randrange(0, 128), is_drum=rng.random() < 0.15, notes=notes)
        track.sort_notes()
        tracks.append(track)
    return Score(ticks_per_beat=tpb, tracks=tracks)


def random_preprocessed_score(
    rng: random.Random,
    n_tracks: int | None = None,
    notes_per_track: int | None = None,
    ticks_per_beat: int = 480,
    narrow: bool = False,
    with_drums: bool = True,
) -> Score:
    """Score already on the preprocessing grids, with distinct-program
    tracks and no same-pitch overlap within a track (so every scheme can
    represent it unambiguously). ``narrow`` restricts attribute variety
    to make token successions repetitive, which BPE learning likes.
    """
    step = ticks_per_beat // 8
    n_tracks = n_tracks or rng.randint(1, 3)
    programs = rng.sample(MERGED_PROGRAMS, k=n_tracks)
    durations = [2, 4, 8, 16] if narrow else GRID_DURATION_STEPS
    pitches = [60, 62, 64, 65, 67, 69] if narrow else list(range(21, 109))
    velocities = [63, 95] if narrow else VELOCITY_CENTERS
    tracks = []
    drum_used = False
    for index in range(n_tracks):
        is_drum = with_drums and not drum_used and rng.random() < 0.15
        drum_used = drum_used or is_drum
        target = notes_per_track or rng.randint(1, 30)
        spans: dict[int, list[tuple[int, int]]] = {}
        notes = []
        attempts = 0
        while len(notes) < target and attempts < target * 20:
            attempts += 1
            onset_steps = rng.randrange(0, 16 * 8)
            duration_steps = rng.choice(durations)
            pitch = rng.choice(pitches)
            end_steps = onset_steps + duration_steps
            taken = spans.setdefault(pitch, [])
            if any(not (end_steps <= a or onset_steps >= b) for a, b in taken):
                continue
            taken.append((onset_steps, end_steps))
            notes.append(
                Note(onset_steps * step, duration_steps * step, pitch, rng.choice(velocities))
            )
        track = Track(program=0 if is_drum else programs[index], is_drum=is_drum, notes=notes)
        track.sort_notes()
        tracks.append(track)
    tracks.sort(key=lambda t: (t.is_drum, t.program))
    return Score(ticks_per_beat=ticks_per_beat, tracks=tracks)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xC0FFEE)


@pytest.fixture
def config() -> PreprocessConfig:
    return PreprocessConfig()
