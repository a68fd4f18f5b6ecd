"""Standard MIDI File (format 0/1) reading and writing.

The reader honors running status, treats velocity-0 note-ons as
note-offs, matches overlapping same-pitch notes first-on/first-off, and
closes unmatched note-ons with a one-tick duration so no content is
silently lost. The writer always emits format 1 with one track chunk per
:class:`~scoretok.score.Track`, placing tempo and time-signature events
in the first chunk. SMPTE divisions and format 2 files are rejected.
"""

from __future__ import annotations

import struct
from collections import deque

from .score import Note, Score, Track

VLQ_MAX = 0x0FFF_FFFF
_DRUM_CHANNEL = 9

_META_TEMPO = 0x51
_META_TIME_SIGNATURE = 0x58
_META_END_OF_TRACK = 0x2F


class SmfParseError(ValueError):
    """Malformed MIDI data; ``offset`` points at the offending byte."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


def decode_vlq(data: bytes, offset: int = 0) -> tuple[int, int]:
    """Decode one variable-length quantity; returns ``(value, bytes_consumed)``."""
    value = 0
    for i in range(4):
        if offset + i >= len(data):
            raise SmfParseError("truncated variable-length quantity", offset + i)
        byte = data[offset + i]
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, i + 1
    raise SmfParseError("variable-length quantity longer than four bytes", offset)


def encode_vlq(value: int) -> bytes:
    """Shortest variable-length encoding of ``value``."""
    if not 0 <= value <= VLQ_MAX:
        raise ValueError(f"value {value} outside the VLQ range 0..{VLQ_MAX:#x}")
    groups = [value & 0x7F]
    value >>= 7
    while value:
        groups.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(groups))


class _ChannelState:
    __slots__ = ("program", "open_notes", "notes")

    def __init__(self) -> None:
        self.program: int | None = None
        self.open_notes: dict[int, deque[tuple[int, int]]] = {}
        self.notes: list[Note] = []


def _read_u16(data: bytes, offset: int) -> int:
    if offset + 2 > len(data):
        raise SmfParseError("truncated header field", offset)
    return struct.unpack_from(">H", data, offset)[0]


def _read_u32(data: bytes, offset: int) -> int:
    if offset + 4 > len(data):
        raise SmfParseError("truncated chunk length", offset)
    return struct.unpack_from(">I", data, offset)[0]


def _parse_track_chunk(
    data: bytes,
    start: int,
    end: int,
    tempos: list[tuple[int, int]],
    time_signatures: list[tuple[int, int, int]],
) -> list[Track]:
    channels: dict[int, _ChannelState] = {}
    tick = 0
    pos = start
    running_status: int | None = None

    def channel_state(channel: int) -> _ChannelState:
        return channels.setdefault(channel, _ChannelState())

    def close_note(channel: int, pitch: int) -> None:
        state = channels.get(channel)
        if state is None:
            return
        fifo = state.open_notes.get(pitch)
        if not fifo:
            return
        onset, velocity = fifo.popleft()
        state.notes.append(Note(onset, max(1, tick - onset), pitch, velocity))

    while pos < end:
        delta, consumed = decode_vlq(data, pos)
        pos += consumed
        tick += delta
        if pos >= end:
            raise SmfParseError("event truncated after delta time", pos)
        status = data[pos]
        if status >= 0x80:
            pos += 1
        else:
            if running_status is None:
                raise SmfParseError("data byte with no running status", pos)
            status = running_status

        if status == 0xFF:
            running_status = None
            if pos >= end:
                raise SmfParseError("truncated meta event", pos)
            meta_type = data[pos]
            pos += 1
            length, consumed = decode_vlq(data, pos)
            pos += consumed
            if pos + length > end:
                raise SmfParseError("meta event payload truncated", pos)
            payload = data[pos : pos + length]
            pos += length
            if meta_type == _META_END_OF_TRACK:
                break
            if meta_type == _META_TEMPO and length >= 3:
                tempos.append((tick, int.from_bytes(payload[:3], "big")))
            elif meta_type == _META_TIME_SIGNATURE and length >= 2:
                time_signatures.append((tick, payload[0], 1 << payload[1]))
            continue
        if status in (0xF0, 0xF7):
            running_status = None
            length, consumed = decode_vlq(data, pos)
            pos += consumed
            if pos + length > end:
                raise SmfParseError("sysex payload truncated", pos)
            pos += length
            continue
        if status < 0x80 or 0xF0 < status <= 0xFE:
            raise SmfParseError(f"unexpected status byte {status:#x}", pos - 1)

        running_status = status
        kind = status & 0xF0
        channel = status & 0x0F
        n_data = 1 if kind in (0xC0, 0xD0) else 2
        if pos + n_data > end:
            raise SmfParseError("channel event truncated", pos)
        d1 = data[pos]
        d2 = data[pos + 1] if n_data == 2 else 0
        if d1 > 127 or d2 > 127:
            raise SmfParseError("data byte with high bit set", pos)
        pos += n_data

        if kind == 0x90 and d2 > 0:
            state = channel_state(channel)
            state.open_notes.setdefault(d1, deque()).append((tick, d2))
        elif kind == 0x80 or (kind == 0x90 and d2 == 0):
            close_note(channel, d1)
        elif kind == 0xC0:
            state = channel_state(channel)
            if state.program is None:
                state.program = d1

    tracks = []
    for channel in sorted(channels):
        state = channels[channel]
        for pitch, fifo in state.open_notes.items():
            for onset, velocity in fifo:
                state.notes.append(Note(onset, 1, pitch, velocity))
        if not state.notes:
            continue
        track = Track(
            program=state.program or 0,
            is_drum=channel == _DRUM_CHANNEL,
            notes=state.notes,
        )
        track.sort_notes()
        tracks.append(track)
    if not tracks:
        tracks.append(Track())
    return tracks


def parse_smf(data: bytes) -> Score:
    """Parse MIDI bytes into a :class:`Score`.

    Raises :class:`SmfParseError` on any malformed input; never raises
    anything else, whatever the bytes.
    """
    if len(data) < 14:
        raise SmfParseError("file shorter than a MIDI header", 0)
    if data[:4] != b"MThd":
        raise SmfParseError("bad header magic", 0)
    header_length = _read_u32(data, 4)
    if header_length < 6:
        raise SmfParseError("header chunk shorter than six bytes", 4)
    fmt = _read_u16(data, 8)
    n_chunks = _read_u16(data, 10)
    division = _read_u16(data, 12)
    if fmt not in (0, 1):
        raise SmfParseError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        raise SmfParseError("SMPTE time division unsupported", 12)
    if division == 0:
        raise SmfParseError("zero ticks per beat", 12)

    pos = 8 + header_length
    tracks: list[Track] = []
    tempos: list[tuple[int, int]] = []
    time_signatures: list[tuple[int, int, int]] = []
    parsed = 0
    while parsed < n_chunks:
        if pos + 8 > len(data):
            raise SmfParseError("expected a track chunk", pos)
        chunk_type = data[pos : pos + 4]
        length = _read_u32(data, pos + 4)
        body_start = pos + 8
        body_end = body_start + length
        if body_end > len(data):
            raise SmfParseError("chunk body truncated", body_start)
        if chunk_type == b"MTrk":
            tracks.extend(
                _parse_track_chunk(data, body_start, body_end, tempos, time_signatures)
            )
            parsed += 1
        pos = body_end

    tempos.sort(key=lambda e: e[0])
    time_signatures.sort(key=lambda e: e[0])
    if not any(tick == 0 for tick, _, _ in time_signatures):
        time_signatures.insert(0, (0, 4, 4))
    return Score(
        ticks_per_beat=division,
        tracks=tracks,
        time_signatures=time_signatures,
        tempos=tempos,
    )


def _assign_channels(tracks: list[Track]) -> list[int]:
    melodic = [c for c in range(16) if c != _DRUM_CHANNEL]
    channels = []
    next_melodic = 0
    for track in tracks:
        if track.is_drum:
            channels.append(_DRUM_CHANNEL)
        else:
            channels.append(melodic[next_melodic % len(melodic)])
            next_melodic += 1
    return channels


def write_smf(score: Score) -> bytes:
    """Serialize ``score`` to format-1 MIDI bytes.

    ``parse_smf(write_smf(s))`` reproduces the note, tempo and
    time-signature content of ``s`` exactly.
    """
    score.validate()
    if score.ticks_per_beat > 0x7FFF:
        raise ValueError("ticks_per_beat too large for the SMF header")

    tracks = score.tracks or [Track()]
    channels = _assign_channels(tracks)

    chunks = []
    for index, (track, channel) in enumerate(zip(tracks, channels)):
        # (tick, sort_rank, payload): meta first, then program,
        # note-offs before note-ons so adjacent notes re-trigger cleanly.
        events: list[tuple[int, int, int, bytes]] = []
        if index == 0:
            for tick, mpb in score.tempos:
                events.append(
                    (tick, 0, 0, bytes([0xFF, _META_TEMPO, 3]) + mpb.to_bytes(3, "big"))
                )
            for tick, numerator, denominator in score.time_signatures:
                dd = max(0, denominator.bit_length() - 1)
                events.append(
                    (tick, 0, 0, bytes([0xFF, _META_TIME_SIGNATURE, 4, numerator, dd, 24, 8]))
                )
        events.append((0, 1, 0, bytes([0xC0 | channel, track.program])))
        for note in track.notes:
            events.append(
                (note.offset_tick, 2, note.pitch, bytes([0x80 | channel, note.pitch, 0]))
            )
            events.append(
                (
                    note.onset_tick,
                    3,
                    note.pitch,
                    bytes([0x90 | channel, note.pitch, note.velocity]),
                )
            )
        events.sort(key=lambda e: (e[0], e[1], e[2]))

        body = bytearray()
        tick = 0
        for event_tick, _, _, payload in events:
            body += encode_vlq(event_tick - tick)
            tick = event_tick
            body += payload
        body += b"\x00\xff\x2f\x00"
        chunks.append(b"MTrk" + struct.pack(">I", len(body)) + bytes(body))

    header = b"MThd" + struct.pack(">IHHH", 6, 1, len(chunks), score.ticks_per_beat)
    return header + b"".join(chunks)
