"""Syntax-error metric against an independent oracle, plus corpus stats."""

import random

import pytest

from scoretok import (
    BOS_ID,
    EOS_ID,
    SchemeId,
    TokenSequence,
    build_vocabulary,
    tokenize,
    tse,
    tokens_per_beat,
    vocab_coverage,
    timing_profile,
    aggregate_tse,
)
from scoretok.bpe import learn_bpe
from scoretok.grammar import GrammarState

from conftest import random_preprocessed_score
from oracles import oracle_tse

ALL_SCHEMES = [
    "REMI", "TSD", "MIDILike", "PVm:REMI", "PVm:TSD", "PVDm:REMI", "PVDm:TSD",
]


def seq(vocab, scheme, texts) -> TokenSequence:
    return TokenSequence(scheme, [BOS_ID, *(vocab.id_of(t) for t in texts), EOS_ID])


class TestZeroError:
    @pytest.mark.parametrize("scheme_text", ALL_SCHEMES)
    @pytest.mark.parametrize("use_programs", [False, True])
    def test_tokenizer_output_is_error_free(self, scheme_text, use_programs):
        scheme = SchemeId.parse(scheme_text + ("+Programs" if use_programs else ""))
        rng = random.Random(hash((scheme_text, use_programs)) & 0xFFFF)
        for _ in range(5):
            score = random_preprocessed_score(rng)
            for sequence in tokenize(score, scheme):
                report = tse(sequence)
                assert report.total_errors == 0
                for category, ratio in report.ratios.items():
                    assert ratio is None or ratio == 0.0

    def test_not_applicable_reported_as_none(self):
        scheme = SchemeId.parse("TSD")
        score = random_preprocessed_score(random.Random(1), n_tracks=1)
        report = tse(tokenize(score, scheme)[0])
        assert report.ratios["time"] is None
        assert report.ratios["nnof"] is None
        assert report.ratios["nnon"] is None
        assert report.ratios["type"] == 0.0

    def test_remi_time_applicable(self):
        scheme = SchemeId.parse("REMI")
        score = random_preprocessed_score(random.Random(2), n_tracks=1)
        report = tse(tokenize(score, scheme)[0])
        assert report.ratios["time"] == 0.0


class TestHandConstructed:
    def test_one_type_error_in_ten_tokens(self):
        scheme = SchemeId.parse("REMI")
        vocab = build_vocabulary(scheme)
        sequence = seq(
            vocab,
            scheme,
            [
                "Bar", "Position_0", "Pitch_60", "Velocity_95", "Duration_1",
                "Pitch_64",
                "Pitch_67",  # type error: a pitch cannot follow a pitch
                "Velocity_95", "Duration_1", "Bar",
            ],
        )
        report = tse(sequence)
        assert report.denominator == 10
        assert report.ratios["type"] == pytest.approx(0.1)
        assert report.ratios["time"] == 0.0
        assert report.ratios["dupn"] == 0.0

    def test_backward_position_counts_time(self):
        scheme = SchemeId.parse("REMI")
        vocab = build_vocabulary(scheme)
        sequence = seq(
            vocab,
            scheme,
            [
                "Bar", "Position_8", "Pitch_60", "Velocity_95", "Duration_1",
                "Position_4",  # inferior to the current position
                "Pitch_64", "Velocity_95", "Duration_1",
            ],
        )
        report = tse(sequence)
        assert report.counts == {"time": 1}

    def test_equal_position_counts_time(self):
        scheme = SchemeId.parse("REMI")
        vocab = build_vocabulary(scheme)
        sequence = seq(
            vocab,
            scheme,
            [
                "Bar", "Position_8", "Pitch_60", "Velocity_95", "Duration_1",
                "Position_8",
                "Pitch_64", "Velocity_95", "Duration_1",
            ],
        )
        assert tse(sequence).counts == {"time": 1}

    def test_duplicate_note_counts_dupn(self):
        scheme = SchemeId.parse("PVDm:REMI")
        vocab = build_vocabulary(scheme)
        sequence = seq(
            vocab,
            scheme,
            [
                "Bar", "Position_0",
                "PitchVelDur_60_95_1",
                "PitchVelDur_60_63_2",  # same pitch at the same moment
                "PitchVelDur_64_95_1",
            ],
        )
        assert tse(sequence).counts == {"dupn": 1}

    def test_unclosed_note_counts_nnof(self):
        scheme = SchemeId.parse("MIDILike")
        vocab = build_vocabulary(scheme)
        sequence = seq(
            vocab,
            scheme,
            ["NoteOn_60", "Velocity_95", "TimeShift_1", "NoteOn_64", "Velocity_95",
             "TimeShift_1", "NoteOff_64"],
        )
        assert tse(sequence).counts == {"nnof": 1}

    def test_too_distant_note_off_counts_nnof(self):
        scheme = SchemeId.parse("MIDILike")
        vocab = build_vocabulary(scheme)
        texts = ["NoteOn_60", "Velocity_95"]
        texts += ["TimeShift_8"] * 3  # 24 beats later
        texts += ["NoteOff_60"]
        assert tse(seq(vocab, scheme, texts)).counts == {"nnof": 1}
        report = tse(seq(vocab, scheme, texts), nnof_max_beats=32.0)
        assert report.counts == {}

    def test_note_off_without_note_on_counts_nnon(self):
        scheme = SchemeId.parse("MIDILike")
        vocab = build_vocabulary(scheme)
        sequence = seq(
            vocab,
            scheme,
            ["NoteOn_60", "Velocity_95", "TimeShift_1",
             "NoteOff_64",  # never played
             "NoteOff_60"],
        )
        assert tse(sequence).counts == {"nnon": 1}

    def test_prompt_offset_excludes_prefix(self):
        scheme = SchemeId.parse("REMI")
        vocab = build_vocabulary(scheme)
        sequence = seq(
            vocab,
            scheme,
            [
                "Bar", "Position_8", "Pitch_60", "Velocity_95", "Duration_1",
                "Position_4",
                "Pitch_64", "Velocity_95", "Duration_1",
            ],
        )
        full = tse(sequence)
        assert full.counts == {"time": 1}
        # offset past the faulty token: no counted error, smaller denominator
        offset = sequence.ids.index(vocab.id_of("Position_4")) + 1
        clipped = tse(sequence, prompt_offset=offset)
        assert clipped.counts == {}
        assert clipped.denominator == 3


def _mutate_and_compare(scheme_text, rng, trials=40):
    scheme = SchemeId.parse(scheme_text)
    vocab = build_vocabulary(scheme)
    score = random_preprocessed_score(rng, n_tracks=1, notes_per_track=10)
    (sequence,) = tokenize(score, scheme)
    ids = sequence.ids
    for _ in range(trials):
        position = rng.randrange(1, len(ids) - 1)
        replacement = rng.randrange(5, len(vocab))
        mutated = list(ids)
        mutated[position] = replacement
        mutated_seq = TokenSequence(scheme, mutated)
        report = tse(mutated_seq)
        expected_counts, expected_denominator = oracle_tse(mutated, vocab)
        assert report.denominator == expected_denominator
        assert sum(report.counts.values()) <= report.denominator
        for category in ("type", "time", "dupn", "nnof", "nnon"):
            assert report.counts.get(category, 0) == expected_counts[category], (
                scheme_text,
                position,
                vocab.descriptor(replacement).text,
            )


class TestOracleAgreement:
    @pytest.mark.parametrize("scheme_text", ALL_SCHEMES)
    def test_random_mutations_match_oracle(self, scheme_text):
        rng = random.Random(hash(scheme_text) & 0xFFFF)
        _mutate_and_compare(scheme_text, rng)

    @pytest.mark.parametrize("scheme_text", ["REMI+Programs", "MIDILike+Programs", "TSD+Programs"])
    def test_program_schemes_match_oracle(self, scheme_text):
        rng = random.Random(hash(scheme_text) & 0xFFFF)
        _mutate_and_compare(scheme_text, rng, trials=25)

    def test_valid_sequences_match_oracle(self):
        rng = random.Random(55)
        for scheme_text in ALL_SCHEMES:
            scheme = SchemeId.parse(scheme_text)
            vocab = build_vocabulary(scheme)
            score = random_preprocessed_score(rng, n_tracks=1)
            (sequence,) = tokenize(score, scheme)
            counts, denominator = oracle_tse(sequence.ids, vocab)
            assert sum(counts.values()) == 0
            report = tse(sequence)
            assert report.denominator == denominator


class TestMaskDuality:
    @pytest.mark.parametrize("scheme_text", ALL_SCHEMES)
    def test_flagged_iff_masked_out(self, scheme_text):
        scheme = SchemeId.parse(scheme_text)
        vocab = build_vocabulary(scheme)
        rng = random.Random(hash(("duality", scheme_text)) & 0xFFFF)
        score = random_preprocessed_score(rng, n_tracks=1, notes_per_track=12)
        (sequence,) = tokenize(score, scheme)
        for _ in range(20):
            cut = rng.randrange(1, len(sequence.ids) - 1)
            prefix = sequence.ids[:cut]
            state = GrammarState(vocab)
            for token_id in prefix:
                state.step(token_id)
            mask = state.allowed_ids()
            candidates = rng.sample(range(5, len(vocab)), min(30, len(vocab) - 5))
            for candidate in candidates:
                flagged = state.classify(candidate) is not None
                assert flagged == (candidate not in mask)


class TestCorpusMetrics:
    def test_tokens_per_beat_simple_division(self):
        # four-beat score tokenized to 8 non-special tokens -> 2.0
        scheme = SchemeId.parse("PVDm:TSD")
        rng = random.Random(3)
        from scoretok import Note, Score, Track

        step = 480 // 8
        notes = [Note(i * 8 * step, 8 * step, 60 + i, 95) for i in range(4)]
        track = Track(notes=notes)
        track.sort_notes()
        score = Score(tracks=[track])  # spans 4 beats
        (sequence,) = tokenize(score, scheme)
        assert len(sequence.non_special_ids()) == 4 + 3  # merged notes + shifts
        value = tokens_per_beat([score], scheme)
        assert value == pytest.approx(7 / 4)

    def test_eight_tokens_over_four_beats_is_two(self):
        scheme = SchemeId.parse("MIDILike")
        from scoretok import Note, Score, Track

        tpb = 480
        track = Track(notes=[Note(0, 2 * tpb, 60, 95), Note(2 * tpb, 2 * tpb, 64, 95)])
        track.sort_notes()
        score = Score(ticks_per_beat=tpb, tracks=[track])
        (sequence,) = tokenize(score, scheme)
        assert len(sequence.non_special_ids()) == 8
        assert tokens_per_beat([score], scheme) == pytest.approx(2.0)

    def test_bpe_reduces_tokens_per_beat(self):
        scheme = SchemeId.parse("TSD")
        rng = random.Random(31)
        scores = [random_preprocessed_score(rng, narrow=True) for _ in range(12)]
        vocab = build_vocabulary(scheme)
        corpus = [s for score in scores for s in tokenize(score, scheme)]
        table = learn_bpe(corpus, len(vocab) + 60, vocabulary=vocab)
        base = tokens_per_beat(scores, scheme)
        packed = tokens_per_beat(scores, scheme, merge_table=table)
        assert packed <= base

    def test_budget_monotonicity(self):
        scheme = SchemeId.parse("TSD")
        rng = random.Random(32)
        scores = [random_preprocessed_score(rng, narrow=True) for _ in range(10)]
        vocab = build_vocabulary(scheme)
        corpus = [s for score in scores for s in tokenize(score, scheme)]
        table = learn_bpe(corpus, len(vocab) + 60, vocabulary=vocab)
        ratios = [
            tokens_per_beat(scores, scheme, merge_table=table.truncated(k))
            for k in (0, 15, 30, 60)
        ]
        for earlier, later in zip(ratios, ratios[1:]):
            assert later <= earlier + 1e-12

    def test_coverage_trivial_cases(self):
        scheme = SchemeId.parse("TSD")
        vocab = build_vocabulary(scheme)
        everything = TokenSequence(scheme, list(range(5, len(vocab))))
        assert vocab_coverage([everything], vocab) == 1.0
        assert vocab_coverage([], vocab) == 0.0
        assert vocab_coverage([TokenSequence(scheme, [BOS_ID, EOS_ID])], vocab) == 0.0

    def test_coverage_counts_distinct_ids(self, rng):
        scheme = SchemeId.parse("TSD")
        vocab = build_vocabulary(scheme)
        ids = [rng.randrange(5, len(vocab)) for _ in range(200)]
        expected = len(set(ids)) / (len(vocab) - 5)
        assert vocab_coverage([TokenSequence(scheme, ids)], vocab) == pytest.approx(expected)

    def test_timing_positive_and_output_stable(self):
        scheme = SchemeId.parse("REMI")
        rng = random.Random(41)
        scores = [random_preprocessed_score(rng) for _ in range(3)]
        profile = timing_profile(scores, scheme, repetitions=3)
        assert profile.tokenize_seconds_per_file > 0
        assert profile.detokenize_seconds_per_file > 0
        first = [s.ids for score in scores for s in tokenize(score, scheme)]
        second = [s.ids for score in scores for s in tokenize(score, scheme)]
        assert first == second

    def test_aggregate_pools_counts(self):
        scheme = SchemeId.parse("REMI")
        vocab = build_vocabulary(scheme)
        bad = seq(
            vocab, scheme,
            ["Bar", "Position_8", "Pitch_60", "Velocity_95", "Duration_1", "Position_4",
             "Pitch_64", "Velocity_95", "Duration_1"],
        )
        good = seq(vocab, scheme, ["Bar", "Position_0", "Pitch_60", "Velocity_95", "Duration_1"])
        combined = aggregate_tse([tse(bad), tse(good)])
        assert combined.counts == {"time": 1}
        assert combined.denominator == tse(bad).denominator + tse(good).denominator

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            tokens_per_beat([], SchemeId.parse("TSD"))
