"""Filtering, exact matching and dataset splitting."""

import random

import pytest

from scoretok import Note, Score, Track
from scoretok.corpus import (
    FilterConfig,
    MatchGraph,
    SplitSpec,
    filter_valid,
    max_weight_matching,
    split_corpus,
)
from scoretok.smf import write_smf

from oracles import best_matching


def midi_bytes(n_tracks=3, numerator=4) -> bytes:
    tracks = [
        Track(program=i, notes=[Note(0, 480, 60 + i, 64)]) for i in range(n_tracks)
    ]
    return write_smf(
        Score(tracks=tracks, time_signatures=[(0, numerator, 4)])
    )


class TestFilter:
    def test_unparseable_is_corrupt(self):
        result = filter_valid([("bad", b"\x00\x01garbage")])
        assert result.rejected == {"bad": "corrupt"}

    def test_valid_four_four_three_tracks_accepted(self):
        result = filter_valid([("good", midi_bytes())])
        assert result.accepted == ["good"]

    def test_three_four_rejected(self):
        result = filter_valid([("waltz", midi_bytes(numerator=3))])
        assert result.rejected == {"waltz": "time_signature"}

    def test_too_few_tracks_rejected(self):
        result = filter_valid([("thin", midi_bytes(n_tracks=2))])
        assert result.rejected == {"thin": "track_count"}

    def test_wildcard_signature(self):
        config = FilterConfig(time_signature="*/*", min_tracks=1)
        result = filter_valid([("waltz", midi_bytes(numerator=3))], config)
        assert result.accepted == ["waltz"]

    def test_mixed_batch(self):
        result = filter_valid(
            [
                ("a", midi_bytes()),
                ("b", b"junk"),
                ("c", midi_bytes(numerator=7)),
                ("d", midi_bytes(n_tracks=1)),
            ]
        )
        assert result.accepted == ["a"]
        assert result.rejected == {
            "b": "corrupt",
            "c": "time_signature",
            "d": "track_count",
        }


class TestMatching:
    def test_single_edge(self):
        assert max_weight_matching(MatchGraph([("a", "x", 5.0)])) == [("a", "x")]

    def test_two_by_two_diagonal(self):
        graph = MatchGraph(
            [("0", "0", 2.0), ("0", "1", 1.0), ("1", "0", 1.0), ("1", "1", 2.0)]
        )
        assert max_weight_matching(graph) == [("0", "0"), ("1", "1")]

    def test_prefers_weight_over_cardinality(self):
        graph = MatchGraph([("0", "0", 10.0), ("0", "1", 1.0), ("1", "0", 1.0)])
        assert max_weight_matching(graph) == [("0", "0")]

    def test_empty_graph(self):
        assert max_weight_matching(MatchGraph([])) == []

    def test_tie_break_lexicographic(self):
        graph = MatchGraph(
            [("0", "0", 1.0), ("0", "1", 1.0), ("1", "0", 1.0), ("1", "1", 1.0)]
        )
        assert max_weight_matching(graph) == [("0", "0"), ("1", "1")]

    def test_random_graphs_match_exhaustive_enumeration(self):
        rng = random.Random(2024)
        for trial in range(40):
            n_left = rng.randint(1, 6)
            n_right = rng.randint(1, 6)
            edges = []
            for i in range(n_left):
                for j in range(n_right):
                    if rng.random() < 0.6:
                        edges.append((f"L{i}", f"R{j}", float(rng.randint(1, 9))))
            if not edges:
                continue
            graph = MatchGraph(edges)
            got = max_weight_matching(graph)
            weights = {(l, r): w for l, r, w in edges}
            got_weight = sum(weights[p] for p in got)
            best_weight, best_pairs = best_matching(edges)
            assert got_weight == pytest.approx(best_weight), trial
            assert got == best_pairs, trial

    def test_invalid_graphs_rejected(self):
        with pytest.raises(ValueError):
            MatchGraph([("a", "x", 0.0)])
        with pytest.raises(ValueError):
            MatchGraph([("a", "x", 1.0), ("a", "x", 2.0)])

    def test_tsv_round_trip(self, tmp_path):
        graph = MatchGraph([("song-1", "spotify:9", 2.5), ("song-2", "spotify:3", 1.25)])
        path = tmp_path / "edges.tsv"
        graph.to_tsv(path)
        again = MatchGraph.from_tsv(path)
        assert again.edges == graph.edges

    def test_malformed_tsv_rejected(self, tmp_path):
        path = tmp_path / "edges.tsv"
        path.write_text("a\tb\n", encoding="utf-8")
        with pytest.raises(ValueError):
            MatchGraph.from_tsv(path)


class TestSplit:
    def test_classification_ratios(self):
        ids = [f"f{i}" for i in range(100)]
        train, valid, test = split_corpus(ids, SplitSpec(0.10, 0.15, seed=3))
        assert (len(train), len(valid), len(test)) == (75, 10, 15)

    def test_generation_ratios(self):
        ids = [f"f{i}" for i in range(100)]
        train, valid, test = split_corpus(ids, SplitSpec(0.02, 0.05, seed=3))
        assert (len(train), len(valid), len(test)) == (93, 2, 5)

    def test_deterministic_under_seed(self):
        ids = [f"f{i}" for i in range(50)]
        first = split_corpus(ids, SplitSpec(0.1, 0.2, seed=9))
        second = split_corpus(ids, SplitSpec(0.1, 0.2, seed=9))
        assert first == second
        third = split_corpus(ids, SplitSpec(0.1, 0.2, seed=10))
        assert first != third

    def test_partition(self):
        ids = [f"f{i}" for i in range(37)]
        train, valid, test = split_corpus(ids, SplitSpec(0.11, 0.13, seed=1))
        combined = sorted(train + valid + test)
        assert combined == sorted(ids)
        assert not (set(train) & set(valid))
        assert not (set(train) & set(test))
        assert not (set(valid) & set(test))

    def test_too_small_corpus_rejected(self):
        with pytest.raises(ValueError):
            split_corpus(["a", "b"], SplitSpec(0.1, 0.1, seed=0))

    def test_invalid_fractions_rejected(self):
        with pytest.raises(ValueError):
            SplitSpec(0.6, 0.5, seed=0)
        with pytest.raises(ValueError):
            SplitSpec(-0.1, 0.5, seed=0)
