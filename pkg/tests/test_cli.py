"""End-to-end command-line behavior: pipelines, manifests, exit codes."""

import json
import random
import subprocess
import sys

import numpy as np
import pytest

from scoretok import notes_equal, preprocess
from scoretok.cli import main
from scoretok.geometry import save_embeddings
from scoretok.smf import parse_smf, write_smf

from conftest import random_preprocessed_score


@pytest.fixture
def midi_dir(tmp_path, rng):
    directory = tmp_path / "midi"
    directory.mkdir()
    for index in range(6):
        score = random_preprocessed_score(rng, narrow=True, notes_per_track=20)
        (directory / f"song{index:02d}.mid").write_bytes(write_smf(score))
    return directory


def run(*argv) -> int:
    return main([str(a) for a in argv])


def read_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


class TestPipeline:
    def test_full_chain_reproduces_preprocessed_content(self, tmp_path, midi_dir):
        tokens = tmp_path / "tokens"
        assert run("tokenize", midi_dir, "--scheme", "TSD", "--out", tokens) == 0
        merges = tmp_path / "merges.json"
        assert run("bpe-learn", tokens, "--vocab-size", "200", "--out", merges) == 0
        encoded = tmp_path / "encoded"
        assert run("bpe-apply", tokens, "--merges", merges, "--out", encoded) == 0
        decoded_tokens = tmp_path / "decoded_tokens"
        assert run("bpe-undo", encoded, "--merges", merges, "--out", decoded_tokens) == 0
        midi_out = tmp_path / "midi_out"
        assert run("detokenize", decoded_tokens, "--out", midi_out) == 0

        for source in sorted(midi_dir.glob("*.mid")):
            reference = preprocess(parse_smf(source.read_bytes()))
            produced = parse_smf((midi_out / source.name).read_bytes())
            assert notes_equal(reference, produced), source.name

    def test_undo_inverts_apply_bytewise(self, tmp_path, midi_dir):
        tokens = tmp_path / "tokens"
        run("tokenize", midi_dir, "--scheme", "REMI", "--out", tokens)
        merges = tmp_path / "merges.json"
        run("bpe-learn", tokens, "--vocab-size", "220", "--out", merges)
        encoded = tmp_path / "enc"
        run("bpe-apply", tokens, "--merges", merges, "--out", encoded)
        decoded = tmp_path / "dec"
        run("bpe-undo", encoded, "--merges", merges, "--out", decoded)
        for path in sorted(tokens.glob("*.tokens.json")):
            assert read_json(path) == read_json(decoded / path.name)

    def test_tse_on_tokenizer_output_is_zero(self, tmp_path, midi_dir):
        tokens = tmp_path / "tokens"
        run("tokenize", midi_dir, "--scheme", "MIDILike", "--out", tokens)
        report_dir = tmp_path / "tse"
        assert run("tse", tokens, "--out", report_dir) == 0
        aggregate = read_json(report_dir / "aggregate.json")
        for category, ratio in aggregate["tse"]["ratios"].items():
            assert ratio in (None, 0.0), category

    def test_stats_reports_compression(self, tmp_path, midi_dir):
        tokens = tmp_path / "tokens"
        run("tokenize", midi_dir, "--scheme", "TSD", "--out", tokens)
        merges = tmp_path / "merges.json"
        run("bpe-learn", tokens, "--vocab-size", "200", "--out", merges)
        plain_dir = tmp_path / "stats_plain"
        packed_dir = tmp_path / "stats_packed"
        assert run("stats", tokens, "--out", plain_dir, "--no-timing") == 0
        assert (
            run("stats", tokens, "--merges", merges, "--out", packed_dir,
                "--no-timing", "--figures") == 0
        )
        plain = read_json(plain_dir / "report.json")
        packed = read_json(packed_dir / "report.json")
        assert packed["tokens_per_beat"] < plain["tokens_per_beat"]
        assert (packed_dir / "merge_curve.csv").exists()
        assert (packed_dir / "merge_lengths.png").stat().st_size > 0
        assert (packed_dir / "type_composition.png").stat().st_size > 0
        assert packed["merge_stats"]["average_length"] >= 2.0

    def test_stats_accepts_encoded_input(self, tmp_path, midi_dir):
        tokens = tmp_path / "tokens"
        run("tokenize", midi_dir, "--scheme", "TSD", "--out", tokens)
        merges = tmp_path / "merges.json"
        run("bpe-learn", tokens, "--vocab-size", "180", "--out", merges)
        encoded = tmp_path / "enc"
        run("bpe-apply", tokens, "--merges", merges, "--out", encoded)
        out = tmp_path / "stats_enc"
        assert run("stats", encoded, "--merges", merges, "--out", out, "--no-timing") == 0
        out2 = tmp_path / "stats_fail"
        assert run("stats", encoded, "--out", out2, "--no-timing") == 2


class TestGeometryCommand:
    def test_report_csv_and_figure(self, tmp_path):
        rng = np.random.default_rng(50)
        emb = tmp_path / "emb.bin"
        emb.write_bytes(save_embeddings(rng.standard_normal((64, 16)).astype(np.float32)))
        out = tmp_path / "geom"
        assert run("embed-geometry", emb, "--out", out, "--csv", "--figures") == 0
        report = read_json(out / "geometry.json")
        assert 0.0 <= report["isoscore"] <= 1.0
        assert 1 <= report["pca_id"] <= 16
        assert len(report["spectrum"]) == 16
        csv_lines = (out / "spectrum.csv").read_text().strip().splitlines()
        assert csv_lines[0] == "index,normalized_singular_value"
        assert len(csv_lines) == 17
        assert (out / "spectrum.png").stat().st_size > 0

    def test_figures_off_by_default(self, tmp_path):
        rng = np.random.default_rng(51)
        emb = tmp_path / "emb.bin"
        emb.write_bytes(save_embeddings(rng.standard_normal((32, 8)).astype(np.float32)))
        out = tmp_path / "geom"
        assert run("embed-geometry", emb, "--out", out) == 0
        assert not (out / "spectrum.png").exists()

    def test_bad_embedding_file(self, tmp_path):
        emb = tmp_path / "emb.bin"
        emb.write_bytes(b"JUNKJUNKJUNK")
        assert run("embed-geometry", emb, "--out", tmp_path / "geom") == 2


class TestCorpusCommands:
    def test_dedup_writes_pairs(self, tmp_path):
        edges = tmp_path / "edges.tsv"
        edges.write_text("m1\ts1\t2.0\nm1\ts2\t1.0\nm2\ts1\t1.0\nm2\ts2\t2.0\n")
        out = tmp_path / "pairs.tsv"
        assert run("dedup", edges, "--out", out) == 0
        assert out.read_text() == "m1\ts1\nm2\ts2\n"

    def test_split_manifest(self, tmp_path):
        listing = tmp_path / "files.txt"
        listing.write_text("".join(f"f{i}\n" for i in range(100)))
        out = tmp_path / "split.json"
        assert (
            run("split", listing, "--valid", "0.10", "--test", "0.15", "--seed", "7", "--out", out)
            == 0
        )
        manifest = read_json(out)
        assert len(manifest["train"]) == 75
        assert len(manifest["valid"]) == 10
        assert len(manifest["test"]) == 15
        assert manifest["seed"] == 7

    def test_filter_reports_reasons(self, tmp_path, midi_dir):
        (midi_dir / "broken.mid").write_bytes(b"not midi")
        out = tmp_path / "filter.json"
        assert run("filter", midi_dir, "--min-tracks", "1", "--out", out) == 0
        report = read_json(out)
        assert any(name.endswith("broken.mid") for name in report["rejected"])
        assert len(report["accepted"]) == 6


def exit_code(argv) -> int:
    try:
        return main(argv)
    except SystemExit as exc:  # argparse raises on usage errors
        return exc.code


class TestContract:
    def test_usage_error_exits_one(self):
        assert exit_code(["tokenize"]) == 1
        assert exit_code(["split", "x", "--valid", "0.1"]) == 1

    def test_unknown_command_exits_one(self):
        assert exit_code(["frobnicate"]) == 1

    def test_data_error_exits_two(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert run("tokenize", empty, "--scheme", "REMI", "--out", tmp_path / "o") == 2
        assert run("tokenize", tmp_path / "missing", "--scheme", "REMI", "--out", tmp_path / "o") == 2

    def test_manifest_written_with_segregated_timing(self, tmp_path, midi_dir):
        tokens = tmp_path / "tokens"
        run("tokenize", midi_dir, "--scheme", "TSD", "--out", tokens)
        manifest = read_json(tokens / "manifest.json")
        assert manifest["command"] == "tokenize"
        assert "seconds" in manifest["timing"]
        assert manifest["config"]["scheme"] == "TSD"
        assert len(manifest["inputs"]) == 6

    def test_idempotent_outputs(self, tmp_path, midi_dir):
        first = tmp_path / "first"
        second = tmp_path / "second"
        for out in (first, second):
            assert run("tokenize", midi_dir, "--scheme", "REMI", "--out", out) == 0
        for path in sorted(first.glob("*.tokens.json")):
            assert path.read_bytes() == (second / path.name).read_bytes()

    def test_jobs_flag_keeps_outputs_identical(self, tmp_path, midi_dir):
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        assert run("tokenize", midi_dir, "--scheme", "TSD", "--out", serial) == 0
        assert run("tokenize", midi_dir, "--scheme", "TSD", "--out", parallel, "--jobs", "4") == 0
        for path in sorted(serial.glob("*.tokens.json")):
            assert path.read_bytes() == (parallel / path.name).read_bytes()

    def test_console_script_entry_point(self, tmp_path, midi_dir):
        result = subprocess.run(
            [sys.executable, "-m", "scoretok.cli", "--version"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
