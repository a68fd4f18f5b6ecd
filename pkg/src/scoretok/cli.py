"""Batch command-line surface.

Every subcommand reads and writes plain files (JSON reports, TSV edge
lists, MIDI and EMB1 binaries), emits one run manifest alongside its
outputs, and keeps its output deterministic for fixed inputs, configs
and seeds; wall-clock figures are segregated under ``timing`` keys so
reports can be compared byte-for-byte without them.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .bpe import MergeTable, apply_bpe, learn_bpe, merge_stats, undo_bpe
from .corpus import (
    FilterConfig,
    MatchGraph,
    SplitSpec,
    filter_valid,
    max_weight_matching,
    save_split,
    split_corpus,
)
from .geometry import geometry_report, load_embeddings
from .metrics import aggregate_tse, corpus_stats, tse
from .score import PreprocessConfig, preprocess
from .smf import SmfParseError, parse_smf, write_smf
from .tokenizer import load_sequences, save_sequences, detokenize, tokenize
from .vocab import SchemeId, Vocabulary, build_vocabulary

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

_MIDI_SUFFIXES = (".mid", ".midi")


class DataError(Exception):
    """Bad input data; reported with file context and exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _jobs_default() -> int:
    try:
        return max(1, int(os.environ.get("SCORETOK_JOBS", "1")))
    except ValueError:
        return 1


def _load_config(path: str | None) -> PreprocessConfig:
    return _load_config_scheme(path)[0]


def _load_config_scheme(path: str | None) -> tuple[PreprocessConfig, str | None]:
    """Config file: either bare PreprocessConfig fields or
    ``{"scheme": ..., "preprocess": {...}}``."""
    if path is None:
        return PreprocessConfig(), None
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        scheme = data.get("scheme")
        if "preprocess" in data or "scheme" in data:
            data = data.get("preprocess") or {}
        return PreprocessConfig.from_json(data), scheme
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad config: {exc}")


def _write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, indent=1)
        handle.write("\n")


def _manifest(
    target: Path,
    command: str,
    config: dict,
    inputs: list[str],
    outputs: list[str],
    started: float,
) -> None:
    # next to a directory's outputs, or derived from a single-file output
    # so runs sharing a directory never clobber each other's manifest
    path = target / "manifest.json" if target.is_dir() else target.with_suffix(".manifest.json")
    _write_json(
        path,
        {
            "command": command,
            "engine_version": __version__,
            "config": config,
            "inputs": sorted(inputs),
            "outputs": sorted(outputs),
            "timing": {"seconds": time.time() - started},
        },
    )


def _midi_files(directory: str) -> list[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"{directory}: not a directory")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in _MIDI_SUFFIXES)
    if not files:
        raise DataError(f"{directory}: no MIDI files found")
    return files


def _token_files(directory: str) -> list[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"{directory}: not a directory")
    files = sorted(root.glob("*.tokens.json"))
    if not files:
        reserved = {"manifest.json", "vocabulary.json"}
        files = sorted(f for f in root.glob("*.json") if f.name not in reserved)
    if not files:
        raise DataError(f"{directory}: no token files found")
    return files


def _parallel(jobs: int, fn, items):
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _load_token_dir(directory: str):
    files = _token_files(directory)
    per_file = []
    for path in files:
        try:
            per_file.append((path, load_sequences(path)))
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: {exc}")
    schemes = {str(s.scheme) for _, seqs in per_file for s in seqs}
    if len(schemes) > 1:
        raise DataError(f"{directory}: mixed schemes {sorted(schemes)}")
    return per_file, SchemeId.parse(next(iter(schemes)))


# -- subcommands --------------------------------------------------------


def _cmd_tokenize(args) -> int:
    started = time.time()
    config, config_scheme = _load_config_scheme(args.config)
    if not args.scheme and not config_scheme:
        raise DataError("no scheme given: pass --scheme or a config with a scheme field")
    scheme = SchemeId.parse(args.scheme or config_scheme)
    vocabulary = build_vocabulary(scheme, config)
    files = _midi_files(args.in_dir)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(path: Path) -> Path:
        try:
            score = parse_smf(path.read_bytes())
        except SmfParseError as exc:
            raise DataError(f"{path}: {exc}")
        if not args.no_preprocess:
            score = preprocess(score, config)
        sequences = tokenize(score, scheme, config=config, vocabulary=vocabulary)
        out_path = out_dir / f"{path.stem}.tokens.json"
        save_sequences(sequences, out_path)
        return out_path

    outputs = _parallel(args.jobs, one, files)
    vocabulary.save(out_dir / "vocabulary.json")
    _manifest(
        out_dir,
        "tokenize",
        {"scheme": str(scheme), "preprocess": config.to_json(), "no_preprocess": args.no_preprocess},
        [str(f) for f in files],
        [str(p) for p in outputs] + [str(out_dir / "vocabulary.json")],
        started,
    )
    return EXIT_OK


def _cmd_detokenize(args) -> int:
    started = time.time()
    config = _load_config(args.config)
    per_file, scheme = _load_token_dir(args.in_dir)
    if args.vocab:
        try:
            with open(args.vocab, "r", encoding="utf-8") as handle:
                vocabulary = Vocabulary.from_json(json.load(handle), scheme, config)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"{args.vocab}: {exc}")
    else:
        vocabulary = build_vocabulary(scheme, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(item) -> Path:
        path, sequences = item
        try:
            score = detokenize(sequences, vocabulary=vocabulary)
        except (ValueError, KeyError) as exc:
            raise DataError(f"{path}: {exc}")
        stem = path.name[: -len(".tokens.json")] if path.name.endswith(".tokens.json") else path.stem
        out_path = out_dir / f"{stem}.mid"
        out_path.write_bytes(write_smf(score))
        return out_path

    outputs = _parallel(args.jobs, one, per_file)
    _manifest(
        out_dir,
        "detokenize",
        {"scheme": str(scheme), "preprocess": config.to_json()},
        [str(p) for p, _ in per_file],
        [str(p) for p in outputs],
        started,
    )
    return EXIT_OK


def _cmd_bpe_learn(args) -> int:
    started = time.time()
    config = _load_config(args.config)
    per_file, scheme = _load_token_dir(args.token_dir)
    vocabulary = build_vocabulary(scheme, config)
    corpus = [s for _, seqs in per_file for s in seqs]
    try:
        table = learn_bpe(corpus, args.vocab_size, vocabulary=vocabulary)
    except ValueError as exc:
        raise DataError(str(exc))
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    table.save(out_path)
    _manifest(
        out_path,
        "bpe-learn",
        {"scheme": str(scheme), "vocab_size": args.vocab_size, "learned_merges": len(table)},
        [str(p) for p, _ in per_file],
        [str(out_path)],
        started,
    )
    return EXIT_OK


def _bpe_transform(args, command: str, transform) -> int:
    started = time.time()
    per_file, scheme = _load_token_dir(args.token_dir)
    try:
        table = MergeTable.load(args.merges)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"{args.merges}: {exc}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(item) -> Path:
        path, sequences = item
        try:
            converted = [transform(s, table) for s in sequences]
        except ValueError as exc:
            raise DataError(f"{path}: {exc}")
        out_path = out_dir / path.name
        save_sequences(converted, out_path)
        return out_path

    outputs = _parallel(args.jobs, one, per_file)
    _manifest(
        out_dir,
        command,
        {"scheme": str(scheme), "merges": args.merges, "merge_count": len(table)},
        [str(p) for p, _ in per_file],
        [str(p) for p in outputs],
        started,
    )
    return EXIT_OK


def _cmd_stats(args) -> int:
    started = time.time()
    config = _load_config(args.config)
    per_file, scheme = _load_token_dir(args.token_dir)
    vocabulary = build_vocabulary(scheme, config)
    table = None
    if args.merges:
        try:
            table = MergeTable.load(args.merges, vocabulary=vocabulary)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"{args.merges}: {exc}")

    # token files may hold base ids or already-encoded ids
    max_id = max(
        (i for _, seqs in per_file for s in seqs for i in s.ids), default=0
    )
    encoded_input = max_id >= len(vocabulary)
    if encoded_input and table is None:
        raise DataError("token files hold learned ids; pass --merges")

    scores = []
    for path, sequences in per_file:
        try:
            decodable = [undo_bpe(s, table) for s in sequences] if encoded_input else sequences
            scores.append(detokenize(decodable, vocabulary=vocabulary))
        except (ValueError, KeyError) as exc:
            raise DataError(f"{path}: {exc}")

    stats = corpus_stats(
        scores, scheme, merge_table=table, vocabulary=vocabulary, with_timing=not args.no_timing
    )
    report = {"scheme": str(scheme)}
    report.update(stats.to_json())

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [out_dir / "report.json"]
    if table is not None:
        bpe_stats = merge_stats(table, vocabulary)
        report["merge_stats"] = bpe_stats.to_json()
        curve_path = out_dir / "merge_curve.csv"
        with open(curve_path, "w", encoding="utf-8") as handle:
            handle.write("vocab_size,average_length,max_length\n")
            for size, average, maximum in bpe_stats.length_curve:
                handle.write(f"{size},{average},{maximum}\n")
        outputs.append(curve_path)
        if args.figures and bpe_stats.length_curve:
            from .figures import plot_merge_length_curves, plot_type_composition

            outputs.append(plot_merge_length_curves(bpe_stats, out_dir / "merge_lengths.png"))
            if bpe_stats.type_histogram:
                outputs.append(
                    plot_type_composition(bpe_stats, out_dir / "type_composition.png")
                )
    _write_json(out_dir / "report.json", report)
    _manifest(
        out_dir,
        "stats",
        {"scheme": str(scheme), "merges": args.merges, "preprocess": config.to_json()},
        [str(p) for p, _ in per_file],
        [str(p) for p in outputs],
        started,
    )
    return EXIT_OK


def _cmd_tse(args) -> int:
    started = time.time()
    config = _load_config(args.config)
    per_file, scheme = _load_token_dir(args.token_dir)
    if args.scheme and SchemeId.parse(args.scheme) != scheme:
        raise DataError(f"token files carry scheme {scheme}, not {args.scheme}")
    vocabulary = build_vocabulary(scheme, config)
    table = None
    if args.merges:
        try:
            table = MergeTable.load(args.merges, vocabulary=vocabulary)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"{args.merges}: {exc}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(item):
        path, sequences = item
        try:
            reports = [
                tse(
                    s,
                    vocabulary=vocabulary,
                    merge_table=table,
                    prompt_offset=args.prompt_offset,
                )
                for s in sequences
            ]
        except (ValueError, KeyError) as exc:
            raise DataError(f"{path}: {exc}")
        combined = aggregate_tse(reports)
        stem = path.name[: -len(".tokens.json")] if path.name.endswith(".tokens.json") else path.stem
        out_path = out_dir / f"{stem}.tse.json"
        _write_json(out_path, {"tse": combined.to_json()})
        return out_path, combined

    results = _parallel(args.jobs, one, per_file)
    overall = aggregate_tse(report for _, report in results)
    _write_json(out_dir / "aggregate.json", {"tse": overall.to_json()})
    _manifest(
        out_dir,
        "tse",
        {
            "scheme": str(scheme),
            "prompt_offset": args.prompt_offset,
            "merges": args.merges,
        },
        [str(p) for p, _ in per_file],
        [str(p) for p, _ in results] + [str(out_dir / "aggregate.json")],
        started,
    )
    return EXIT_OK


def _cmd_embed_geometry(args) -> int:
    started = time.time()
    try:
        matrix = load_embeddings(Path(args.embeddings).read_bytes())
    except (OSError, ValueError) as exc:
        raise DataError(f"{args.embeddings}: {exc}")
    report = geometry_report(matrix, ratio_threshold=args.threshold)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [out_dir / "geometry.json"]
    _write_json(out_dir / "geometry.json", report.to_json())
    if args.csv:
        csv_path = out_dir / "spectrum.csv"
        with open(csv_path, "w", encoding="utf-8") as handle:
            handle.write("index,normalized_singular_value\n")
            for index, value in enumerate(report.spectrum, 1):
                handle.write(f"{index},{value}\n")
        outputs.append(csv_path)
    if args.figures:
        from .figures import plot_singular_spectrum

        outputs.append(plot_singular_spectrum(report.spectrum, out_dir / "spectrum.png"))
    _manifest(
        out_dir,
        "embed-geometry",
        {"threshold": args.threshold},
        [args.embeddings],
        [str(p) for p in outputs],
        started,
    )
    return EXIT_OK


def _cmd_dedup(args) -> int:
    started = time.time()
    try:
        graph = MatchGraph.from_tsv(args.edges)
    except (OSError, ValueError) as exc:
        raise DataError(f"{args.edges}: {exc}")
    pairs = max_weight_matching(graph)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        "".join(f"{left}\t{right}\n" for left, right in pairs), encoding="utf-8"
    )
    _manifest(
        out_path,
        "dedup",
        {"edges": args.edges, "pair_count": len(pairs)},
        [args.edges],
        [str(out_path)],
        started,
    )
    return EXIT_OK


def _cmd_filter(args) -> int:
    started = time.time()
    files = _midi_files(args.in_dir)
    config = FilterConfig(time_signature=args.time_signature, min_tracks=args.min_tracks)
    result = filter_valid(files, config)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out_path, result.to_json())
    _manifest(
        out_path,
        "filter",
        {"time_signature": args.time_signature, "min_tracks": args.min_tracks},
        [str(f) for f in files],
        [str(out_path)],
        started,
    )
    return EXIT_OK


def _cmd_split(args) -> int:
    started = time.time()
    try:
        ids = [
            line.strip()
            for line in Path(args.list).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    except OSError as exc:
        raise DataError(f"{args.list}: {exc}")
    try:
        spec = SplitSpec(valid_fraction=args.valid, test_fraction=args.test, seed=args.seed)
        train, valid, test = split_corpus(ids, spec)
    except ValueError as exc:
        raise DataError(str(exc))
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_split(out_path, train, valid, test, args.seed)
    _manifest(
        out_path,
        "split",
        {"valid": args.valid, "test": args.test, "seed": args.seed},
        [args.list],
        [str(out_path)],
        started,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scoretok", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    jobs_kwargs = dict(type=int, default=_jobs_default(), help="parallel workers (env SCORETOK_JOBS)")

    p = sub.add_parser("tokenize", help="MIDI files to token JSON")
    p.add_argument("in_dir")
    p.add_argument("--scheme", help="e.g. REMI, TSD, MIDILike, PVm:TSD, REMI+Programs")
    p.add_argument("--config", help="preprocess config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--no-preprocess", action="store_true", help="inputs are already on the grids")
    p.add_argument("--jobs", **jobs_kwargs)
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("detokenize", help="token JSON back to MIDI files")
    p.add_argument("in_dir")
    p.add_argument("--vocab", help="vocabulary JSON (rebuilt from the scheme when omitted)")
    p.add_argument("--config", help="preprocess config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", **jobs_kwargs)
    p.set_defaults(func=_cmd_detokenize)

    p = sub.add_parser("bpe-learn", help="learn a merge table from token files")
    p.add_argument("token_dir")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--config", help="preprocess config JSON")
    p.add_argument("--out", required=True, help="merges JSON path")
    p.set_defaults(func=_cmd_bpe_learn)

    p = sub.add_parser("bpe-apply", help="encode token files with a merge table")
    p.add_argument("token_dir")
    p.add_argument("--merges", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", **jobs_kwargs)
    p.set_defaults(func=lambda args: _bpe_transform(args, "bpe-apply", apply_bpe))

    p = sub.add_parser("bpe-undo", help="expand learned ids back to base ids")
    p.add_argument("token_dir")
    p.add_argument("--merges", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", **jobs_kwargs)
    p.set_defaults(func=lambda args: _bpe_transform(args, "bpe-undo", undo_bpe))

    p = sub.add_parser("stats", help="tokens/beat, coverage, merge stats, timing")
    p.add_argument("token_dir")
    p.add_argument("--merges")
    p.add_argument("--config", help="preprocess config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action="store_true", help="render PNG figures next to the report")
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("tse", help="tokenization syntax errors per file")
    p.add_argument("token_dir")
    p.add_argument("--scheme", help="assert the token files carry this scheme")
    p.add_argument("--prompt-offset", type=int, default=0)
    p.add_argument("--merges", help="expand learned ids before evaluation")
    p.add_argument("--config", help="preprocess config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", **jobs_kwargs)
    p.set_defaults(func=_cmd_tse)

    p = sub.add_parser("embed-geometry", help="isoscore, intrinsic dimension, spectrum")
    p.add_argument("embeddings", help="EMB1 binary matrix")
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--csv", action="store_true", help="also emit spectrum.csv")
    p.add_argument("--figures", action="store_true", help="also render spectrum.png")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_embed_geometry)

    p = sub.add_parser("dedup", help="maximum-weight matching over an edge list")
    p.add_argument("edges", help="TSV lines: left<TAB>right<TAB>weight")
    p.add_argument("--out", required=True, help="matched pairs TSV")
    p.set_defaults(func=_cmd_dedup)

    p = sub.add_parser("filter", help="validity-filter MIDI files")
    p.add_argument("in_dir")
    p.add_argument("--time-signature", default="4/*")
    p.add_argument("--min-tracks", type=int, default=3)
    p.add_argument("--out", required=True, help="acceptance report JSON")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("split", help="train/valid/test split of an id list")
    p.add_argument("list", help="text file, one id per line")
    p.add_argument("--valid", type=float, required=True)
    p.add_argument("--test", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="split manifest JSON")
    p.set_defaults(func=_cmd_split)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"scoretok: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(f"scoretok: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
