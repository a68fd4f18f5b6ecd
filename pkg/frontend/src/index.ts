/**
 * Node bindings for the scoretok symbolic-music tokenization engine.
 *
 * Everything here shells out to the `scoretok` command-line tool and
 * exchanges its documented file formats; the binding holds no
 * tokenization logic of its own, so results are identical to running
 * the CLI by hand on the same inputs.
 */

import { execFileSync } from "node:child_process";
import {
  copyFileSync,
  mkdirSync,
  mkdtempSync,
  readFileSync,
  readdirSync,
  rmSync,
  writeFileSync,
} from "node:fs";
import { tmpdir } from "node:os";
import { basename, join } from "node:path";

/** Preprocessing grid settings, mirroring the engine's config JSON. */
export interface PreprocessConfig {
  velocity_bin_count?: number;
  duration_grid?: Array<[number, number]>;
  positions_per_bar?: number;
  pitch_min?: number;
  pitch_max?: number;
  merge_programs?: boolean;
  require_four_four?: boolean;
}

/** One token sequence as the engine serializes it. */
export interface TokenSequence {
  scheme: string;
  ids: number[];
  ticks_per_beat?: number;
  program?: number | null;
}

/** Ordered merge rules; the id of rank r is `base_size + r`. */
export interface MergeTable {
  base_size: number;
  merges: Array<[number, number]>;
}

/** Per-category syntax-error ratios; null marks a non-applicable category. */
export interface TseReport {
  ratios: Record<string, number | null>;
  counts: Record<string, number>;
  denominator: number;
}

export interface TokenizerOptions {
  /** Scheme name, e.g. "REMI", "TSD", "MIDILike", "PVm:TSD", "REMI+Programs". */
  scheme: string;
  /** Optional preprocessing overrides; engine defaults otherwise. */
  preprocess?: PreprocessConfig;
  /** Command used to invoke the engine; defaults to ["scoretok"]. */
  command?: string[];
}

/** A CLI invocation failed; carries the engine's own error message. */
export class EngineError extends Error {
  constructor(
    message: string,
    readonly exitCode: number,
  ) {
    super(message);
    this.name = "EngineError";
  }
}

// a valid MIDI file holding an empty track: header chunk plus an
// end-of-track-only track chunk; used to export vocabularies without
// touching caller data
const EMPTY_MIDI = Buffer.from([
  0x4d, 0x54, 0x68, 0x64, 0x00, 0x00, 0x00, 0x06,
  0x00, 0x00, 0x00, 0x01, 0x01, 0xe0,
  0x4d, 0x54, 0x72, 0x6b, 0x00, 0x00, 0x00, 0x04,
  0x00, 0xff, 0x2f, 0x00,
]);

function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "scoretok-node-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

function readJson<T>(path: string): T {
  return JSON.parse(readFileSync(path, "utf-8")) as T;
}

/**
 * Thin handle over one scheme/config pair and an optional merge table.
 *
 * Instances are immutable apart from {@link trainBpe}, which installs
 * the learned table on the handle; concurrent read-only use is safe.
 */
export class BoundTokenizer {
  private mergeTable: MergeTable | null = null;

  private constructor(
    readonly scheme: string,
    readonly preprocess: PreprocessConfig,
    private readonly command: string[],
  ) {}

  /** Create a tokenizer for a scheme, optionally overriding the grids. */
  static fromConfig(options: TokenizerOptions): BoundTokenizer {
    if (!options.scheme) {
      throw new EngineError("a scheme is required", 1);
    }
    return new BoundTokenizer(
      options.scheme,
      options.preprocess ?? {},
      options.command ?? ["scoretok"],
    );
  }

  /** The merge table learned by or installed on this handle, if any. */
  get merges(): MergeTable | null {
    return this.mergeTable;
  }

  private run(args: string[]): void {
    const [executable, ...prefix] = this.command;
    try {
      execFileSync(executable, [...prefix, ...args], { stdio: "pipe" });
    } catch (error) {
      const failure = error as { status?: number; stderr?: Buffer; message?: string };
      const detail = failure.stderr?.toString().trim() || failure.message || "engine failed";
      throw new EngineError(detail, failure.status ?? 2);
    }
  }

  private writeConfig(dir: string): string {
    const path = join(dir, "config.json");
    writeFileSync(
      path,
      JSON.stringify({ scheme: this.scheme, preprocess: this.preprocess }),
    );
    return path;
  }

  private writeMerges(dir: string): string {
    const path = join(dir, "merges.json");
    writeFileSync(path, JSON.stringify(this.mergeTable));
    return path;
  }

  private tokenizeInto(dir: string, midis: Array<string | Uint8Array>): string {
    const inDir = join(dir, "in");
    mkdirSync(inDir);
    midis.forEach((midi, index) => {
      const target = join(inDir, `input${String(index).padStart(4, "0")}.mid`);
      if (typeof midi === "string") {
        copyFileSync(midi, target);
      } else {
        writeFileSync(target, midi);
      }
    });
    const outDir = join(dir, "tokens");
    this.run([
      "tokenize", inDir,
      "--config", this.writeConfig(dir),
      "--out", outDir,
    ]);
    return outDir;
  }

  /**
   * Learn a merge table from MIDI files (or pre-tokenized `.json`
   * token files) and install it on this handle.
   */
  trainBpe(paths: string[], targetSize: number): MergeTable {
    if (paths.length === 0) {
      throw new EngineError("empty training corpus", 2);
    }
    return withTempDir((dir) => {
      let tokenDir: string;
      if (paths.every((p) => p.endsWith(".json"))) {
        tokenDir = join(dir, "tokens");
        mkdirSync(tokenDir);
        for (const path of paths) {
          copyFileSync(path, join(tokenDir, basename(path)));
        }
      } else if (paths.some((p) => p.endsWith(".json"))) {
        throw new EngineError("mixing MIDI and token files is not supported", 1);
      } else {
        tokenDir = this.tokenizeInto(dir, paths);
      }
      const mergesPath = join(dir, "learned.json");
      this.run([
        "bpe-learn", tokenDir,
        "--vocab-size", String(targetSize),
        "--out", mergesPath,
      ]);
      this.mergeTable = readJson<MergeTable>(mergesPath);
      return this.mergeTable;
    });
  }

  /**
   * Tokenize one MIDI file (path or raw bytes). Returns one sequence
   * per track, or one merged stream for `+Programs` schemes; learned
   * ids appear when a merge table is installed.
   */
  encode(midi: string | Uint8Array): TokenSequence[] {
    return JSON.parse(this.encodeRaw(midi).toString("utf-8")) as TokenSequence[];
  }

  /** Like {@link encode} but returns the engine's token JSON verbatim. */
  encodeRaw(midi: string | Uint8Array): Buffer {
    return withTempDir((dir) => {
      let tokenDir = this.tokenizeInto(dir, [midi]);
      if (this.mergeTable) {
        const encodedDir = join(dir, "encoded");
        this.run([
          "bpe-apply", tokenDir,
          "--merges", this.writeMerges(dir),
          "--out", encodedDir,
        ]);
        tokenDir = encodedDir;
      }
      return Buffer.from(readFileSync(join(tokenDir, "input0000.tokens.json")));
    });
  }

  private normalize(sequences: TokenSequence[] | number[][]): TokenSequence[] {
    return sequences.map((item) =>
      Array.isArray(item) ? { scheme: this.scheme, ids: item } : item,
    );
  }

  /** Decode token sequences (or bare id lists) back to MIDI bytes. */
  decode(sequences: TokenSequence[] | number[][]): Buffer {
    return withTempDir((dir) => {
      let tokenDir = join(dir, "tokens");
      mkdirSync(tokenDir);
      writeFileSync(
        join(tokenDir, "out.tokens.json"),
        JSON.stringify(this.normalize(sequences)),
      );
      if (this.mergeTable) {
        const decodedDir = join(dir, "decoded");
        this.run([
          "bpe-undo", tokenDir,
          "--merges", this.writeMerges(dir),
          "--out", decodedDir,
        ]);
        tokenDir = decodedDir;
      }
      const midiDir = join(dir, "midi");
      this.run([
        "detokenize", tokenDir,
        "--config", this.writeConfig(dir),
        "--out", midiDir,
      ]);
      return Buffer.from(readFileSync(join(midiDir, "out.mid")));
    });
  }

  /** Syntax-error report for token sequences (or bare id lists). */
  tse(sequences: TokenSequence[] | number[][], promptOffset = 0): TseReport {
    return withTempDir((dir) => {
      const tokenDir = join(dir, "tokens");
      mkdirSync(tokenDir);
      writeFileSync(
        join(tokenDir, "subject.tokens.json"),
        JSON.stringify(this.normalize(sequences)),
      );
      const reportDir = join(dir, "report");
      const args = [
        "tse", tokenDir,
        "--prompt-offset", String(promptOffset),
        "--config", this.writeConfig(dir),
        "--out", reportDir,
      ];
      if (this.mergeTable) {
        args.push("--merges", this.writeMerges(dir));
      }
      this.run(args);
      const aggregate = readJson<{ tse: TseReport }>(join(reportDir, "aggregate.json"));
      return aggregate.tse;
    });
  }

  /** Write config, vocabulary and merge-table JSON into a directory. */
  save(directory: string): void {
    mkdirSync(directory, { recursive: true });
    writeFileSync(
      join(directory, "config.json"),
      JSON.stringify({ scheme: this.scheme, preprocess: this.preprocess }, null, 1),
    );
    withTempDir((dir) => {
      const tokenDir = this.tokenizeInto(dir, [EMPTY_MIDI]);
      copyFileSync(join(tokenDir, "vocabulary.json"), join(directory, "vocabulary.json"));
    });
    if (this.mergeTable) {
      writeFileSync(
        join(directory, "merges.json"),
        JSON.stringify(this.mergeTable, null, 0),
      );
    }
  }

  /** Rebuild a tokenizer (and its merge table, if saved) from a directory. */
  static load(directory: string, command?: string[]): BoundTokenizer {
    const config = readJson<{ scheme: string; preprocess?: PreprocessConfig }>(
      join(directory, "config.json"),
    );
    const tokenizer = BoundTokenizer.fromConfig({
      scheme: config.scheme,
      preprocess: config.preprocess,
      command,
    });
    if (readdirSync(directory).includes("merges.json")) {
      tokenizer.mergeTable = readJson<MergeTable>(join(directory, "merges.json"));
    }
    return tokenizer;
  }
}
