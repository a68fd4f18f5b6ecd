"""Symbolic-music tokenization engine.

MIDI files in, token sequences out, under several grammars; BPE
compression over those sequences; syntax validation with rule-based
masking; corpus management; and embedding-geometry analysis.
"""

from .bpe import (
    BpeStats,
    MergeTable,
    apply_bpe,
    extended_vocabulary,
    learn_bpe,
    merge_stats,
    undo_bpe,
)
from .corpus import (
    FilterConfig,
    FilterResult,
    MatchGraph,
    SplitSpec,
    filter_valid,
    max_weight_matching,
    split_corpus,
)
from .geometry import (
    EmbeddingMatrix,
    GeometryReport,
    geometry_report,
    isoscore,
    load_embeddings,
    pca_intrinsic_dim,
    save_embeddings,
    singular_spectrum,
)
from .grammar import ErrorCategory, GrammarState, applicable_categories, valid_next_ids, valid_next_types
from .metrics import (
    CorpusStats,
    TSEReport,
    TimingProfile,
    aggregate_tse,
    corpus_stats,
    timing_profile,
    tokens_per_beat,
    tse,
    vocab_coverage,
)
from .score import (
    DRUM_PROGRAM,
    Note,
    PreprocessConfig,
    Score,
    Track,
    notes_equal,
    preprocess,
    simultaneous_note_ratio,
)
from .smf import SmfParseError, decode_vlq, encode_vlq, parse_smf, write_smf
from .tokenizer import (
    DecodeDiagnostics,
    TokenSequence,
    detokenize,
    load_sequences,
    save_sequences,
    tokenize,
)
from .vocab import (
    BOS_ID,
    EOS_ID,
    MASK_ID,
    PAD_ID,
    SEP_ID,
    SchemeId,
    SchemeKind,
    TokenDescriptor,
    TokenType,
    Vocabulary,
    build_vocabulary,
)

__version__ = "0.1.0"
