"""Corpus management: validity filtering, deduplication by exact
maximum-weight bipartite matching, and deterministic dataset splits.

Deduplication consumes a generic weighted edge list between file ids and
external ids; the matching maximizes total weight exactly and, among
optimal matchings, returns the lexicographically smallest pair list so
results are stable across runs and platforms.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .score import Score
from .smf import SmfParseError, parse_smf

REJECT_CORRUPT = "corrupt"
REJECT_TIME_SIGNATURE = "time_signature"
REJECT_TRACK_COUNT = "track_count"


@dataclass(frozen=True)
class FilterConfig:
    """Validity predicate: parseable, matching signature, enough tracks.

    ``time_signature`` uses ``*`` as a wildcard on either side, e.g.
    ``"4/*"`` accepts any signature with numerator 4.
    """

    time_signature: str = "4/*"
    min_tracks: int = 3

    def signature_matches(self, numerator: int, denominator: int) -> bool:
        num_text, _, den_text = self.time_signature.partition("/")
        if num_text != "*" and int(num_text) != numerator:
            return False
        if den_text not in ("", "*") and int(den_text) != denominator:
            return False
        return True


@dataclass
class FilterResult:
    accepted: list[str] = field(default_factory=list)
    rejected: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"accepted": self.accepted, "rejected": self.rejected}


def filter_valid(
    files: Iterable[tuple[str, bytes]] | Iterable[Path],
    config: FilterConfig | None = None,
    loader: Callable[[bytes], Score] = parse_smf,
) -> FilterResult:
    """Partition files into accepted and rejected-with-reason.

    ``files`` is either ``(name, bytes)`` pairs or paths. A file that
    fails to parse counts as corrupt; rejections are data, not errors.
    """
    config = config or FilterConfig()
    result = FilterResult()
    for item in files:
        if isinstance(item, (str, Path)):
            name = str(item)
            try:
                data = Path(item).read_bytes()
            except OSError:
                result.rejected[name] = REJECT_CORRUPT
                continue
        else:
            name, data = item
        try:
            score = loader(data)
        except SmfParseError:
            result.rejected[name] = REJECT_CORRUPT
            continue
        if not all(
            config.signature_matches(num, den)
            for _, num, den in score.time_signatures
        ):
            result.rejected[name] = REJECT_TIME_SIGNATURE
            continue
        if len(score.tracks) < config.min_tracks:
            result.rejected[name] = REJECT_TRACK_COUNT
            continue
        result.accepted.append(name)
    return result


@dataclass
class MatchGraph:
    """Weighted bipartite graph between file ids and external ids."""

    edges: list[tuple[str, str, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen = set()
        for left, right, weight in self.edges:
            if weight <= 0:
                raise ValueError(f"edge ({left}, {right}) has non-positive weight")
            if (left, right) in seen:
                raise ValueError(f"duplicate edge ({left}, {right})")
            seen.add((left, right))

    def add_edge(self, left: str, right: str, weight: float) -> None:
        self.edges.append((left, right, weight))
        self.__post_init__()

    @classmethod
    def from_tsv(cls, path) -> "MatchGraph":
        edges = []
        for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{line_no}: expected left<TAB>right<TAB>weight")
            edges.append((parts[0], parts[1], float(parts[2])))
        return cls(edges)

    def to_tsv(self, path) -> None:
        lines = [f"{l}\t{r}\t{w}" for l, r, w in self.edges]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _optimum_weight(
    weights: dict[tuple[int, int], float], n_left: int, n_right: int
) -> float:
    """Exact matching optimum via a zero-padded assignment problem."""
    if not weights:
        return 0.0
    matrix = np.zeros((n_left, n_right))
    for (i, j), w in weights.items():
        matrix[i, j] = w
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    return float(matrix[rows, cols].sum())


def max_weight_matching(graph: MatchGraph) -> list[tuple[str, str]]:
    """Exact maximum-weight matching of the graph.

    Returns the matched pairs sorted ascending; among matchings with the
    optimal total weight, the lexicographically smallest pair list is
    chosen. Every node appears in at most one pair.

    The tie-break fixes pairs greedily, re-solving the assignment
    problem on the residual graph per candidate edge, so it costs up to
    one assignment solve per edge; intended for desk-scale graphs.
    """
    if not graph.edges:
        return []
    lefts = sorted({e[0] for e in graph.edges})
    rights = sorted({e[1] for e in graph.edges})
    left_index = {name: i for i, name in enumerate(lefts)}
    right_index = {name: i for i, name in enumerate(rights)}
    weights = {
        (left_index[l], right_index[r]): w for l, r, w in graph.edges
    }
    total = _optimum_weight(weights, len(lefts), len(rights))

    def close(a: float, b: float) -> bool:
        return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9)

    chosen: list[tuple[int, int]] = []
    chosen_weight = 0.0
    used_left: set[int] = set()
    used_right: set[int] = set()
    candidates = sorted(weights)  # lexicographic over (left, right) indices
    for i, j in candidates:
        if i in used_left or j in used_right:
            continue
        if close(chosen_weight, total):
            break
        remaining = {
            (a, b): w
            for (a, b), w in weights.items()
            if a not in used_left and b not in used_right and (a, b) != (i, j) and a != i and b != j
        }
        rest = _optimum_weight(remaining, len(lefts), len(rights))
        if close(chosen_weight + weights[i, j] + rest, total):
            chosen.append((i, j))
            chosen_weight += weights[i, j]
            used_left.add(i)
            used_right.add(j)
    return [(lefts[i], rights[j]) for i, j in chosen]


@dataclass(frozen=True)
class SplitSpec:
    """Validation/test fractions and the shuffle seed."""

    valid_fraction: float = 0.10
    test_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.valid_fraction < 1 or not 0 <= self.test_fraction < 1:
            raise ValueError("fractions must lie in [0, 1)")
        if self.valid_fraction + self.test_fraction >= 1:
            raise ValueError("validation and test fractions must leave room for training")


def split_corpus(
    file_ids: list[str], spec: SplitSpec
) -> tuple[list[str], list[str], list[str]]:
    """Deterministic train/valid/test partition of ``file_ids``.

    Subset sizes are the rounded fractions (ties up); the same spec on
    the same list always yields the same split.
    """
    n = len(file_ids)
    if n < 3 and spec.valid_fraction > 0 and spec.test_fraction > 0:
        raise ValueError("need at least three files for a three-way split")
    shuffled = list(file_ids)
    random.Random(spec.seed).shuffle(shuffled)
    n_valid = int(n * spec.valid_fraction + 0.5)
    n_test = int(n * spec.test_fraction + 0.5)
    valid = shuffled[:n_valid]
    test = shuffled[n_valid : n_valid + n_test]
    train = shuffled[n_valid + n_test :]
    return train, valid, test


def split_manifest(
    train: list[str], valid: list[str], test: list[str], seed: int
) -> dict:
    return {"train": train, "valid": valid, "test": test, "seed": seed}


def save_split(path, train, valid, test, seed) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(split_manifest(train, valid, test, seed), handle, indent=1)
        handle.write("\n")
