"""Canonical data model for labeled comparison scores.

A comparison pairs one probe with one reference; ``mated`` records whether
the two belong to the same subject. One :class:`ScoreTable` holds the scores
of a single matcher; :func:`align_tables` joins several matchers into one
score matrix keyed by (probe_id, reference_id).

Score CSV format (UTF-8, header required, one matcher per file)::

    matcher_id,probe_id,reference_id,probe_subject,reference_subject,mated,camera_id,distance_m,dataset_id,score

``mated`` is 0 or 1 and must agree with subject equality; floats are written
with ``repr`` so a canonical file round-trips byte-identically.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    ConsistencyError,
    ContractError,
    DuplicatePairError,
    ParseError,
    PartitionError,
    RangeViolationError,
)
from .rng import SplitMix64, substream_seed

SCORE_CSV_HEADER = (
    "matcher_id",
    "probe_id",
    "reference_id",
    "probe_subject",
    "reference_subject",
    "mated",
    "camera_id",
    "distance_m",
    "dataset_id",
    "score",
)


@dataclass(frozen=True)
class SettingDescriptor:
    """One acquisition configuration: camera, subject distance, dataset."""

    camera_id: str
    distance_m: float
    dataset_id: str

    def __post_init__(self):
        if not (self.distance_m > 0):
            raise ContractError(f"distance_m must be positive, got {self.distance_m}")

    def key(self) -> str:
        """Stable short label, e.g. for file names: dataset-camera-distance."""
        return f"{self.dataset_id}-{self.camera_id}-{self.distance_m:g}"


@dataclass(frozen=True)
class ComparisonPair:
    """A probe/reference pairing with ground truth and setting metadata."""

    probe_id: str
    reference_id: str
    probe_subject: str
    reference_subject: str
    mated: bool
    setting: SettingDescriptor

    def __post_init__(self):
        same = self.probe_subject == self.reference_subject
        if self.mated != same:
            raise ContractError(
                f"mated={self.mated} inconsistent with subjects "
                f"{self.probe_subject!r} vs {self.reference_subject!r}"
            )

    @property
    def key(self) -> tuple[str, str]:
        return (self.probe_id, self.reference_id)

    def with_score(self, score: float) -> "ComparisonRecord":
        return ComparisonRecord(
            probe_id=self.probe_id,
            reference_id=self.reference_id,
            probe_subject=self.probe_subject,
            reference_subject=self.reference_subject,
            mated=self.mated,
            setting=self.setting,
            score=score,
        )


@dataclass(frozen=True)
class ComparisonRecord(ComparisonPair):
    """A comparison pair plus one matcher's score."""

    score: float = math.nan

    def __post_init__(self):
        super().__post_init__()
        if not math.isfinite(self.score):
            raise ContractError(f"score must be finite, got {self.score}")

    def pair(self) -> ComparisonPair:
        return ComparisonPair(
            self.probe_id,
            self.reference_id,
            self.probe_subject,
            self.reference_subject,
            self.mated,
            self.setting,
        )


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """All comparison scores of one matcher, with its declared score range."""

    matcher_id: str
    declared_range: tuple[float, float]
    records: tuple[ComparisonRecord, ...]

    def __post_init__(self):
        lo, hi = self.declared_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise ContractError(f"invalid declared_range [{lo}, {hi}]")
        seen = set()
        for rec in self.records:
            if not (lo <= rec.score <= hi):
                raise RangeViolationError(
                    f"score {rec.score!r} for pair {rec.key} outside "
                    f"declared range [{lo}, {hi}]"
                )
            if rec.key in seen:
                raise DuplicatePairError(f"duplicate comparison pair {rec.key}")
            seen.add(rec.key)

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def scores(self) -> np.ndarray:
        arr = np.array([r.score for r in self.records], dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def mated_mask(self) -> np.ndarray:
        arr = np.array([r.mated for r in self.records], dtype=bool)
        arr.setflags(write=False)
        return arr

    def n_mated(self) -> int:
        return int(self.mated_mask.sum())

    def n_nonmated(self) -> int:
        return len(self.records) - self.n_mated()


@dataclass(frozen=True, eq=False)
class AlignedScores:
    """Scores of N matchers joined on (probe_id, reference_id).

    ``matrix[i, j]`` is matcher ``matcher_ids[j]``'s score for ``pairs[i]``;
    every entry lies in [0, 1].
    """

    matcher_ids: tuple[str, ...]
    pairs: tuple[ComparisonPair, ...]
    matrix: np.ndarray

    def __post_init__(self):
        n_ids = len(self.matcher_ids)
        if n_ids < 1:
            raise ContractError("need at least one matcher")
        if len(set(self.matcher_ids)) != n_ids:
            raise ContractError(f"matcher ids not distinct: {self.matcher_ids}")
        if len(self.pairs) < 1:
            raise ContractError("aligned scores need at least one row")
        mat = np.asarray(self.matrix, dtype=np.float64)
        if mat.shape != (len(self.pairs), n_ids):
            raise ContractError(
                f"matrix shape {mat.shape} does not match "
                f"{len(self.pairs)} pairs x {n_ids} matchers"
            )
        if not np.all(np.isfinite(mat)):
            raise ContractError("aligned scores must be finite")
        if mat.min() < 0.0 or mat.max() > 1.0:
            raise ContractError("aligned scores must lie in [0, 1]")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def __len__(self) -> int:
        return len(self.pairs)

    @cached_property
    def mated_mask(self) -> np.ndarray:
        arr = np.array([p.mated for p in self.pairs], dtype=bool)
        arr.setflags(write=False)
        return arr

    def column(self, matcher_id: str) -> np.ndarray:
        try:
            j = self.matcher_ids.index(matcher_id)
        except ValueError:
            raise ContractError(f"unknown matcher {matcher_id!r}") from None
        return self.matrix[:, j]

    def select(self, matcher_ids: list[str] | tuple[str, ...]) -> "AlignedScores":
        """Sub-view with the given matchers, in the given order."""
        cols = [self.matcher_ids.index(m) if m in self.matcher_ids else -1 for m in matcher_ids]
        missing = [m for m, c in zip(matcher_ids, cols) if c < 0]
        if missing:
            raise ContractError(f"matchers not present in aligned scores: {missing}")
        return AlignedScores(tuple(matcher_ids), self.pairs, self.matrix[:, cols])

    def keys(self) -> set[tuple[str, str]]:
        return {p.key for p in self.pairs}


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint subject partitions for train / validation / test."""

    train_subjects: frozenset[str]
    validation_subjects: frozenset[str]
    test_subjects: frozenset[str]
    seed: int

    def __post_init__(self):
        a, b, c = self.train_subjects, self.validation_subjects, self.test_subjects
        if a & b or a & c or b & c:
            raise ContractError("split partitions must be pairwise disjoint")


def _parse_float(text: str, what: str, path, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: non-numeric {what} {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"{path}:{lineno}: non-finite {what} {text!r}")
    return value


def load_score_table(path, declared_range: tuple[float, float]) -> ScoreTable:
    """Parse one matcher's score CSV; row order is preserved.

    Raises :class:`ParseError` (with the offending line number) for malformed
    rows, :class:`RangeViolationError` for scores outside ``declared_range``,
    and :class:`DuplicatePairError` for repeated (probe_id, reference_id).
    """
    path = Path(path)
    lo, hi = declared_range
    records: list[ComparisonRecord] = []
    matcher_id: str | None = None
    seen: dict[tuple[str, str], int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(SCORE_CSV_HEADER):
            raise ParseError(f"{path}:1: bad header, expected {','.join(SCORE_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(SCORE_CSV_HEADER):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(SCORE_CSV_HEADER)} columns, got {len(row)}"
                )
            mid, probe, ref, psub, rsub, mated_s, cam, dist_s, dset, score_s = row
            if matcher_id is None:
                matcher_id = mid
            elif mid != matcher_id:
                raise ParseError(
                    f"{path}:{lineno}: matcher_id {mid!r} differs from {matcher_id!r} "
                    "(one matcher per file)"
                )
            if mated_s not in ("0", "1"):
                raise ParseError(f"{path}:{lineno}: mated must be 0 or 1, got {mated_s!r}")
            dist = _parse_float(dist_s, "distance_m", path, lineno)
            score = _parse_float(score_s, "score", path, lineno)
            if not (lo <= score <= hi):
                raise RangeViolationError(
                    f"{path}:{lineno}: score {score_s} outside declared range [{lo}, {hi}]"
                )
            key = (probe, ref)
            if key in seen:
                raise DuplicatePairError(
                    f"{path}:{lineno}: duplicate pair {key}, first seen on line {seen[key]}"
                )
            seen[key] = lineno
            try:
                rec = ComparisonRecord(
                    probe_id=probe,
                    reference_id=ref,
                    probe_subject=psub,
                    reference_subject=rsub,
                    mated=(mated_s == "1"),
                    setting=SettingDescriptor(cam, dist, dset),
                    score=score,
                )
            except ContractError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            records.append(rec)
    if matcher_id is None:
        matcher_id = path.stem
    return ScoreTable(matcher_id, (lo, hi), tuple(records))


PAIRS_CSV_HEADER = (
    "probe_id",
    "reference_id",
    "probe_subject",
    "reference_subject",
    "mated",
    "camera_id",
    "distance_m",
    "dataset_id",
)


def load_pairs(path) -> tuple[ComparisonPair, ...]:
    """Parse a comparison-pair CSV (score CSV columns minus matcher/score)."""
    path = Path(path)
    pairs: list[ComparisonPair] = []
    seen: dict[tuple[str, str], int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(PAIRS_CSV_HEADER):
            raise ParseError(f"{path}:1: bad header, expected {','.join(PAIRS_CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(PAIRS_CSV_HEADER):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(PAIRS_CSV_HEADER)} columns, got {len(row)}"
                )
            probe, ref, psub, rsub, mated_s, cam, dist_s, dset = row
            if mated_s not in ("0", "1"):
                raise ParseError(f"{path}:{lineno}: mated must be 0 or 1, got {mated_s!r}")
            dist = _parse_float(dist_s, "distance_m", path, lineno)
            key = (probe, ref)
            if key in seen:
                raise DuplicatePairError(
                    f"{path}:{lineno}: duplicate pair {key}, first seen on line {seen[key]}"
                )
            seen[key] = lineno
            try:
                pairs.append(
                    ComparisonPair(
                        probe_id=probe,
                        reference_id=ref,
                        probe_subject=psub,
                        reference_subject=rsub,
                        mated=(mated_s == "1"),
                        setting=SettingDescriptor(cam, dist, dset),
                    )
                )
            except ContractError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    return tuple(pairs)


def score_table_csv_text(table: ScoreTable) -> str:
    """The canonical CSV form (repr floats, LF newlines)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCORE_CSV_HEADER)
    for r in table.records:
        writer.writerow(
            (
                table.matcher_id,
                r.probe_id,
                r.reference_id,
                r.probe_subject,
                r.reference_subject,
                "1" if r.mated else "0",
                r.setting.camera_id,
                repr(r.setting.distance_m),
                r.setting.dataset_id,
                repr(r.score),
            )
        )
    return buf.getvalue()


def write_score_table(table: ScoreTable, path) -> None:
    Path(path).write_text(score_table_csv_text(table), encoding="utf-8", newline="")


def normalize_scores(table: ScoreTable, method: str = "affine_to_unit") -> ScoreTable:
    """Map a table's scores into [0, 1].

    ``affine_to_unit`` applies s -> (s - lo) / (hi - lo) using the declared
    range (order-preserving, so rank metrics are unaffected); ``identity``
    asserts the table is already declared [0, 1] and returns it unchanged.
    """
    lo, hi = table.declared_range
    if method == "identity":
        if (lo, hi) != (0.0, 1.0):
            raise ContractError(
                f"identity normalization requires declared range [0, 1], got [{lo}, {hi}]"
            )
        return table
    if method != "affine_to_unit":
        raise ContractError(f"unknown normalization method {method!r}")
    if not hi > lo:
        raise ContractError(f"affine_to_unit needs hi > lo, got [{lo}, {hi}]")
    span = hi - lo
    records = tuple(
        ComparisonRecord(
            probe_id=r.probe_id,
            reference_id=r.reference_id,
            probe_subject=r.probe_subject,
            reference_subject=r.reference_subject,
            mated=r.mated,
            setting=r.setting,
            score=(r.score - lo) / span,
        )
        for r in table.records
    )
    return ScoreTable(table.matcher_id, (0.0, 1.0), records)


def align_tables(tables: list[ScoreTable]) -> AlignedScores:
    """Join matcher tables on (probe_id, reference_id).

    Every table must be declared [0, 1] and nonempty, and all tables must
    cover exactly the same keys; a key missing anywhere is an
    :class:`AlignmentError` (silent inner joins would corrupt protocol
    comparisons). Ground truth and metadata must agree per key. Row order
    follows the first table; matcher order follows the input order.
    """
    if not tables:
        raise ContractError("align_tables needs at least one table")
    ids = [t.matcher_id for t in tables]
    if len(set(ids)) != len(ids):
        raise ContractError(f"duplicate matcher ids: {ids}")
    for t in tables:
        if t.declared_range != (0.0, 1.0):
            raise ContractError(
                f"matcher {t.matcher_id!r} declared range {t.declared_range} "
                "is not [0, 1]; normalize first"
            )
        if len(t) == 0:
            raise ContractError(f"matcher {t.matcher_id!r} table is empty")

    maps = [{r.key: r for r in t.records} for t in tables]
    all_keys = set().union(*(m.keys() for m in maps))
    for t, m in zip(tables, maps):
        missing = sorted(all_keys - m.keys())
        if missing:
            shown = ", ".join(map(str, missing[:5]))
            more = "" if len(missing) <= 5 else f" (+{len(missing) - 5} more)"
            raise AlignmentError(
                f"matcher {t.matcher_id!r} is missing {len(missing)} pair(s): {shown}{more}"
            )

    base = tables[0]
    pairs = []
    matrix = np.empty((len(base), len(tables)), dtype=np.float64)
    for i, rec in enumerate(base.records):
        for j, m in enumerate(maps):
            other = m[rec.key]
            if other.mated != rec.mated:
                raise ConsistencyError(f"conflicting mated flags for pair {rec.key}")
            if other.setting != rec.setting:
                raise ConsistencyError(f"conflicting settings for pair {rec.key}")
            if (other.probe_subject, other.reference_subject) != (
                rec.probe_subject,
                rec.reference_subject,
            ):
                raise ConsistencyError(f"conflicting subjects for pair {rec.key}")
            matrix[i, j] = other.score
        pairs.append(rec.pair())
    return AlignedScores(tuple(ids), tuple(pairs), matrix)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_subjects(
    subjects: set[str],
    test_fraction: float,
    validation_fraction_of_remainder: float,
    seed: int,
) -> SplitSpec:
    """Deterministically partition subjects into train/validation/test.

    Subjects are sorted lexicographically, shuffled with a seeded SplitMix64
    Fisher-Yates pass, then cut: the first round-half-up(test_fraction * n)
    become test, the next round-half-up share of the remainder validation,
    the rest train. Same inputs and seed always give the same split.
    """
    if not (0.0 < test_fraction < 1.0 and 0.0 < validation_fraction_of_remainder < 1.0):
        raise ContractError("fractions must lie strictly between 0 and 1")
    n = len(subjects)
    if n < 3:
        raise ContractError(f"need at least 3 subjects, got {n}")
    ordered = sorted(subjects)
    SplitMix64(substream_seed(seed, "subject-split")).shuffle(ordered)

    n_test = _round_half_up(test_fraction * n)
    if n_test == 0 or n_test >= n:
        raise PartitionError(f"test_fraction {test_fraction} empties a partition for n={n}")
    remainder = n - n_test
    n_val = _round_half_up(validation_fraction_of_remainder * remainder)
    if n_val == 0 or n_val >= remainder:
        raise PartitionError(
            f"validation fraction {validation_fraction_of_remainder} empties a partition "
            f"for remainder={remainder}"
        )
    test = frozenset(ordered[:n_test])
    validation = frozenset(ordered[n_test : n_test + n_val])
    train = frozenset(ordered[n_test + n_val :])
    return SplitSpec(train, validation, test, seed)
