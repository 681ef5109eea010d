"""Small builders shared across test modules."""

from __future__ import annotations

import numpy as np

from scorefuse.tables import (
    AlignedScores,
    ComparisonPair,
    ScoreTable,
    SettingDescriptor,
)

SETTING = SettingDescriptor("cam0", 1.0, "unit")


def pair(i: int, mated: bool, tag: str = "", setting: SettingDescriptor = SETTING) -> ComparisonPair:
    subject = f"{tag}s{i:05d}"
    return ComparisonPair(
        probe_id=f"{tag}p{i:05d}",
        reference_id=f"{tag}r{i:05d}",
        probe_subject=subject,
        reference_subject=subject if mated else f"{tag}q{i:05d}",
        mated=mated,
        setting=setting,
    )


def table(
    mated_scores,
    nonmated_scores,
    matcher_id: str = "m",
    declared=(0.0, 1.0),
    tag: str = "",
    setting: SettingDescriptor = SETTING,
) -> ScoreTable:
    records = [
        pair(i, True, tag, setting).with_score(float(s)) for i, s in enumerate(mated_scores)
    ]
    offset = len(records)
    records += [
        pair(offset + i, False, tag, setting).with_score(float(s))
        for i, s in enumerate(nonmated_scores)
    ]
    return ScoreTable(matcher_id, declared, tuple(records))


def aligned(columns: dict[str, list[float]], mated_flags, tag: str = "", setting=SETTING) -> AlignedScores:
    """Aligned scores from {matcher_id: column} over shared pairs."""
    ids = tuple(columns)
    matrix = np.column_stack([np.asarray(columns[m], dtype=np.float64) for m in ids])
    pairs = tuple(pair(i, bool(f), tag, setting) for i, f in enumerate(mated_flags))
    return AlignedScores(ids, pairs, matrix)
