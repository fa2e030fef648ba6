"""LETOR/SVMlight ranking data: parsing, grouping, scaling, truncation.

File format, one document per line::

    <label> qid:<id> <fid>:<value> <fid>:<value> ... # optional comment

Labels are integer relevance grades in 0..4, feature ids are 1-based, and
unmentioned features densify to 0.  Initial rankings are not part of the
format; they arrive as sidecar score files (one decimal per line, aligned
with the data lines) and are converted to per-query rank positions, or come
from a generator.  Within a group, ``initial_ranks[s][i]`` is the 1-based
position of document ``i`` under ranking source ``s`` (1 = top).

Datasets are treated as immutable after load; every transformation returns
a new :class:`Dataset`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError

__all__ = [
    "QueryGroup", "Dataset", "FeatureScaler",
    "parse_letor_line", "load_dataset", "fit_scaler", "apply_scaler",
    "truncate_per_query", "attach_initial_ranking", "ranks_from_scores",
]

LABEL_LEVELS = 5  # relevance grades 0..4


@dataclass
class QueryGroup:
    """One query's documents: features, labels, optional initial rankings."""

    qid: str
    features: np.ndarray          # [N, E0] float64
    labels: np.ndarray            # [N] int64, values in 0..4
    initial_ranks: tuple = ()     # each: [N] int64, permutation of 1..N
    line_ids: np.ndarray = None   # [N] original data-line ordinals (0-based)

    def __post_init__(self):
        n = self.features.shape[0]
        if n < 1:
            raise DataError(f"query {self.qid!r}: empty document set")
        if self.labels.shape != (n,):
            raise DataError(f"query {self.qid!r}: labels/features size mismatch")
        if self.labels.min() < 0 or self.labels.max() >= LABEL_LEVELS:
            raise DataError(
                f"query {self.qid!r}: labels must be in 0..{LABEL_LEVELS - 1}")
        for r in self.initial_ranks:
            if not _is_permutation(r, n):
                raise DataError(
                    f"query {self.qid!r}: initial ranking is not a "
                    f"permutation of 1..{n}")
        if self.line_ids is None:
            self.line_ids = np.arange(n, dtype=np.intp)

    @property
    def size(self):
        return self.features.shape[0]


def _is_permutation(r, n):
    return r.shape == (n,) and np.array_equal(np.sort(r), np.arange(1, n + 1))


@dataclass
class Dataset:
    """A split's query groups with a uniform raw feature count."""

    groups: list
    feature_count: int
    split: str = ""

    @property
    def total_docs(self):
        return sum(g.size for g in self.groups)

    def ranking_sources(self):
        return min((len(g.initial_ranks) for g in self.groups), default=0)


def parse_letor_line(line, lineno=None):
    """Split one data line into (label, qid, {fid: value}, comment)."""
    where = f" (line {lineno})" if lineno is not None else ""
    body, _, comment = line.partition("#")
    tokens = body.split()
    if len(tokens) < 2:
        raise DataError(f"malformed line{where}: expected '<label> qid:<id> ...'")
    try:
        label = int(tokens[0])
    except ValueError:
        raise DataError(f"non-integer label {tokens[0]!r}{where}") from None
    if not tokens[1].startswith("qid:") or len(tokens[1]) <= 4:
        raise DataError(f"missing qid token{where}")
    qid = tokens[1][4:]
    features = {}
    for tok in tokens[2:]:
        fid_s, sep, val_s = tok.partition(":")
        if not sep or not fid_s or not val_s:
            raise DataError(f"malformed feature token {tok!r}{where}")
        try:
            fid = int(fid_s)
            val = float(val_s)
        except ValueError:
            raise DataError(f"malformed feature token {tok!r}{where}") from None
        if fid < 1:
            raise DataError(f"feature ids are 1-based; got {fid}{where}")
        if not math.isfinite(val):
            raise DataError(f"non-finite feature value in {tok!r}{where}")
        if fid in features:
            raise DataError(f"duplicate feature id {fid}{where}")
        features[fid] = val
    return label, qid, features, comment.strip()


def load_dataset(path, expected_features=None, split=""):
    """Parse a LETOR file into per-query groups.

    Grouping is by qid value, independent of line order; groups appear in
    first-occurrence order and documents keep file order.  Feature vectors
    densify to ``expected_features`` columns when given, otherwise to the
    largest feature id seen.
    """
    rows = []  # (label, qid, features dict)
    max_fid = 0
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            label, qid, feats, _ = parse_letor_line(raw, lineno)
            if feats:
                top = max(feats)
                if expected_features is not None and top > expected_features:
                    raise DataError(
                        f"feature id {top} exceeds expected feature count "
                        f"{expected_features} (line {lineno})")
                max_fid = max(max_fid, top)
            rows.append((label, qid, feats))
    if not rows:
        raise DataError(f"{path}: no data lines")
    feature_count = expected_features if expected_features is not None else max_fid
    if feature_count < 1:
        raise DataError(f"{path}: no features found")

    by_qid = {}
    order = []
    for line_id, (label, qid, feats) in enumerate(rows):
        if qid not in by_qid:
            by_qid[qid] = []
            order.append(qid)
        by_qid[qid].append((line_id, label, feats))

    groups = []
    for qid in order:
        docs = by_qid[qid]
        n = len(docs)
        features = np.zeros((n, feature_count))
        labels = np.zeros(n, dtype=np.int64)
        line_ids = np.zeros(n, dtype=np.intp)
        for i, (line_id, label, feats) in enumerate(docs):
            labels[i] = label
            line_ids[i] = line_id
            for fid, val in feats.items():
                features[i, fid - 1] = val
        groups.append(QueryGroup(qid=qid, features=features, labels=labels,
                                 line_ids=line_ids))
    return Dataset(groups=groups, feature_count=feature_count, split=split)


@dataclass
class FeatureScaler:
    """Per-feature min-max transform fitted on the training split.

    Applied values are ``clip((x - shift) / scale, -1, 2)``; the clip only
    binds on out-of-range values from other splits, so the training split
    itself maps into [0, 1].  Degenerate (constant) features get scale 1.
    """

    shift: np.ndarray
    scale: np.ndarray

    CLIP_LO = -1.0
    CLIP_HI = 2.0


def fit_scaler(dataset):
    lo = np.full(dataset.feature_count, np.inf)
    hi = np.full(dataset.feature_count, -np.inf)
    for g in dataset.groups:
        lo = np.minimum(lo, g.features.min(axis=0))
        hi = np.maximum(hi, g.features.max(axis=0))
    scale = hi - lo
    scale[scale == 0.0] = 1.0
    return FeatureScaler(shift=lo, scale=scale)


def apply_scaler(dataset, scaler):
    if scaler.shift.shape != (dataset.feature_count,):
        raise DataError("scaler was fitted on a different feature count")
    groups = []
    for g in dataset.groups:
        scaled = np.clip((g.features - scaler.shift) / scaler.scale,
                         FeatureScaler.CLIP_LO, FeatureScaler.CLIP_HI)
        groups.append(replace(g, features=scaled))
    return Dataset(groups=groups, feature_count=dataset.feature_count,
                   split=dataset.split)


def truncate_per_query(dataset, max_docs, by=None):
    """Keep the top ``max_docs`` documents per query.

    ``by`` selects which initial ranking defines "top" (an index into
    ``initial_ranks``); None keeps file order.  Kept documents stay in file
    order and every ranking vector is renumbered to a permutation of the
    kept size.
    """
    if max_docs < 1:
        raise DataError("max_docs must be >= 1")
    if by is not None:
        for g in dataset.groups:
            if by >= len(g.initial_ranks):
                raise DataError(
                    f"query {g.qid!r} has no initial ranking #{by}")
    groups = []
    for g in dataset.groups:
        if g.size <= max_docs:
            groups.append(g)
            continue
        if by is None:
            keep = np.arange(max_docs, dtype=np.intp)
        else:
            keep = np.flatnonzero(g.initial_ranks[by] <= max_docs)
        new_ranks = tuple(_renumber(r[keep]) for r in g.initial_ranks)
        groups.append(QueryGroup(
            qid=g.qid,
            features=g.features[keep],
            labels=g.labels[keep],
            initial_ranks=new_ranks,
            line_ids=g.line_ids[keep],
        ))
    return Dataset(groups=groups, feature_count=dataset.feature_count,
                   split=dataset.split)


def _renumber(partial_ranks):
    """Map a strict subset of rank values onto 1..k preserving order."""
    order = np.argsort(partial_ranks, kind="stable")
    out = np.empty_like(partial_ranks)
    out[order] = np.arange(1, len(partial_ranks) + 1)
    return out


def ranks_from_scores(scores):
    """Rank positions (1 = top) for descending scores, stable on ties."""
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    ranks = np.empty(len(s), dtype=np.int64)
    ranks[order] = np.arange(1, len(s) + 1)
    return ranks


def attach_initial_ranking(dataset, scores_path):
    """Add one ranking source from a sidecar score file.

    The file carries one decimal per document in dataset line order; ranks
    are assigned by descending score with ties broken by file order.
    """
    scores = []
    with open(scores_path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                scores.append(float(raw))
            except ValueError:
                raise DataError(
                    f"{scores_path}: bad score on line {lineno}") from None
    scores = np.asarray(scores)
    if len(scores) != dataset.total_docs:
        raise DataError(
            f"{scores_path}: {len(scores)} scores for "
            f"{dataset.total_docs} documents")
    groups = []
    for g in dataset.groups:
        ranks = ranks_from_scores(scores[g.line_ids])
        groups.append(replace(g, initial_ranks=g.initial_ranks + (ranks,)))
    return Dataset(groups=groups, feature_count=dataset.feature_count,
                   split=dataset.split)
