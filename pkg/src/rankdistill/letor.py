"""LETOR-format ranking datasets: parsing, grouping, feature projection.

The on-disk format is the SVMlight-with-qid dialect used by the public
web-search ranking collections::

    <label> qid:<id> <fid>:<value> ... # optional comment

Labels are integer relevance grades 0..4.  Feature ids are 1-based and
strictly ascending within a line; ids absent from a line default to 0.0.
The dataset's feature dimension is the maximum feature id observed in the
file (the format has no header).  Internally feature vectors are dense
0-based numpy arrays; the 1-based convention never leaks past this module
except in feature-subset ids, which stay 1-based at every user surface.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError, ParseError

LETOR_FLOAT_FORMAT = "%.6g"  # significant digits preserved by a write/parse round trip


@dataclass(frozen=True)
class QueryDocumentInstance:
    """One judged document: grade, owning query, and dense feature vector."""

    query_id: str
    doc_ordinal: int
    label: int
    features: np.ndarray


@dataclass(frozen=True)
class QueryGroup:
    """All judged documents of one query, in file order.

    Document ordinals are the row indices of ``features``/``labels``.
    """

    query_id: str
    labels: np.ndarray    # (n,) int64
    features: np.ndarray  # (n, D) float64

    def __post_init__(self):
        if self.labels.ndim != 1 or self.features.ndim != 2:
            raise ValueError("labels must be 1-d and features 2-d")
        if self.labels.shape[0] != self.features.shape[0] or self.labels.size == 0:
            raise ValueError("labels and features must hold the same non-zero doc count")

    @property
    def n_docs(self) -> int:
        return self.labels.size

    def instances(self) -> list[QueryDocumentInstance]:
        return [
            QueryDocumentInstance(self.query_id, i, int(self.labels[i]), self.features[i])
            for i in range(self.n_docs)
        ]


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of query groups sharing one feature space."""

    groups: tuple[QueryGroup, ...]
    feature_dim: int

    def __post_init__(self):
        seen = set()
        for g in self.groups:
            if g.query_id in seen:
                raise ValueError(f"duplicate query id {g.query_id!r}")
            seen.add(g.query_id)
            if g.features.shape[1] != self.feature_dim:
                raise ValueError(
                    f"query {g.query_id!r} has {g.features.shape[1]} features, "
                    f"expected {self.feature_dim}"
                )

    @property
    def n_queries(self) -> int:
        return len(self.groups)

    @property
    def n_docs(self) -> int:
        return sum(g.n_docs for g in self.groups)

    def query_ids(self) -> list[str]:
        return [g.query_id for g in self.groups]

    def select(self, indices: Iterable[int]) -> "Dataset":
        """New dataset holding the given groups (by position), in that order."""
        return Dataset(tuple(self.groups[i] for i in indices), self.feature_dim)

    def to_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stack into ``(X, y, qid)`` arrays with contiguous query blocks."""
        X = np.vstack([g.features for g in self.groups])
        y = np.concatenate([g.labels for g in self.groups])
        qid = np.concatenate([np.full(g.n_docs, g.query_id, dtype=object) for g in self.groups])
        return X, y, qid


def contiguous_group_slices(qid: np.ndarray) -> list[tuple[str, slice]]:
    """Slices of equal-qid runs; rejects qids that reappear after a break."""
    qid = np.asarray(qid, dtype=object)
    if qid.ndim != 1 or qid.size == 0:
        raise ValueError("qid must be a non-empty 1-d vector")
    slices: list[tuple[str, slice]] = []
    seen: set = set()
    start = 0
    for i in range(1, qid.size + 1):
        if i == qid.size or qid[i] != qid[start]:
            q = qid[start]
            if q in seen:
                raise DataError(f"query id {q!r} reappears after other queries; "
                                "rows must be grouped by qid")
            seen.add(q)
            slices.append((str(q), slice(start, i)))
            start = i
    return slices


def _parse_sparse(text: str) -> tuple[int, str, np.ndarray, np.ndarray]:
    """Parse one LETOR line into (label, qid, fids, values); fids 1-based."""

    def bail(reason: str):
        raise ParseError(f"{reason} in line {text.strip()!r}")

    body = text.split("#", 1)[0].strip()
    if not body:
        bail("empty instance")
    tokens = body.split()
    if len(tokens) < 3:
        bail("expected '<label> qid:<id> <fid>:<value> ...'")
    try:
        label = int(tokens[0])
    except ValueError:
        bail(f"non-integer label {tokens[0]!r}")
    if not (0 <= label <= 4):
        bail(f"label {label} outside [0, 4]")
    if not tokens[1].startswith("qid:") or len(tokens[1]) <= 4:
        bail(f"malformed qid token {tokens[1]!r}")
    query_id = tokens[1][4:]
    fids = np.empty(len(tokens) - 2, dtype=np.int64)
    vals = np.empty(len(tokens) - 2, dtype=np.float64)
    prev = 0
    for i, tok in enumerate(tokens[2:]):
        fid_s, _, val_s = tok.partition(":")
        if not val_s:
            bail(f"malformed feature token {tok!r}")
        try:
            fid = int(fid_s)
            val = float(val_s)
        except ValueError:
            bail(f"malformed feature token {tok!r}")
        if fid < 1:
            bail(f"feature id {fid} must be >= 1")
        if fid == prev:
            bail(f"duplicate feature id {fid}")
        if fid < prev:
            bail(f"feature ids not ascending at {fid}")
        if not np.isfinite(val):
            bail(f"non-finite value for feature {fid}")
        fids[i] = fid
        vals[i] = val
        prev = fid
    return label, query_id, fids, vals


def parse_letor_line(
    text: str, feature_dim_hint: int | None = None, doc_ordinal: int = 0
) -> QueryDocumentInstance:
    """Parse one LETOR line into a dense instance.

    Without ``feature_dim_hint`` the vector length is the largest feature
    id on the line; with it, the vector is padded/validated to that length.
    """
    label, query_id, fids, vals = _parse_sparse(text)
    max_fid = int(fids[-1])
    dim = max_fid if feature_dim_hint is None else int(feature_dim_hint)
    if max_fid > dim:
        raise ParseError(
            f"feature id {max_fid} exceeds dimension hint {dim} in line {text.strip()!r}"
        )
    dense = np.zeros(dim, dtype=np.float64)
    dense[fids - 1] = vals
    return QueryDocumentInstance(query_id, doc_ordinal, label, dense)


def load_dataset(path) -> Dataset:
    """Load a LETOR file, grouping instances by query id.

    File order is preserved within each group and groups appear in order
    of first appearance.  Blank and comment-only lines are skipped.  Any
    parse failure aborts with the offending line number.
    """
    rows: list[tuple[int, str, np.ndarray, np.ndarray]] = []
    max_fid = 0
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                if not raw.split("#", 1)[0].strip():
                    continue
                try:
                    label, qid, fids, vals = _parse_sparse(raw)
                except ParseError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from None
                rows.append((label, qid, fids, vals))
                max_fid = max(max_fid, int(fids[-1]))
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not rows:
        raise DataError(f"empty dataset: {path}")

    by_query: dict[str, list[int]] = {}
    for idx, (_, qid, _, _) in enumerate(rows):
        by_query.setdefault(qid, []).append(idx)

    groups = []
    for qid, idxs in by_query.items():
        labels = np.array([rows[i][0] for i in idxs], dtype=np.int64)
        feats = np.zeros((len(idxs), max_fid), dtype=np.float64)
        for r, i in enumerate(idxs):
            _, _, fids, vals = rows[i]
            feats[r, fids - 1] = vals
        groups.append(QueryGroup(qid, labels, feats))
    return Dataset(tuple(groups), max_fid)


def format_letor_line(query_id: str, label: int, features: np.ndarray) -> str:
    parts = [str(int(label)), f"qid:{query_id}"]
    parts.extend(
        f"{fid}:{LETOR_FLOAT_FORMAT % features[fid - 1]}"
        for fid in range(1, features.size + 1)
    )
    return " ".join(parts)


def iter_letor_lines(dataset: Dataset) -> Iterator[str]:
    for group in dataset.groups:
        for i in range(group.n_docs):
            yield format_letor_line(group.query_id, int(group.labels[i]), group.features[i])


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset back out as dense LETOR text (all feature ids listed)."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in iter_letor_lines(dataset):
            fh.write(line + "\n")


@dataclass(frozen=True)
class FeatureSubset:
    """A set of 1-based feature ids, kept sorted ascending."""

    ids: tuple[int, ...]

    def __post_init__(self):
        if not self.ids:
            raise ValueError("feature subset must be non-empty")
        ordered = tuple(sorted(set(int(i) for i in self.ids)))
        if ordered[0] < 1:
            raise ValueError("feature ids are 1-based; got id < 1")
        object.__setattr__(self, "ids", ordered)

    @classmethod
    def from_iterable(cls, ids: Iterable[int]) -> "FeatureSubset":
        return cls(tuple(ids))

    @classmethod
    def from_file(cls, path) -> "FeatureSubset":
        """Read one feature id per line; ``#`` starts a comment."""
        ids = []
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for lineno, raw in enumerate(fh, start=1):
                    body = raw.split("#", 1)[0].strip()
                    if not body:
                        continue
                    try:
                        ids.append(int(body))
                    except ValueError:
                        raise ParseError(
                            f"{path}:{lineno}: feature id expected, got {body!r}"
                        ) from None
        except OSError as exc:
            raise DataError(f"cannot read feature subset {path}: {exc}") from exc
        if not ids:
            raise DataError(f"empty feature subset: {path}")
        return cls(tuple(ids))

    def __len__(self) -> int:
        return len(self.ids)

    def validate_for(self, feature_dim: int) -> None:
        if self.ids[-1] > feature_dim:
            raise DataError(
                f"feature id {self.ids[-1]} out of range for dimension {feature_dim}"
            )

    def indices0(self) -> np.ndarray:
        """0-based column indices, ascending."""
        return np.asarray(self.ids, dtype=np.intp) - 1


def project_features(dataset: Dataset, subset: FeatureSubset) -> Dataset:
    """Re-index every feature vector to the subset, original id order kept."""
    subset.validate_for(dataset.feature_dim)
    cols = subset.indices0()
    groups = tuple(
        QueryGroup(g.query_id, g.labels, g.features[:, cols]) for g in dataset.groups
    )
    return Dataset(groups, len(subset))
