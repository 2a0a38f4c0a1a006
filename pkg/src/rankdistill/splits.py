"""Nested train/validation/test split construction over query groups.

Queries are shuffled once by a seeded permutation (NumPy ``default_rng``,
PCG64, via Fisher-Yates ``permutation``) and the shuffled order is carved
into four disjoint regions: base-ranker training, the interpreter pool,
validation, and test.  Interpreter split ``i`` takes the first
``sizes[i]`` queries of the pool, which makes every smaller split a strict
subset of every larger one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, SizingError
from .letor import Dataset


@dataclass(frozen=True)
class SplitPlan:
    base_train_size: int
    interpreter_split_sizes: tuple[int, ...]
    validation_size: int
    test_size: int
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.interpreter_split_sizes)
        object.__setattr__(self, "interpreter_split_sizes", sizes)
        if not sizes:
            raise ValueError("at least one interpreter split size is required")
        if any(s < 1 for s in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("interpreter split sizes must be strictly ascending and >= 1")
        for name in ("base_train_size", "validation_size", "test_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def required_queries(self) -> int:
        return (
            self.base_train_size
            + max(self.interpreter_split_sizes)
            + self.validation_size
            + self.test_size
        )


@dataclass(frozen=True)
class Splits:
    base_train: Dataset
    interpreter_splits: tuple[Dataset, ...]
    validation: Dataset
    test: Dataset

    def regions(self) -> list[tuple[str, Dataset]]:
        """(name, dataset) pairs for every region, split names zero-padded."""
        out = [("base_train", self.base_train)]
        out.extend(
            (f"split_{ds.n_queries:05d}", ds) for ds in self.interpreter_splits
        )
        out.append(("validation", self.validation))
        out.append(("test", self.test))
        return out


def make_splits(dataset: Dataset, plan: SplitPlan) -> Splits:
    """Carve the dataset into the plan's regions; pure in (dataset, plan)."""
    n = dataset.n_queries
    if plan.required_queries > n:
        raise SizingError(
            f"split plan needs {plan.required_queries} queries "
            f"but the dataset has only {n}"
        )
    perm = np.random.default_rng(plan.seed).permutation(n)
    pool_size = max(plan.interpreter_split_sizes)
    cursor = 0

    def take(count: int) -> Dataset:
        nonlocal cursor
        region = dataset.select(perm[cursor : cursor + count])
        cursor += count
        return region

    base_train = take(plan.base_train_size)
    pool = take(pool_size)
    validation = take(plan.validation_size)
    test = take(plan.test_size)
    interpreter = tuple(pool.select(range(s)) for s in plan.interpreter_split_sizes)
    return Splits(base_train, interpreter, validation, test)


def write_split_manifest(splits: Splits, path) -> None:
    """Audit file: one ``<region>\\t<query_id>`` line per assigned query."""
    with open(path, "w", encoding="utf-8") as fh:
        for name, region in splits.regions():
            for qid in region.query_ids():
                fh.write(f"{name}\t{qid}\n")


def read_split_manifest(path) -> dict[str, list[str]]:
    regions: dict[str, list[str]] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                name, sep, qid = line.partition("\t")
                if not sep or not qid:
                    raise DataError(f"{path}:{lineno}: expected '<region>\\t<query_id>'")
                regions.setdefault(name, []).append(qid)
    except OSError as exc:
        raise DataError(f"cannot read split manifest {path}: {exc}") from exc
    return regions
