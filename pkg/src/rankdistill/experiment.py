"""End-to-end experiment runner.

One run: load a LETOR dataset, carve nested splits, train the base
ranker, relabel the interpreter pool and validation queries from its
rankings, train one interpreter per (split size, feature regime), and
measure fidelity of every interpreter on the held-out test queries.
Everything an auditor needs lands in the run directory::

    report.csv / report.md   fidelity table (interpreter rows + base row)
    per_query.csv            per-query tau / tau@k behind every grid cell
    manifest.txt             config echo, digests, timings
    models/*.model           base + interpreter models
    splits/manifest.txt      region -> query id assignment
    secondary/*              relabeled datasets and original-label sidecars

Identical config and seed reproduce byte-identical reports and models.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from joblib import Parallel, delayed

from ._util import sha256_file, sha256_text
from ._version import __version__
from .distill import (
    REGIME_ALL,
    REGIME_SUBSET,
    InterpreterSpec,
    SecondaryLabelConfig,
    build_secondary_dataset,
    fidelity,
    ranking_quality,
    train_interpreter,
    write_sidecar,
)
from .errors import ConfigError, DataError
from .lambdamart import LambdaMARTRanker
from .letor import Dataset, FeatureSubset, load_dataset, save_dataset
from .model_io import save_model
from .ranknet import RankNetRanker
from .splits import SplitPlan, Splits, make_splits, read_split_manifest, write_split_manifest

logger = logging.getLogger(__name__)

LISTWISE = "listwise"
PAIRWISE = "pairwise"

_COMMON_TREE_PARAMS = {
    "n_estimators": 1000,
    "learning_rate": 0.1,
    "max_leaves": 10,
    "min_samples_leaf": 1,
    "ndcg_cutoff": 10,
    "sigma": 1.0,
    "early_stopping_rounds": None,
}

_PAIRWISE_PARAMS = {
    "hidden_size": 10,
    "n_epochs": 100,
    "learning_rate": 5e-5,
    "sigma": 1.0,
    "max_pairs_per_query": 1000,
    "ndcg_cutoff": 10,
    "early_stopping_rounds": None,
}

DEFAULT_CONFIG = {
    "dataset": None,
    "seed": 42,
    "output": "rankdistill-run",
    "threads": 1,
    "base_ranker": {"kind": LISTWISE},
    "interpreter": {},
    "split_plan": {
        "base_train": 5000,
        "interpreter_splits": [100, 200, 300, 400, 500, 1000, 2500, 5000, 7500, 15000],
        "validation": 2500,
        "test": 2500,
    },
    "secondary_labels": {"bucket_size": 5, "top_label": 4, "floor_label": 0},
    "feature_subset": None,
    "regimes": [REGIME_ALL, REGIME_SUBSET],
    "metrics": {"k": 10, "precision_threshold": 1, "tau_topk_mode": "base"},
}

_SECTION_KEYS = {
    "base_ranker": {"kind"} | set(_COMMON_TREE_PARAMS) | set(_PAIRWISE_PARAMS),
    "interpreter": set(_COMMON_TREE_PARAMS),
    "split_plan": {"base_train", "interpreter_splits", "validation", "test"},
    "secondary_labels": {"bucket_size", "top_label", "floor_label"},
    "metrics": {"k", "precision_threshold", "tau_topk_mode"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str
    seed: int
    output: str
    threads: int
    base_kind: str
    base_params: dict
    interpreter_params: dict
    plan: SplitPlan
    secondary: SecondaryLabelConfig
    feature_subset_path: str | None
    regimes: tuple[str, ...]
    k: int
    precision_threshold: int
    tau_topk_mode: str

    def flatten(self) -> dict[str, str]:
        """Dotted key/value view for the manifest's config echo."""
        flat: dict[str, str] = {
            "dataset": self.dataset,
            "seed": self.seed,
            "output": self.output,
            "threads": self.threads,
            "base_ranker.kind": self.base_kind,
            "feature_subset": self.feature_subset_path,
            "regimes": ",".join(self.regimes),
            "metrics.k": self.k,
            "metrics.precision_threshold": self.precision_threshold,
            "metrics.tau_topk_mode": self.tau_topk_mode,
            "split_plan.base_train": self.plan.base_train_size,
            "split_plan.interpreter_splits": ",".join(
                str(s) for s in self.plan.interpreter_split_sizes
            ),
            "split_plan.validation": self.plan.validation_size,
            "split_plan.test": self.plan.test_size,
            "secondary_labels.bucket_size": self.secondary.bucket_size,
            "secondary_labels.top_label": self.secondary.top_label,
            "secondary_labels.floor_label": self.secondary.floor_label,
        }
        for key, value in sorted(self.base_params.items()):
            flat[f"base_ranker.{key}"] = value
        for key, value in sorted(self.interpreter_params.items()):
            flat[f"interpreter.{key}"] = value
        return {k: "" if v is None else str(v) for k, v in flat.items()}


def _merge_section(name: str, user: dict) -> dict:
    if not isinstance(user, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    unknown = set(user) - _SECTION_KEYS[name]
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(sorted(unknown))}")
    return user


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve a YAML config file plus overrides against full defaults."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    unknown = set(raw) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = {key: raw.get(key, default) for key, default in DEFAULT_CONFIG.items()}
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    return _resolve_config(merged, config_dir=Path(path).parent if path else Path("."))


def _resolve_config(merged: dict, config_dir: Path) -> ExperimentConfig:
    if not merged.get("dataset"):
        raise ConfigError("config must name a dataset file")

    def resolve_path(p):
        p = Path(p)
        return str(p if p.is_absolute() else config_dir / p)

    dataset = resolve_path(merged["dataset"])
    if not Path(dataset).exists():
        raise ConfigError(f"dataset path does not exist: {dataset}")

    base_raw = dict(_merge_section("base_ranker", merged.get("base_ranker") or {}))
    kind = base_raw.pop("kind", LISTWISE)
    if kind not in (LISTWISE, PAIRWISE):
        raise ConfigError(f"base_ranker.kind must be '{LISTWISE}' or '{PAIRWISE}'")
    defaults = _COMMON_TREE_PARAMS if kind == LISTWISE else _PAIRWISE_PARAMS
    base_params = dict(defaults)
    base_params.update({k: v for k, v in base_raw.items() if k in defaults})

    interp_raw = _merge_section("interpreter", merged.get("interpreter") or {})
    interp_params = dict(_COMMON_TREE_PARAMS)
    interp_params.update(interp_raw)

    plan_raw = _merge_section("split_plan", merged.get("split_plan") or {})
    plan_vals = dict(DEFAULT_CONFIG["split_plan"])
    plan_vals.update(plan_raw)
    try:
        plan = SplitPlan(
            base_train_size=int(plan_vals["base_train"]),
            interpreter_split_sizes=tuple(int(s) for s in plan_vals["interpreter_splits"]),
            validation_size=int(plan_vals["validation"]),
            test_size=int(plan_vals["test"]),
            seed=int(merged["seed"]),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid split plan: {exc}") from exc

    sec_raw = _merge_section("secondary_labels", merged.get("secondary_labels") or {})
    sec_vals = dict(DEFAULT_CONFIG["secondary_labels"])
    sec_vals.update(sec_raw)
    try:
        secondary = SecondaryLabelConfig(**{k: int(v) for k, v in sec_vals.items()})
    except ValueError as exc:
        raise ConfigError(f"invalid secondary label config: {exc}") from exc

    regimes = tuple(merged.get("regimes") or ())
    if not regimes or any(r not in (REGIME_ALL, REGIME_SUBSET) for r in regimes):
        raise ConfigError(f"regimes must be a non-empty subset of [{REGIME_ALL}, {REGIME_SUBSET}]")
    if len(set(regimes)) != len(regimes):
        raise ConfigError("regimes must not repeat")

    subset_path = merged.get("feature_subset")
    if subset_path is not None:
        subset_path = resolve_path(subset_path)
        if not Path(subset_path).exists():
            raise ConfigError(f"feature subset path does not exist: {subset_path}")
    elif REGIME_SUBSET in regimes:
        raise ConfigError(
            f"regime {REGIME_SUBSET} requires a feature_subset file"
        )

    met_raw = _merge_section("metrics", merged.get("metrics") or {})
    met_vals = dict(DEFAULT_CONFIG["metrics"])
    met_vals.update(met_raw)
    if int(met_vals["k"]) < 1:
        raise ConfigError("metrics.k must be >= 1")
    if met_vals["tau_topk_mode"] not in ("base", "intersection"):
        raise ConfigError("metrics.tau_topk_mode must be 'base' or 'intersection'")

    threads = int(merged["threads"])
    if threads < 1:
        raise ConfigError("threads must be >= 1")

    return ExperimentConfig(
        dataset=dataset,
        seed=int(merged["seed"]),
        output=str(merged["output"]),
        threads=threads,
        base_kind=kind,
        base_params=base_params,
        interpreter_params=interp_params,
        plan=plan,
        secondary=secondary,
        feature_subset_path=subset_path,
        regimes=regimes,
        k=int(met_vals["k"]),
        precision_threshold=int(met_vals["precision_threshold"]),
        tau_topk_mode=str(met_vals["tau_topk_mode"]),
    )


# -- report ----------------------------------------------------------------

CSV_HEADER = "split,regime,ndcg@k,prec@k,tau,tau@k"
BASE_SPLIT_LABEL = "base"
NA = "NA"


@dataclass(frozen=True)
class ReportRow:
    split: int | None  # None marks the base ranker's own row
    regime: str
    ndcg_at_k: float
    precision_at_k: float
    tau: float | None
    tau_at_k: float | None


@dataclass(frozen=True)
class FidelityReport:
    rows: tuple[ReportRow, ...]
    k: int
    base_label: str


def _fmt(value: float | None) -> str:
    return NA if value is None else f"{value:.4f}"


def emit_report(report: FidelityReport, fmt: str) -> str:
    if fmt == "csv":
        lines = [CSV_HEADER]
        for row in report.rows:
            split = BASE_SPLIT_LABEL if row.split is None else str(row.split)
            lines.append(
                f"{split},{row.regime},{_fmt(row.ndcg_at_k)},{_fmt(row.precision_at_k)},"
                f"{_fmt(row.tau)},{_fmt(row.tau_at_k)}"
            )
        return "\n".join(lines) + "\n"
    if fmt == "md":
        return _emit_markdown(report)
    raise ConfigError(f"unknown report format {fmt!r}")


def _emit_markdown(report: FidelityReport) -> str:
    regimes = []
    for row in report.rows:
        if row.split is not None and row.regime not in regimes:
            regimes.append(row.regime)
    metric_cols = [f"ndcg@{report.k}", f"prec@{report.k}", "tau", f"tau@{report.k}"]
    header = ["training size"]
    for regime in regimes:
        header.extend(f"{regime} {c}" for c in metric_cols)
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] * len(header)) + "|",
    ]
    by_split: dict[int, dict[str, ReportRow]] = {}
    base_row = None
    for row in report.rows:
        if row.split is None:
            base_row = row
        else:
            by_split.setdefault(row.split, {})[row.regime] = row
    for split in sorted(by_split):
        cells = [str(split)]
        for regime in regimes:
            row = by_split[split].get(regime)
            if row is None:
                cells.extend([NA] * 4)
            else:
                cells.extend(
                    [_fmt(row.ndcg_at_k), _fmt(row.precision_at_k), _fmt(row.tau), _fmt(row.tau_at_k)]
                )
        lines.append("| " + " | ".join(cells) + " |")
    if base_row is not None:
        cells = [f"{BASE_SPLIT_LABEL} ({base_row.regime})"]
        for _ in regimes:
            cells.extend([_fmt(base_row.ndcg_at_k), _fmt(base_row.precision_at_k), NA, NA])
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_report(report: FidelityReport, path, fmt: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(emit_report(report, fmt))


PER_QUERY_HEADER = "split,regime,query_id,ndcg@k,prec@k,tau,tau@k"


def write_per_query(rows, path) -> None:
    """Per-query fidelity CSV; ``rows`` yields (split, regime, PerQueryFidelity)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(PER_QUERY_HEADER + "\n")
        for split, regime, pq in rows:
            fh.write(
                f"{split},{regime},{pq.query_id},{_fmt(pq.ndcg_at_k)},"
                f"{_fmt(pq.precision_at_k)},{_fmt(pq.tau)},{_fmt(pq.tau_at_k)}\n"
            )


# -- manifest ----------------------------------------------------------------

@dataclass
class RunManifest:
    seed: int
    config: dict[str, str]
    split_digests: dict[str, tuple[int, str]] = field(default_factory=dict)
    artifact_digests: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    status: str = "incomplete"
    failed_stage: str | None = None

    def to_text(self) -> str:
        lines = [
            "rankdistill_manifest_version = 1",
            f"toolkit_version = {__version__}",
            f"status = {self.status}",
            f"seed = {self.seed}",
        ]
        if self.failed_stage:
            lines.append(f"failed_stage = {self.failed_stage}")
        lines.extend(f"config.{k} = {v}" for k, v in sorted(self.config.items()))
        for name in sorted(self.split_digests):
            count, digest = self.split_digests[name]
            lines.append(f"split.{name}.count = {count}")
            lines.append(f"split.{name}.sha256 = {digest}")
        lines.extend(
            f"artifact.{rel} = {digest}"
            for rel, digest in sorted(self.artifact_digests.items())
        )
        lines.extend(f"timing.{k} = {self.timings[k]:.3f}" for k in sorted(self.timings))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())


def _region_digest(query_ids) -> str:
    return sha256_text("\n".join(query_ids) + "\n")


def verify_manifest(run_dir) -> list[str]:
    """Recompute digests from disk and report mismatches (empty = clean)."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.txt"
    if not manifest_path.exists():
        return [f"missing manifest: {manifest_path}"]
    entries: dict[str, str] = {}
    for raw in manifest_path.read_text(encoding="utf-8").splitlines():
        key, sep, value = raw.partition(" = ")
        if sep:
            entries[key] = value
    problems = []
    regions = (
        read_split_manifest(run_dir / "splits" / "manifest.txt")
        if (run_dir / "splits" / "manifest.txt").exists()
        else {}
    )
    for key, value in entries.items():
        if key.startswith("split.") and key.endswith(".sha256"):
            name = key[len("split.") : -len(".sha256")]
            if name not in regions:
                problems.append(f"{key}: region missing from splits/manifest.txt")
            elif _region_digest(regions[name]) != value:
                problems.append(f"{key}: digest mismatch")
        elif key.startswith("artifact."):
            rel = key[len("artifact.") :]
            target = run_dir / rel
            if not target.exists():
                problems.append(f"{key}: file missing")
            elif sha256_file(target) != value:
                problems.append(f"{key}: digest mismatch")
    return problems


# -- runner ----------------------------------------------------------------

def _make_base_ranker(config: ExperimentConfig):
    if config.base_kind == LISTWISE:
        return LambdaMARTRanker(**config.base_params)
    return RankNetRanker(random_state=config.seed, **config.base_params)


def _train_and_score_cell(
    regime: str,
    secondary_train: Dataset,
    secondary_valid: Dataset,
    base_model,
    test: Dataset,
    subset: FeatureSubset | None,
    interpreter_params: dict,
    k: int,
    precision_threshold: int,
    tau_topk_mode: str,
):
    spec = InterpreterSpec(
        feature_subset=subset if regime == REGIME_SUBSET else None,
        params=interpreter_params,
    )
    model = train_interpreter(secondary_train, secondary_valid, spec)
    result, per_query = fidelity(
        model,
        base_model,
        test,
        k=k,
        relevance_threshold=precision_threshold,
        tau_topk_mode=tau_topk_mode,
    )
    return model, result, per_query


def run_experiment(
    config: ExperimentConfig, out_dir=None
) -> tuple[FidelityReport, RunManifest]:
    """Execute the full pipeline, persisting all artifacts under the run dir."""
    out = Path(out_dir or config.output)
    for sub in ("models", "splits", "secondary"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(seed=config.seed, config=config.flatten())
    stage = "setup"
    started = time.perf_counter()

    def finish_stage(name: str, t0: float) -> None:
        manifest.timings[name] = time.perf_counter() - t0

    try:
        stage = "load"
        t0 = time.perf_counter()
        dataset = load_dataset(config.dataset)
        subset = None
        if config.feature_subset_path is not None:
            subset = FeatureSubset.from_file(config.feature_subset_path)
            subset.validate_for(dataset.feature_dim)
        finish_stage(stage, t0)

        stage = "split"
        t0 = time.perf_counter()
        splits = make_splits(dataset, config.plan)
        write_split_manifest(splits, out / "splits" / "manifest.txt")
        for name, region in splits.regions():
            manifest.split_digests[name] = (
                region.n_queries,
                _region_digest(region.query_ids()),
            )
        finish_stage(stage, t0)

        stage = "train-base"
        t0 = time.perf_counter()
        base_model = _make_base_ranker(config)
        X, y, qid = splits.base_train.to_arrays()
        base_model.fit(X, y, qid, eval_set=splits.validation.to_arrays())
        base_path = out / "models" / "base.model"
        save_model(base_model, base_path)
        manifest.artifact_digests["models/base.model"] = sha256_file(base_path)
        finish_stage(stage, t0)

        stage = "relabel"
        t0 = time.perf_counter()
        pool = splits.interpreter_splits[-1]
        secondary_pool, pool_sidecar = build_secondary_dataset(
            base_model, pool, config.secondary
        )
        secondary_valid, valid_sidecar = build_secondary_dataset(
            base_model, splits.validation, config.secondary
        )
        save_dataset(secondary_pool, out / "secondary" / "pool.letor")
        write_sidecar(pool_sidecar, out / "secondary" / "pool_original_labels.tsv")
        save_dataset(secondary_valid, out / "secondary" / "validation.letor")
        write_sidecar(valid_sidecar, out / "secondary" / "validation_original_labels.tsv")
        for rel in (
            "secondary/pool.letor",
            "secondary/pool_original_labels.tsv",
            "secondary/validation.letor",
            "secondary/validation_original_labels.tsv",
        ):
            manifest.artifact_digests[rel] = sha256_file(out / rel)
        finish_stage(stage, t0)

        stage = "train-interpreters"
        t0 = time.perf_counter()
        sizes = config.plan.interpreter_split_sizes
        cells = [(size, regime) for size in sizes for regime in config.regimes]
        tasks = [
            delayed(_train_and_score_cell)(
                regime,
                secondary_pool.select(range(size)),
                secondary_valid,
                base_model,
                splits.test,
                subset,
                config.interpreter_params,
                config.k,
                config.precision_threshold,
                config.tau_topk_mode,
            )
            for size, regime in cells
        ]
        if config.threads > 1:
            outcomes = Parallel(n_jobs=config.threads)(tasks)
        else:
            outcomes = [task[0](*task[1], **task[2]) for task in tasks]
        finish_stage(stage, t0)

        stage = "report"
        t0 = time.perf_counter()
        rows = []
        per_query_rows = []
        for (size, regime), (model, result, per_query) in zip(cells, outcomes):
            name = f"interpreter_{size:05d}_{regime}.model"
            model_path = out / "models" / name
            save_model(model, model_path)
            manifest.artifact_digests[f"models/{name}"] = sha256_file(model_path)
            rows.append(
                ReportRow(size, regime, result.ndcg_at_k, result.precision_at_k,
                          result.tau, result.tau_at_k)
            )
            per_query_rows.extend((size, regime, pq) for pq in per_query)
            logger.info(
                "split=%d regime=%s ndcg@%d=%.4f tau=%.4f",
                size, regime, config.k, result.ndcg_at_k, result.tau,
            )
        base_ndcg, base_prec = ranking_quality(
            base_model, splits.test, config.k, config.precision_threshold
        )
        rows.append(ReportRow(None, config.base_kind, base_ndcg, base_prec, None, None))
        report = FidelityReport(tuple(rows), config.k, config.base_kind)
        write_report(report, out / "report.csv", "csv")
        write_report(report, out / "report.md", "md")
        write_per_query(per_query_rows, out / "per_query.csv")
        finish_stage(stage, t0)

        manifest.status = "complete"
        manifest.timings["total"] = time.perf_counter() - started
        manifest.write(out / "manifest.txt")
        return report, manifest
    except Exception as exc:
        manifest.failed_stage = stage
        manifest.timings["total"] = time.perf_counter() - started
        try:
            manifest.write(out / "manifest.txt")
        except OSError:
            logger.error("could not write incomplete-run manifest to %s", out)
        if isinstance(exc, (ConfigError, DataError)):
            raise type(exc)(f"stage '{stage}' failed: {exc}") from exc
        raise
