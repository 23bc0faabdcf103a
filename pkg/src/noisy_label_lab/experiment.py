"""Experiment pipeline: generate a dataset, train every variant, evaluate
on the held-out verified split, and record a manifest of the artifacts.

All artifacts for a run live flat in its output directory; the manifest
stores file names relative to that directory plus the resolved settings
hash, so a finished run can be audited or reproduced from the manifest
alone.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import datagen as dg
from . import metrics as mt
from . import model as md
from . import training as tr
from .config import ExperimentConfig
from .errors import ConfigurationError, FormatError, NoisyLabelLabError
from .training import VARIANTS

ENV_THREADS = "NOISY_LABEL_LAB_THREADS"
MANIFEST_FORMAT_VERSION = 1


class StageError(NoisyLabelLabError):
    """Wraps a pipeline failure with the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunPaths:
    """File layout of one run directory."""

    root: str

    def dataset(self) -> str:
        return os.path.join(self.root, "dataset.jsonl")

    def checkpoint(self, variant: str) -> str:
        return os.path.join(self.root, f"{variant}.ckpt")

    def training_log(self, variant: str) -> str:
        return os.path.join(self.root, f"{variant}_log.csv")

    def per_class(self, variant: str) -> str:
        return os.path.join(self.root, f"per_class_{variant}.csv")

    def pr_curve(self, variant: str) -> str:
        return os.path.join(self.root, f"pr_{variant}.tsv")

    def summary(self) -> str:
        return os.path.join(self.root, "summary.csv")

    def deciles(self) -> str:
        return os.path.join(self.root, "quality_deciles.csv")

    def manifest(self) -> str:
        return os.path.join(self.root, "manifest.json")


def _silent(*_args, **_kwargs) -> None:
    pass


def worker_cap(available: int) -> int:
    """Parallel training workers, bounded by the thread cap env var."""
    raw = os.environ.get(ENV_THREADS, "").strip()
    if not raw:
        return max(1, min(4, available))
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigurationError(
            f"{ENV_THREADS} must be an integer, got {raw!r}"
        ) from None
    return max(1, min(cap, available))


def run_generate(config: ExperimentConfig, echo=print) -> dict:
    """Build and save the dataset; reports noise and skew statistics."""
    paths = RunPaths(config.output_dir)
    os.makedirs(paths.root, exist_ok=True)
    started = time.perf_counter()
    split = dg.generate_dataset(config.dataset, config.seed)
    dg.save_dataset(split, paths.dataset())
    fp = dg.false_positive_rate(split)
    counts = dg.class_frequency(split)
    annotated = counts[counts > 0]
    skew = float(annotated.max() / annotated.min()) if annotated.size else 1.0
    seconds = time.perf_counter() - started
    echo(
        f"dataset: {len(split.train)} train / {len(split.clean)} clean / "
        f"{len(split.holdout)} holdout, {split.vocabulary.class_count} classes"
    )
    echo(f"false positive rate {fp:.3f}")
    echo(f"frequency skew {skew:.1f}x")
    return {
        "path": os.path.basename(paths.dataset()),
        "fp_rate": fp,
        "frequency_skew": skew,
        "seconds": seconds,
    }


def _load_split(paths: RunPaths) -> dg.DatasetSplit:
    if not os.path.exists(paths.dataset()):
        raise FileNotFoundError(
            f"dataset {paths.dataset()} not found; run the generate command first"
        )
    return dg.load_dataset(paths.dataset())


def run_train(
    config: ExperimentConfig,
    variant: str,
    echo=print,
    split: dg.DatasetSplit | None = None,
    start_params: md.ModelParams | None = None,
) -> dict:
    """Train one variant and save its checkpoint and loss log."""
    paths = RunPaths(config.output_dir)
    train_cfg = config.train_config(variant)
    if split is None:
        split = _load_split(paths)
    if variant != "baseline" and start_params is None:
        base_path = paths.checkpoint("baseline")
        if not os.path.exists(base_path):
            raise FileNotFoundError(
                f"variant {variant!r} fine-tunes the baseline but {base_path} "
                f"does not exist; train the baseline variant first"
            )
        start_params = md.load_checkpoint(base_path)
    dims = config.model.dims(split.feature_dim, split.vocabulary.class_count)
    started = time.perf_counter()
    params, history = tr.train(split, train_cfg, dims=dims, start_params=start_params)
    seconds = time.perf_counter() - started
    md.save_checkpoint(params, paths.checkpoint(variant))
    tr.write_training_log(history, paths.training_log(variant))
    last = history[-1] if history else None
    echo(
        f"{variant}: {len(history)} steps in {seconds:.1f}s"
        + (f", final total loss {last.total_loss:.4f}" if last else "")
    )
    return {
        "checkpoint": os.path.basename(paths.checkpoint(variant)),
        "log": os.path.basename(paths.training_log(variant)),
        "steps": len(history),
        "seconds": seconds,
    }


def score_holdout(
    params: md.ModelParams, samples, chunk_size: int = 512
) -> mt.RankedPredictions:
    """Classifier scores for verified samples, batched to bound memory."""
    if not samples:
        raise ConfigurationError("score_holdout: no samples to score")
    features = np.stack([s.features for s in samples])
    pieces = []
    for start in range(0, len(samples), chunk_size):
        block = features[start : start + chunk_size]
        pieces.append(md.predict(params, md.features(params, block)).data)
    return mt.RankedPredictions(
        scores=np.vstack(pieces),
        truth=np.stack([s.verified for s in samples]),
        verified=np.stack([s.verified_mask for s in samples]),
        sample_ids=np.array([s.sample_id for s in samples], dtype=np.int64),
    )


def _check_dims(params: md.ModelParams, split: dg.DatasetSplit, path: str) -> None:
    if (
        params.dims.class_count != split.vocabulary.class_count
        or params.dims.feature_dim != split.feature_dim
    ):
        raise FormatError(
            f"checkpoint {path} expects {params.dims.class_count} classes over "
            f"{params.dims.feature_dim} features but the dataset has "
            f"{split.vocabulary.class_count} classes over {split.feature_dim}"
        )


def run_evaluate(
    config: ExperimentConfig,
    variants=None,
    echo=print,
    split: dg.DatasetSplit | None = None,
) -> dict:
    """Score checkpoints on the holdout and write every report table."""
    paths = RunPaths(config.output_dir)
    wanted = list(variants) if variants else list(VARIANTS)
    for v in wanted:
        if v not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {v!r}, expected one of {', '.join(VARIANTS)}"
            )
    ordered = [v for v in VARIANTS if v in wanted]
    if split is None:
        split = _load_split(paths)
    started = time.perf_counter()

    reports = {}
    summary_rows = []
    outputs = {}
    for variant in ordered:
        ckpt = paths.checkpoint(variant)
        if not os.path.exists(ckpt):
            raise FileNotFoundError(
                f"checkpoint {ckpt} not found; train the {variant} variant first"
            )
        params = md.load_checkpoint(ckpt)
        _check_dims(params, split, ckpt)
        pred = score_holdout(params, split.holdout, config.eval.chunk_size)
        report = mt.build_report(pred, granularity=config.eval.granularity)
        reports[variant] = report
        mt.write_per_class_csv(paths.per_class(variant), split.vocabulary.names, report)
        mt.write_pr_tsv(paths.pr_curve(variant), report.pr_points)
        outputs[variant] = {
            "per_class": os.path.basename(paths.per_class(variant)),
            "pr": os.path.basename(paths.pr_curve(variant)),
        }
        summary_rows.append(
            {
                "variant": variant,
                "map": report.map,
                "ap_all": report.ap_all,
                "defined_classes": report.defined_classes,
                "undefined_classes": report.undefined_classes,
            }
        )
        echo(f"{variant}: MAP {report.map:.4f}, pooled AP {report.ap_all:.4f}")
    mt.write_summary_csv(paths.summary(), summary_rows)

    decile_path = None
    others = [v for v in ordered if v != "baseline"]
    if config.eval.deciles and "baseline" in reports and others:
        key = dg.annotation_quality(split)
        groups = config.eval.decile_groups
        deltas = {
            v: mt.decile_breakdown(reports[v], reports["baseline"], key, groups)
            for v in others
        }
        order = np.argsort(key, kind="stable")
        base, rem = divmod(order.size, groups)
        rows = []
        start = 0
        for g in range(groups):
            size = base + (1 if g < rem else 0)
            chunk = key[order[start : start + size]]
            start += size
            finite = chunk[np.isfinite(chunk)]
            rows.append(
                {
                    "group": g,
                    "lo": float(finite.min()) if finite.size else float("nan"),
                    "hi": float(finite.max()) if finite.size else float("nan"),
                    **{v: deltas[v][g] for v in others},
                }
            )
        mt.write_decile_csv(paths.deciles(), rows, others)
        decile_path = os.path.basename(paths.deciles())

    return {
        "summary": os.path.basename(paths.summary()),
        "deciles": decile_path,
        "variants": outputs,
        "rows": summary_rows,
        "reports": reports,
        "seconds": time.perf_counter() - started,
    }


def run_reproduce(config: ExperimentConfig, echo=print) -> dict:
    """Full pipeline: generate, train every variant, evaluate, manifest."""
    paths = RunPaths(config.output_dir)
    manifest: dict = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "config_hash": config.hash(),
        "seed": config.seed,
        "config": config.normalized(),
        "variants": {},
    }

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    echo(f"run {manifest['config_hash']} -> {paths.root}")
    manifest["dataset"] = stage("generate", run_generate, config, echo)
    split = stage("generate", _load_split, paths)

    manifest["variants"]["baseline"] = stage(
        "train[baseline]", run_train, config, "baseline", echo, split
    )
    base_params = md.load_checkpoint(paths.checkpoint("baseline"))

    others = [v for v in VARIANTS if v != "baseline"]
    workers = worker_cap(len(others))
    results: dict = {}
    if workers == 1:
        for v in others:
            results[v] = stage(
                f"train[{v}]", run_train, config, v, _silent, split, base_params
            )
            echo(f"{v}: {results[v]['steps']} steps in {results[v]['seconds']:.1f}s")
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                v: pool.submit(run_train, config, v, _silent, split, base_params)
                for v in others
            }
            for v in others:
                try:
                    results[v] = futures[v].result()
                except Exception as exc:
                    raise StageError(f"train[{v}]", exc) from exc
                echo(
                    f"{v}: {results[v]['steps']} steps in "
                    f"{results[v]['seconds']:.1f}s"
                )
    for v in others:
        manifest["variants"][v] = results[v]

    evaluation = stage("evaluate", run_evaluate, config, None, echo, split)
    manifest["evaluation"] = {
        "summary": evaluation["summary"],
        "deciles": evaluation["deciles"],
        "variants": evaluation["variants"],
        "seconds": evaluation["seconds"],
    }

    with open(paths.manifest(), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    echo(f"manifest written to {paths.manifest()}")
    return manifest


def manifest_artifacts(manifest: dict, root: str) -> list:
    """Absolute paths of every file a manifest references."""
    out = [os.path.join(root, manifest["dataset"]["path"])]
    for info in manifest["variants"].values():
        out.append(os.path.join(root, info["checkpoint"]))
        out.append(os.path.join(root, info["log"]))
    ev = manifest["evaluation"]
    out.append(os.path.join(root, ev["summary"]))
    if ev["deciles"]:
        out.append(os.path.join(root, ev["deciles"]))
    for info in ev["variants"].values():
        out.append(os.path.join(root, info["per_class"]))
        out.append(os.path.join(root, info["pr"]))
    return out
