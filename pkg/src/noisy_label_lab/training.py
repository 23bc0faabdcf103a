"""Multi-task training: classification on noisy/cleaned targets plus label
cleaning supervised by the verified pool.

Batches mix the noisy train pool and the verified clean pool at a fixed
ratio; each row carries a source tag. The cleaning loss only covers
verified rows. Classification targets for noisy rows are the cleaner's
outputs behind a stop-gradient, so the classification loss can never push
the cleaner toward trivial solutions; verified rows use ground truth.

Variants:
  baseline        trunk + head on noisy annotations only
  ft_clean        head only, verified pool only, from the baseline
  ft_mixed        head only, mixed batches with noisy/verified targets
  ours_joint      cleaner + trunk + head jointly, from the baseline
  ours_pretrained cleaner alone first, then the joint phase
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from . import model as md
from .autodiff import Tensor
from .errors import ConfigurationError, TrainingDivergedError, UsageError

VARIANTS = ("baseline", "ft_clean", "ft_mixed", "ours_pretrained", "ours_joint")

RMS_DECAY = 0.9
RMS_EPS = 1e-8

_BATCH_TAG = 23


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings shared by every variant."""

    variant: str
    batch_size: int = 32
    mix_noisy: int = 9
    mix_clean: int = 1
    clean_weight: float = 0.1
    classify_weight: float = 1.0
    optimizer: str = "rmsprop"
    model_lr: float = 0.001
    cleaner_lr: float = 0.015
    baseline_lr: float = 0.045
    decay_rate: float = 0.94
    decay_epochs: float = 2.0
    max_steps: int = 2000
    pretrain_steps: int = 2000
    pretrain_tol: float = 1e-4
    pretrain_window: int = 200
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}, expected one of {', '.join(VARIANTS)}"
            )
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.mix_noisy < 0 or self.mix_clean < 0 or self.mix_noisy + self.mix_clean == 0:
            raise ConfigurationError(
                f"mix ratio {self.mix_noisy}:{self.mix_clean} must be non-negative "
                f"with a positive total"
            )
        for name in ("clean_weight", "classify_weight"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.optimizer != "rmsprop":
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        for name in ("model_lr", "cleaner_lr", "baseline_lr"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not 0.0 < self.decay_rate <= 1.0:
            raise ConfigurationError(f"decay_rate must lie in (0, 1], got {self.decay_rate}")
        if self.decay_epochs <= 0:
            raise ConfigurationError(f"decay_epochs must be positive, got {self.decay_epochs}")
        for name in ("max_steps", "pretrain_steps"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.pretrain_window < 1:
            raise ConfigurationError(f"pretrain_window must be >= 1, got {self.pretrain_window}")
        if self.seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {self.seed}")


class LogRow(NamedTuple):
    step: int
    clean_loss: float
    classify_loss: float
    total_loss: float
    lr: float


@dataclass
class Batch:
    """Stacked rows, noisy pool first; clean_rows tags the verified rows."""

    features: np.ndarray
    noisy: np.ndarray
    verified: np.ndarray
    clean_rows: np.ndarray
    noisy_count: int


@dataclass
class TrainState:
    params: md.ModelParams
    step: int = 0
    phase: str = "joint"
    noisy_seen: int = 0
    decay_every: int = 0
    accum: dict = field(default_factory=dict)
    history: list = field(default_factory=list)


def batch_counts(batch_size: int, mix_noisy: int, mix_clean: int) -> tuple[int, int]:
    """Exact per-batch composition: noisy count is round(B * noisy_share)."""
    total = mix_noisy + mix_clean
    n_noisy = int(np.rint(batch_size * mix_noisy / total))
    return n_noisy, batch_size - n_noisy


def sample_batch(train_pool, clean_pool, config: TrainConfig, rng: np.random.Generator,
                 mix: tuple[int, int] | None = None) -> Batch:
    """Draw uniformly (with replacement) from each pool at the active mix."""
    mix_noisy, mix_clean = mix if mix is not None else (config.mix_noisy, config.mix_clean)
    n_noisy, n_clean = batch_counts(config.batch_size, mix_noisy, mix_clean)
    if n_noisy > 0 and not train_pool:
        raise ConfigurationError("batch needs noisy samples but the train pool is empty")
    if n_clean > 0 and not clean_pool:
        raise ConfigurationError("batch needs verified samples but the clean pool is empty")
    rows = []
    if n_noisy:
        rows.extend(train_pool[i] for i in rng.integers(0, len(train_pool), size=n_noisy))
    if n_clean:
        rows.extend(clean_pool[i] for i in rng.integers(0, len(clean_pool), size=n_clean))
    features = np.stack([s.features for s in rows]).astype(np.float64)
    noisy = np.stack([s.noisy for s in rows]).astype(np.float64)
    d = noisy.shape[1]
    verified = np.zeros((len(rows), d))
    for i, s in enumerate(rows[n_noisy:], start=n_noisy):
        verified[i] = s.verified
    clean_rows = np.zeros(len(rows), dtype=bool)
    clean_rows[n_noisy:] = True
    return Batch(
        features=features,
        noisy=noisy,
        verified=verified,
        clean_rows=clean_rows,
        noisy_count=n_noisy,
    )


def clean_loss(cleaned: Tensor, verified: Tensor, row_weight: Tensor | None = None) -> Tensor:
    """Summed absolute distance between cleaned and verified labels."""
    if cleaned.data.shape != verified.data.shape:
        raise ConfigurationError(
            f"clean_loss: shapes {cleaned.data.shape} and {verified.data.shape} differ"
        )
    diff = abs(cleaned - verified)
    if row_weight is not None:
        diff = diff * row_weight
    return diff.sum()


def classify_loss(predictions: Tensor, targets: Tensor, row_weight: Tensor | None = None) -> Tensor:
    """Summed binary cross-entropy with floor-clamped logs; targets may be
    soft but must lie in [0, 1]."""
    if predictions.data.shape != targets.data.shape:
        raise ConfigurationError(
            f"classify_loss: shapes {predictions.data.shape} and {targets.data.shape} differ"
        )
    if np.any(targets.data < 0.0) or np.any(targets.data > 1.0):
        raise UsageError("classify_loss: targets must lie in [0, 1]")
    term = targets * ad.log(predictions) + (1.0 - targets) * ad.log(1.0 - predictions)
    if row_weight is not None:
        term = term * row_weight
    return -term.sum()


@dataclass
class LossNodes:
    """Graph handles for one step; total = clean_weight * clean +
    classify_weight * (classify_noisy + classify_clean)."""

    clean: Tensor
    classify_noisy: Tensor
    classify_clean: Tensor
    classify: Tensor
    total: Tensor
    cleaned: Tensor | None


def _row_mask(selector: np.ndarray, d: int) -> Tensor:
    return Tensor(np.repeat(selector.astype(np.float64)[:, None], d, axis=1))


def loss_components(params: md.ModelParams, batch: Batch, config: TrainConfig) -> LossNodes:
    """Build the full loss graph for one batch under the active variant."""
    d = params.dims.class_count
    emb = md.features(params, batch.features)
    pred = md.predict(params, emb)
    noisy_t = Tensor(batch.noisy)
    verified_t = Tensor(batch.verified)
    mask_noisy = _row_mask(~batch.clean_rows, d)
    mask_clean = _row_mask(batch.clean_rows, d)
    uses_cleaner = config.variant in ("ours_pretrained", "ours_joint")
    cleaned = None
    if uses_cleaner:
        cleaned = md.clean_labels(params, noisy_t, emb)
        clean = clean_loss(cleaned, verified_t, mask_clean)
        noisy_targets = ad.stop_gradient(cleaned)
    else:
        clean = Tensor(0.0)
        noisy_targets = noisy_t
    classify_noisy = classify_loss(pred, noisy_targets, mask_noisy)
    classify_clean = classify_loss(pred, verified_t, mask_clean)
    classify = classify_noisy + classify_clean
    total = clean * config.clean_weight + classify * config.classify_weight
    return LossNodes(
        clean=clean,
        classify_noisy=classify_noisy,
        classify_clean=classify_clean,
        classify=classify,
        total=total,
        cleaned=cleaned,
    )


def trainable_parameters(variant: str, phase: str = "joint") -> tuple:
    if variant == "baseline":
        return md.TRUNK_PARAMS + md.HEAD_PARAMS
    if variant in ("ft_clean", "ft_mixed"):
        return md.HEAD_PARAMS
    if variant == "ours_pretrained" and phase == "pretrain":
        return md.CLEANER_PARAMS
    return md.TRUNK_PARAMS + md.CLEANER_PARAMS + md.HEAD_PARAMS


def learning_rates(config: TrainConfig, variant: str, phase: str) -> dict:
    """Base (undecayed) learning rate per trainable parameter."""
    rates = {}
    if variant == "baseline":
        model_lr = config.baseline_lr
    else:
        model_lr = config.model_lr
    # a pretrained cleaner continues at the model rate once trained jointly
    if variant == "ours_pretrained":
        cleaner_lr = config.cleaner_lr if phase == "pretrain" else config.model_lr
    else:
        cleaner_lr = config.cleaner_lr
    for name in trainable_parameters(variant, phase):
        rates[name] = cleaner_lr if name in md.CLEANER_PARAMS else model_lr
    return rates


def gradient_map(root: Tensor, params: md.ModelParams, names) -> dict:
    """Backward from root, then gradients for `names`; parameters the graph
    never reaches get exact zeros."""
    grads = ad.backward(root)
    return {
        name: grads.get(params[name], np.zeros(params[name].data.shape))
        for name in names
    }


def optimizer_update(state: TrainState, gradients: dict, rates: dict) -> TrainState:
    """RMSprop step over exactly the supplied gradients."""
    for name, grad in gradients.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(
                f"non-finite gradient for parameter '{name}' at step {state.step}"
            )
        acc = state.accum.get(name)
        if acc is None:
            acc = np.zeros_like(grad)
            state.accum[name] = acc
        acc *= RMS_DECAY
        acc += (1.0 - RMS_DECAY) * grad * grad
        new = state.params[name].data - rates[name] * grad / (np.sqrt(acc) + RMS_EPS)
        state.params.replace(name, Tensor(new))
    return state


def _decay_multiplier(state: TrainState, config: TrainConfig) -> float:
    if state.decay_every <= 0:
        return 1.0
    return float(config.decay_rate ** (state.noisy_seen // state.decay_every))


def _logged_lr(config: TrainConfig, variant: str, phase: str, mult: float) -> float:
    """The largest rate among actively trained groups; phase changes show up
    as a rate change in the log."""
    rates = learning_rates(config, variant, phase)
    return max(rates.values()) * mult if rates else 0.0


def train_step(state: TrainState, batch: Batch, config: TrainConfig) -> TrainState:
    """One optimization step; appends its log row to the state history."""
    nodes = loss_components(state.params, batch, config)
    names = trainable_parameters(config.variant, state.phase)
    grads = gradient_map(nodes.total, state.params, names)
    mult = _decay_multiplier(state, config)
    base_rates = learning_rates(config, config.variant, state.phase)
    rates = {name: base_rates[name] * mult for name in names}
    optimizer_update(state, grads, rates)
    state.step += 1
    state.noisy_seen += batch.noisy_count
    state.history.append(
        LogRow(
            step=state.step,
            clean_loss=nodes.clean.item(),
            classify_loss=nodes.classify.item(),
            total_loss=nodes.total.item(),
            lr=_logged_lr(config, config.variant, state.phase, mult),
        )
    )
    return state


def _variant_mix(config: TrainConfig, phase: str) -> tuple[int, int]:
    if config.variant == "baseline":
        return (1, 0)
    if config.variant == "ft_clean":
        return (0, 1)
    if config.variant == "ours_pretrained" and phase == "pretrain":
        return (0, 1)
    return (config.mix_noisy, config.mix_clean)


def train(split, config: TrainConfig, dims: md.ModelDims | None = None,
          start_params: md.ModelParams | None = None) -> tuple[md.ModelParams, list]:
    """Run one variant to completion; returns (params, log rows).

    baseline initializes fresh parameters (pass dims or accept defaults);
    every other variant must start from baseline parameters.
    """
    config.validate()
    if config.variant == "baseline":
        if start_params is not None:
            params = start_params.copy()
        else:
            if dims is None:
                dims = md.ModelDims(
                    feature_dim=split.feature_dim,
                    class_count=split.vocabulary.class_count,
                )
            params = md.init_params(dims, config.seed)
    else:
        if start_params is None:
            raise ConfigurationError(
                f"variant '{config.variant}' fine-tunes the baseline; train the "
                f"baseline variant first and pass its parameters"
            )
        params = start_params.copy()
    if params.dims.feature_dim != split.feature_dim:
        raise ConfigurationError(
            f"model expects {params.dims.feature_dim} features but the dataset "
            f"has {split.feature_dim}"
        )
    if params.dims.class_count != split.vocabulary.class_count:
        raise ConfigurationError(
            f"model expects {params.dims.class_count} classes but the dataset "
            f"has {split.vocabulary.class_count}"
        )

    variant_index = VARIANTS.index(config.variant)
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([config.seed, _BATCH_TAG, variant_index]))
    )
    state = TrainState(params=params)
    state.decay_every = int(config.decay_epochs * len(split.train))

    if config.variant == "ours_pretrained" and config.pretrain_steps > 0:
        state.phase = "pretrain"
        window: list[float] = []
        prev_avg = None
        for _ in range(config.pretrain_steps):
            batch = sample_batch(
                split.train, split.clean, config, rng, mix=_variant_mix(config, "pretrain")
            )
            train_step(state, batch, config)
            window.append(state.history[-1].clean_loss)
            if len(window) == config.pretrain_window:
                avg = sum(window) / len(window)
                window.clear()
                if prev_avg is not None:
                    improvement = (prev_avg - avg) / max(abs(prev_avg), 1e-12)
                    if improvement < config.pretrain_tol:
                        break
                prev_avg = avg
        state.phase = "joint"

    mix = _variant_mix(config, "joint")
    for _ in range(config.max_steps):
        batch = sample_batch(split.train, split.clean, config, rng, mix=mix)
        train_step(state, batch, config)
    return state.params, state.history


def write_training_log(rows, path) -> None:
    """CSV of step, clean loss, classification loss, weighted total, lr."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,L_clean,L_classify,total,lr\n")
        for row in rows:
            fh.write(
                f"{row.step},{row.clean_loss!r},{row.classify_loss!r},"
                f"{row.total_loss!r},{row.lr!r}\n"
            )
