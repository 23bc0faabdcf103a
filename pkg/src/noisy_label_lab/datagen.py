"""Synthetic multi-label datasets with structured, feature-dependent noise.

Ground truth comes from a latent concept model: per-class seed draws with
power-law marginals, closed under implication edges, filtered so exclusion
edges never co-occur. Features are drawn around per-mode class prototypes,
and the corruption that turns truth into noisy annotations (misses,
confusion swaps, false-positive injection) is conditioned on which mode
produced the features, so the noise is predictable from the inputs.

Each class gets a planted annotation quality; most of its false-positive
budget is routed through a small ladder of shared junk modes, feature modes
of moderately frequent classes that inject their wired targets with a
probability close to the true-annotation rate. A converged predictor of the
noisy labels then cannot rank injected rows below genuine ones, while the
junk co-label and feature signature stay learnable from verified data. A
small unconditional remainder covers the rest of the budget.

Every sample draws from its own PRNG stream keyed by (seed, sample id), so
content never depends on generation order. The global false-positive rate
is calibrated to a target by a pilot simulation on a reserved stream.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, FormatError

logger = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
SPLIT_NAMES = ("train", "clean", "holdout")

_STRUCT_TAG = 1
_PILOT_TAG = 2
_SAMPLE_TAG = 3

_MAX_INJECTION_SCALE = 64.0


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(entropy))))


@dataclass(frozen=True)
class Vocabulary:
    """Class names, optionally tagged with a coarse group id each."""

    names: tuple
    groups: tuple | None = None

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 2:
            raise ConfigurationError(f"vocabulary needs at least 2 classes, got {len(names)}")
        if len(set(names)) != len(names):
            raise ConfigurationError("vocabulary names must be unique")
        if self.groups is not None:
            groups = tuple(int(g) for g in self.groups)
            if len(groups) != len(names):
                raise ConfigurationError(
                    f"vocabulary has {len(names)} names but {len(groups)} group ids"
                )
            object.__setattr__(self, "groups", groups)

    @property
    def class_count(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class ConfusionEdge:
    """Swap annotation src -> dst with probability prob; mode-specific when
    mode is not None (fires only if src was seeded through that mode)."""

    src: int
    dst: int
    prob: float
    mode: int | None = None


@dataclass(frozen=True)
class ModeProfile:
    """One feature mode of a class: its prototype and the false-positive
    injections it causes, as (target class, probability) pairs applied
    whenever the mode is active."""

    prototype: np.ndarray
    fp_targets: tuple = ()


@dataclass(frozen=True)
class NoiseSpec:
    """Full corruption model: per-class rates plus the relational structure.

    fp_rate[c] is the planted false fraction for class c: the share of its
    noisy annotations that should be spurious, so annotation quality is
    1 - fp_rate[c]. Whatever part of that budget the mode fp_targets do not
    produce is injected unconditionally at generation time.
    """

    fp_rate: np.ndarray
    miss_rate: np.ndarray
    confusion: tuple
    modes: tuple
    implications: tuple
    exclusions: tuple

    def mode_counts(self) -> np.ndarray:
        return np.array([len(m) for m in self.modes], dtype=np.int64)

    def validate(self, class_count: int, feature_dim: int) -> None:
        d = class_count
        fp = np.asarray(self.fp_rate, dtype=np.float64)
        miss = np.asarray(self.miss_rate, dtype=np.float64)
        if fp.shape != (d,):
            raise ConfigurationError(f"fp_rate shape {fp.shape} != ({d},)")
        if miss.shape != (d,):
            raise ConfigurationError(f"miss_rate shape {miss.shape} != ({d},)")
        for name, arr in (("fp_rate", fp), ("miss_rate", miss)):
            if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
                raise ConfigurationError(f"{name} entries must lie in [0, 1]")
        if len(self.modes) != d:
            raise ConfigurationError(f"modes cover {len(self.modes)} classes, expected {d}")
        for c, profiles in enumerate(self.modes):
            if len(profiles) < 1:
                raise ConfigurationError(f"class {c} needs at least one mode")
            for m, prof in enumerate(profiles):
                if prof.prototype.shape != (feature_dim,):
                    raise ConfigurationError(
                        f"class {c} mode {m}: prototype shape {prof.prototype.shape} "
                        f"!= ({feature_dim},)"
                    )
                for t, p in prof.fp_targets:
                    if not 0 <= t < d:
                        raise ConfigurationError(f"class {c} mode {m}: fp target {t} out of range")
                    if not 0.0 <= p <= 1.0:
                        raise ConfigurationError(f"class {c} mode {m}: fp prob {p} outside [0, 1]")
        for e in self.confusion:
            if not (0 <= e.src < d and 0 <= e.dst < d) or e.src == e.dst:
                raise ConfigurationError(f"confusion edge ({e.src}, {e.dst}) is invalid")
            if not 0.0 <= e.prob <= 1.0:
                raise ConfigurationError(f"confusion edge ({e.src}, {e.dst}): prob {e.prob}")
            if e.mode is not None and not 0 <= e.mode < len(self.modes[e.src]):
                raise ConfigurationError(
                    f"confusion edge ({e.src}, {e.dst}): mode {e.mode} out of range"
                )
        for a, b in list(self.implications) + list(self.exclusions):
            if not (0 <= a < d and 0 <= b < d) or a == b:
                raise ConfigurationError(f"edge ({a}, {b}) is invalid")
        self._check_acyclic(d)
        closure = implication_closure(self.implications, d)
        for a, b in self.exclusions:
            both = closure[:, a] & closure[:, b]
            if np.any(both):
                witness = int(np.flatnonzero(both)[0])
                raise ConfigurationError(
                    f"exclusion edge ({a}, {b}) conflicts with implications: "
                    f"class {witness} implies both ends"
                )

    def _check_acyclic(self, d: int) -> None:
        out = [[] for _ in range(d)]
        indeg = [0] * d
        for a, b in self.implications:
            out[a].append(b)
            indeg[b] += 1
        ready = [c for c in range(d) if indeg[c] == 0]
        seen = 0
        while ready:
            c = ready.pop()
            seen += 1
            for nxt in out[c]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    ready.append(nxt)
        if seen != d:
            raise ConfigurationError("implication edges contain a cycle")


def implication_closure(implications: Sequence, d: int) -> np.ndarray:
    """closure[c, j]: labeling c forces j (reflexive, transitive)."""
    adj = [[] for _ in range(d)]
    for a, b in implications:
        adj[a].append(b)
    closure = np.zeros((d, d), dtype=bool)
    for c in range(d):
        stack = [c]
        while stack:
            node = stack.pop()
            if closure[c, node]:
                continue
            closure[c, node] = True
            stack.extend(adj[node])
    return closure


@dataclass
class Sample:
    """One example: features, noisy annotations, and (for verified splits)
    ground truth plus the mask of verified classes."""

    sample_id: int
    features: np.ndarray
    noisy: np.ndarray
    verified: np.ndarray | None = None
    verified_mask: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.sample_id == other.sample_id
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.noisy, other.noisy)
            and _opt_equal(self.verified, other.verified)
            and _opt_equal(self.verified_mask, other.verified_mask)
        )


def _opt_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


@dataclass
class DatasetSplit:
    """Three disjoint pools: a large noisy train set, a small verified clean
    set for supervision, and a verified holdout for evaluation."""

    vocabulary: Vocabulary
    feature_dim: int
    train: list
    clean: list
    holdout: list

    def __eq__(self, other):
        if not isinstance(other, DatasetSplit):
            return NotImplemented
        return (
            self.vocabulary == other.vocabulary
            and self.feature_dim == other.feature_dim
            and self.train == other.train
            and self.clean == other.clean
            and self.holdout == other.holdout
        )

    def verified_samples(self) -> list:
        return self.clean + self.holdout


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for dataset shape, frequency skew, and the corruption model."""

    class_count: int = 200
    feature_dim: int = 64
    train_size: int = 50000
    clean_size: int = 1000
    holdout_size: int = 5000
    head_frequency: float = 0.5
    frequency_skew: float = 1.0
    verify_negatives: int = 16
    target_fp_rate: float = 0.266
    miss_rate: float = 0.1
    implication_count: int = 50
    exclusion_count: int = 10
    confusion_count: int = 30
    multi_mode_fraction: float = 0.25
    max_modes: int = 3
    structured_share: float = 0.85
    quality_high_fraction: float = 0.25
    quality_low_fraction: float = 0.20
    feature_noise: float = 1.0
    prototype_scale: float = 3.0
    dominant_weight: float = 0.6
    calibration_samples: int = 48000
    injection_cap: float = 0.95

    def validate(self) -> None:
        if self.class_count < 2:
            raise ConfigurationError(f"class_count must be >= 2, got {self.class_count}")
        if self.feature_dim < 1:
            raise ConfigurationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        for name in ("train_size", "clean_size", "holdout_size"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.train_size < 10 * self.clean_size:
            raise ConfigurationError(
                f"train_size ({self.train_size}) must be at least 10x clean_size "
                f"({self.clean_size})"
            )
        for name in (
            "head_frequency",
            "target_fp_rate",
            "miss_rate",
            "multi_mode_fraction",
            "structured_share",
            "quality_high_fraction",
            "quality_low_fraction",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value}")
        if self.head_frequency == 0.0:
            raise ConfigurationError("head_frequency must be positive")
        if self.frequency_skew <= 0.0:
            raise ConfigurationError(f"frequency_skew must be positive, got {self.frequency_skew}")
        if not 0 <= self.verify_negatives < self.class_count:
            raise ConfigurationError(
                f"verify_negatives must lie in [0, class_count), got {self.verify_negatives}"
            )
        if self.target_fp_rate >= 1.0:
            raise ConfigurationError("target_fp_rate must be below 1")
        if self.max_modes < 1:
            raise ConfigurationError(f"max_modes must be >= 1, got {self.max_modes}")
        if self.quality_high_fraction + self.quality_low_fraction > 1.0:
            raise ConfigurationError("quality band fractions exceed 1")
        for name in ("implication_count", "exclusion_count", "confusion_count"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not 0.0 < self.dominant_weight <= 1.0:
            raise ConfigurationError("dominant_weight must lie in (0, 1]")
        if self.calibration_samples < 1:
            raise ConfigurationError("calibration_samples must be >= 1")
        if not 0.0 < self.injection_cap <= 1.0:
            raise ConfigurationError("injection_cap must lie in (0, 1]")
        for name in ("feature_noise", "prototype_scale"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(f"{name} must be >= 0")


def class_marginals(cfg: GeneratorConfig) -> np.ndarray:
    """Power-law seed probability per class, most frequent first."""
    ranks = np.arange(1, cfg.class_count + 1, dtype=np.float64)
    return np.minimum(cfg.head_frequency * ranks**-cfg.frequency_skew, 0.999)


def build_structure(cfg: GeneratorConfig, seed: int):
    """Deterministically derive (Vocabulary, marginals, NoiseSpec) for a seed."""
    cfg.validate()
    d, k = cfg.class_count, cfg.feature_dim
    rng = _rng(seed, _STRUCT_TAG)
    names = tuple(f"class_{i:04d}" for i in range(d))
    group_count = max(2, d // 25)
    groups = tuple(int(g) for g in rng.integers(0, group_count, size=d))
    vocab = Vocabulary(names=names, groups=groups)
    marginals = class_marginals(cfg)

    implications = set()
    if d >= 8:
        attempts = 0
        while len(implications) < cfg.implication_count and attempts < cfg.implication_count * 20:
            attempts += 1
            child = int(rng.integers(d // 3, d))
            parent = int(rng.integers(0, max(1, d // 4)))
            if parent < child:
                implications.add((child, parent))
    implications = tuple(sorted(implications))
    closure = implication_closure(implications, d)

    exclusions = set()
    if d >= 8:
        attempts = 0
        while len(exclusions) < cfg.exclusion_count and attempts < cfg.exclusion_count * 50:
            attempts += 1
            a = int(rng.integers(d // 4, d))
            b = int(rng.integers(d // 4, d))
            if a == b:
                continue
            pair = (min(a, b), max(a, b))
            if pair in exclusions:
                continue
            if np.any(closure[:, pair[0]] & closure[:, pair[1]]):
                continue
            exclusions.add(pair)
    exclusions = tuple(sorted(exclusions))

    mode_counts = np.ones(d, dtype=np.int64)
    if cfg.max_modes > 1:
        multi = rng.random(d) < cfg.multi_mode_fraction
        extra = rng.integers(1, cfg.max_modes, size=d)
        mode_counts[multi] += extra[multi]

    # planted per-class annotation quality; fp_rate is the false fraction.
    # The most frequent classes are pinned to high quality so the global
    # rate is set by the long tail rather than a few giant draws.
    band = rng.random(d)
    quality = np.empty(d)
    high = band < cfg.quality_high_fraction
    low = band >= 1.0 - cfg.quality_low_fraction
    mid = ~(high | low)
    quality[high] = rng.uniform(0.95, 0.995, size=int(high.sum()))
    quality[low] = rng.uniform(0.20, 0.45, size=int(low.sum()))
    quality[mid] = rng.uniform(0.40, 0.75, size=int(mid.sum()))
    giants = marginals > 0.1
    quality[giants] = rng.uniform(0.90, 0.99, size=int(giants.sum()))
    fp_rate = 1.0 - quality

    prototypes = [
        [rng.normal(size=k) * cfg.prototype_scale for _ in range(int(mode_counts[c]))]
        for c in range(d)
    ]

    # junk-mode ladder: pick sources whose per-mode activity spans the
    # budget spectrum, then fit each class's structured budget with wires
    # at probability close to the kept-annotation rate, so a converged
    # noisy-label predictor cannot rank the injections below real positives
    kept = marginals * (1.0 - cfg.miss_rate)
    activity = marginals / mode_counts
    w_cap = max(1.0 - cfg.miss_rate, 0.05)
    struct_budget = cfg.structured_share * kept * fp_rate / np.maximum(1.0 - fp_rate, 0.05)
    junk_count = max(2, min(8, d // 25))
    positive = struct_budget[struct_budget > 1e-9]
    hi_act = min(0.15, float(np.quantile(positive, 0.95)) / w_cap) if positive.size else 0.1
    lo_act = max(0.008, float(np.quantile(positive, 0.30)) / w_cap) if positive.size else 0.01
    if lo_act >= hi_act:
        lo_act = hi_act / 2.0
    junk = []
    taken = set()
    for want in np.geomspace(hi_act, lo_act, junk_count):
        for c in np.argsort(np.abs(activity - want)):
            c = int(c)
            if c not in taken:
                taken.add(c)
                junk.append((c, int(rng.integers(int(mode_counts[c])))))
                break
    junk_act = np.array([activity[s] for s, _ in junk])

    targets_by_mode = {}
    for t in range(d):
        remaining = float(struct_budget[t])
        if remaining <= 1e-9:
            continue
        related = closure[t] | closure[:, t]
        wired = set()
        for _ in range(3):
            best, best_gap = -1, np.inf
            for j, (s, _) in enumerate(junk):
                if j in wired or s == t or related[s]:
                    continue
                gap = abs(junk_act[j] - remaining / w_cap)
                if gap < best_gap:
                    best, best_gap = j, gap
            if best < 0:
                break
            w = min(w_cap, remaining / junk_act[best])
            if w < 0.02:
                break
            targets_by_mode.setdefault(junk[best], []).append((int(t), float(w)))
            wired.add(best)
            remaining -= w * junk_act[best]
            if remaining <= 1e-9:
                break

    modes = []
    for c in range(d):
        profiles = []
        for m in range(int(mode_counts[c])):
            targets = tuple(targets_by_mode.get((c, m), ()))
            profiles.append(ModeProfile(prototype=prototypes[c][m], fp_targets=targets))
        modes.append(tuple(profiles))

    confusion = []
    seen_pairs = set()
    attempts = 0
    while len(confusion) < cfg.confusion_count and attempts < cfg.confusion_count * 20:
        attempts += 1
        src = int(rng.integers(0, d))
        dst = int(rng.integers(0, d))
        if src == dst or (src, dst) in seen_pairs:
            continue
        seen_pairs.add((src, dst))
        mode = None
        if mode_counts[src] > 1 and rng.random() < 0.7:
            mode = int(rng.integers(0, mode_counts[src]))
        confusion.append(
            ConfusionEdge(src=src, dst=dst, prob=float(rng.uniform(0.1, 0.4)), mode=mode)
        )

    spec = NoiseSpec(
        fp_rate=fp_rate,
        miss_rate=np.full(d, cfg.miss_rate),
        confusion=tuple(confusion),
        modes=tuple(modes),
        implications=implications,
        exclusions=exclusions,
    )
    spec.validate(d, k)
    return vocab, marginals, spec


class _Bundle:
    """Precomputed generation state shared by every sample draw."""

    def __init__(self, cfg: GeneratorConfig, seed: int, marginals, spec: NoiseSpec):
        self.cfg = cfg
        self.seed = seed
        self.marginals = marginals
        self.spec = spec
        d = cfg.class_count
        self.closure = implication_closure(spec.implications, d)
        self.excl_partners = np.zeros((d, d), dtype=bool)
        for a, b in spec.exclusions:
            self.excl_partners[self.closure[:, a], b] = True
            self.excl_partners[self.closure[:, b], a] = True
        self.mode_counts = spec.mode_counts()
        self.miss = np.asarray(spec.miss_rate, dtype=np.float64)
        self.any_miss = bool(np.any(self.miss > 0))
        # per-class injected mass that realizes the planted false fraction:
        # budget / (kept + budget) = fp_rate, kept ~ marginal * (1 - miss).
        # The unconditional rate covers whatever the mode wiring leaves over.
        fp = np.asarray(spec.fp_rate, dtype=np.float64)
        budget = marginals * (1.0 - self.miss) * fp / np.maximum(1.0 - fp, 0.05)
        wired = np.zeros(d)
        for s, profiles in enumerate(spec.modes):
            act = marginals[s] / max(len(profiles), 1)
            for prof in profiles:
                for t, p in prof.fp_targets:
                    wired[t] += act * p
        self.base_fp = np.clip(
            (budget - wired) / np.maximum(1.0 - marginals, 0.05), 0.0, 0.95
        )
        self.scale = 1.0


def _draw_truth(rng: np.random.Generator, bundle: _Bundle):
    """Seed classes by marginal, resolve exclusions most-frequent-first,
    close under implications, and pick a feature mode per accepted seed."""
    d = bundle.cfg.class_count
    u = rng.random(d)
    truth = np.zeros(d, dtype=bool)
    accepted = []
    for c in np.flatnonzero(u < bundle.marginals):
        if np.any(bundle.excl_partners[c] & truth):
            continue
        truth |= bundle.closure[c]
        accepted.append(int(c))
    modes = {}
    for c in accepted:
        count = int(bundle.mode_counts[c])
        modes[c] = int(rng.integers(count)) if count > 1 else 0
    return truth, accepted, modes


def _draw_features(rng: np.random.Generator, bundle: _Bundle, accepted, modes):
    """Blend the prototypes of the active modes; the rarest seed dominates."""
    k = bundle.cfg.feature_dim
    base = np.zeros(k)
    if accepted:
        dominant = accepted[-1]  # highest index = rarest class
        if len(accepted) == 1:
            base = bundle.spec.modes[dominant][modes[dominant]].prototype.copy()
        else:
            w_rest = (1.0 - bundle.cfg.dominant_weight) / (len(accepted) - 1)
            for c in accepted:
                w = bundle.cfg.dominant_weight if c == dominant else w_rest
                base = base + w * bundle.spec.modes[c][modes[c]].prototype
    return base + rng.standard_normal(k) * bundle.cfg.feature_noise


def _corrupt_labels(rng: np.random.Generator, bundle: _Bundle, truth, accepted, modes):
    """Apply misses then confusion swaps; injection happens separately."""
    noisy = truth.copy()
    if bundle.any_miss:
        drop = rng.random(truth.size) < bundle.miss
        noisy &= ~(truth & drop)
    for edge in bundle.spec.confusion:
        if not noisy[edge.src]:
            continue
        if edge.mode is not None and modes.get(edge.src) != edge.mode:
            continue
        if rng.random() < edge.prob:
            noisy[edge.src] = False
            noisy[edge.dst] = True
    return noisy


def _injection_probs(bundle: _Bundle, truth, accepted, modes, noisy):
    """Pre-scale injection probability per class; only (truth=0, noisy=0)
    slots are eligible."""
    probs = bundle.base_fp.copy()
    for c in accepted:
        for t, p in bundle.spec.modes[c][modes[c]].fp_targets:
            probs[t] += p
    return probs * (~truth & ~noisy)


def _draw_sample(sample_id: int, wants_verified: bool, bundle: _Bundle) -> Sample:
    rng = _rng(bundle.seed, _SAMPLE_TAG, sample_id)
    cfg = bundle.cfg
    truth, accepted, modes = _draw_truth(rng, bundle)
    features = _draw_features(rng, bundle, accepted, modes)
    noisy = _corrupt_labels(rng, bundle, truth, accepted, modes)
    probs = np.minimum(_injection_probs(bundle, truth, accepted, modes, noisy) * bundle.scale,
                       cfg.injection_cap)
    noisy = noisy | (rng.random(cfg.class_count) < probs)
    verified = None
    mask = None
    if wants_verified:
        mask = noisy.copy()
        if cfg.verify_negatives > 0:
            pool = np.flatnonzero(~mask)
            if pool.size:
                picks = rng.choice(pool, size=min(cfg.verify_negatives, pool.size), replace=False)
                mask[picks] = True
        verified = truth.astype(np.uint8)
        mask = mask.astype(np.uint8)
    return Sample(
        sample_id=sample_id,
        features=features,
        noisy=noisy.astype(np.uint8),
        verified=verified,
        verified_mask=mask,
    )


def _calibrate_injection_scale(bundle: _Bundle) -> float:
    """Pilot-simulate misses and swaps, then solve for the scale that makes
    the expected injected mass hit the target global false-positive rate."""
    cfg = bundle.cfg
    rho = cfg.target_fp_rate
    if rho <= 0.0:
        return 0.0
    n = cfg.calibration_samples
    kept_tp = 0
    swap_fp = 0
    prob_chunks = []
    for i in range(n):
        rng = _rng(bundle.seed, _PILOT_TAG, i)
        truth, accepted, modes = _draw_truth(rng, bundle)
        noisy = _corrupt_labels(rng, bundle, truth, accepted, modes)
        kept_tp += int(np.count_nonzero(noisy & truth))
        swap_fp += int(np.count_nonzero(noisy & ~truth))
        probs = _injection_probs(bundle, truth, accepted, modes, noisy)
        prob_chunks.append(probs[probs > 0])
    per_sample_target = (rho * kept_tp / (1.0 - rho) - swap_fp) / n
    if per_sample_target <= 0.0:
        if swap_fp > rho * (kept_tp + swap_fp):
            logger.warning(
                "confusion swaps alone exceed the target false-positive rate; "
                "injection disabled"
            )
        return 0.0
    pool = np.concatenate(prob_chunks) if prob_chunks else np.zeros(0)

    def expected(scale: float) -> float:
        return float(np.minimum(pool * scale, cfg.injection_cap).sum()) / n

    if expected(_MAX_INJECTION_SCALE) < per_sample_target:
        logger.warning("target false-positive rate unreachable; using maximum injection scale")
        return _MAX_INJECTION_SCALE
    lo, hi = 0.0, _MAX_INJECTION_SCALE
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if expected(mid) < per_sample_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_dataset(cfg: GeneratorConfig, seed: int) -> DatasetSplit:
    """Build the three splits for one seed; bitwise deterministic."""
    cfg.validate()
    if seed < 0:
        raise ConfigurationError(f"seed must be >= 0, got {seed}")
    vocab, marginals, spec = build_structure(cfg, seed)
    bundle = _Bundle(cfg, seed, marginals, spec)
    bundle.scale = _calibrate_injection_scale(bundle)
    offsets = {
        "train": 0,
        "clean": cfg.train_size,
        "holdout": cfg.train_size + cfg.clean_size,
    }
    sizes = {"train": cfg.train_size, "clean": cfg.clean_size, "holdout": cfg.holdout_size}
    pools = {}
    for name in SPLIT_NAMES:
        wants_verified = name != "train"
        start = offsets[name]
        pools[name] = [
            _draw_sample(start + i, wants_verified, bundle) for i in range(sizes[name])
        ]
    split = DatasetSplit(
        vocabulary=vocab,
        feature_dim=cfg.feature_dim,
        train=pools["train"],
        clean=pools["clean"],
        holdout=pools["holdout"],
    )
    logger.info(
        "generated dataset: %d train / %d clean / %d holdout, fp rate %.4f",
        cfg.train_size,
        cfg.clean_size,
        cfg.holdout_size,
        false_positive_rate(split),
    )
    return split


def annotation_quality(split: DatasetSplit) -> np.ndarray:
    """Fraction of noisy annotations confirmed by ground truth, per class,
    over the verified pools; NaN marks classes with no annotations there."""
    verified = split.verified_samples()
    if not verified:
        raise ConfigurationError("annotation_quality needs verified samples")
    noisy = np.stack([s.noisy for s in verified]).astype(np.float64)
    truth = np.stack([s.verified for s in verified]).astype(np.float64)
    annotated = noisy.sum(axis=0)
    confirmed = (noisy * truth).sum(axis=0)
    with np.errstate(invalid="ignore"):
        return np.where(annotated > 0, confirmed / np.maximum(annotated, 1.0), np.nan)


def false_positive_rate(split: DatasetSplit) -> float:
    """Pooled fraction of noisy annotations that ground truth rejects."""
    verified = split.verified_samples()
    if not verified:
        raise ConfigurationError("false_positive_rate needs verified samples")
    annotated = 0
    confirmed = 0
    for s in verified:
        annotated += int(s.noisy.sum())
        confirmed += int(np.count_nonzero(s.noisy & s.verified))
    if annotated == 0:
        raise ConfigurationError("false_positive_rate: no annotations in verified pools")
    return 1.0 - confirmed / annotated


def class_frequency(split: DatasetSplit) -> np.ndarray:
    """Noisy annotation count per class over the train pool."""
    counts = np.zeros(split.vocabulary.class_count, dtype=np.int64)
    for s in split.train:
        counts += s.noisy
    return counts


def save_dataset(split: DatasetSplit, path) -> None:
    """One JSON header line, then one JSON record per sample (label sets are
    stored as sorted index lists)."""
    header = {
        "format_version": DATASET_FORMAT_VERSION,
        "class_count": split.vocabulary.class_count,
        "feature_dim": split.feature_dim,
        "vocabulary": list(split.vocabulary.names),
        "groups": list(split.vocabulary.groups) if split.vocabulary.groups else None,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for name in SPLIT_NAMES:
            for s in getattr(split, name):
                record = {
                    "id": s.sample_id,
                    "split": name,
                    "features": [float(x) for x in s.features],
                    "y": [int(i) for i in np.flatnonzero(s.noisy)],
                }
                if name != "train":
                    record["v"] = [int(i) for i in np.flatnonzero(s.verified)]
                    record["mask"] = [int(i) for i in np.flatnonzero(s.verified_mask)]
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")


_RECORD_KEYS = {"id", "split", "features", "y", "v", "mask"}


def _indices_to_dense(values, d, line_no, field_name):
    arr = np.zeros(d, dtype=np.uint8)
    if not isinstance(values, list):
        raise FormatError(f"line {line_no}: field '{field_name}' must be a list of indices")
    for v in values:
        if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < d:
            raise FormatError(
                f"line {line_no}: field '{field_name}' has invalid class index {v!r}"
            )
        if arr[v]:
            raise FormatError(f"line {line_no}: field '{field_name}' repeats index {v}")
        arr[v] = 1
    return arr


def load_dataset(path) -> DatasetSplit:
    """Inverse of save_dataset; every format violation names its line."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("line 1: empty file, expected a header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"line 1: invalid JSON header: {exc}") from None
    if not isinstance(header, dict):
        raise FormatError("line 1: header must be a JSON object")
    version = header.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise FormatError(
            f"line 1: unsupported format version {version!r} "
            f"(expected {DATASET_FORMAT_VERSION})"
        )
    for key in ("class_count", "feature_dim", "vocabulary"):
        if key not in header:
            raise FormatError(f"line 1: header is missing '{key}'")
    d = header["class_count"]
    k = header["feature_dim"]
    names = header["vocabulary"]
    if not isinstance(names, list) or len(names) != d:
        raise FormatError(f"line 1: vocabulary must list exactly {d} names")
    groups = header.get("groups")
    vocab = Vocabulary(names=tuple(names), groups=tuple(groups) if groups else None)
    pools = {name: [] for name in SPLIT_NAMES}
    seen_ids = set()
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise FormatError(f"line {line_no}: blank line inside record block")
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {line_no}: invalid JSON: {exc}") from None
        if not isinstance(record, dict):
            raise FormatError(f"line {line_no}: record must be a JSON object")
        unknown = set(record) - _RECORD_KEYS
        if unknown:
            raise FormatError(f"line {line_no}: unknown field '{sorted(unknown)[0]}'")
        for key in ("id", "split", "features", "y"):
            if key not in record:
                raise FormatError(f"line {line_no}: record is missing '{key}'")
        sid = record["id"]
        if not isinstance(sid, int) or isinstance(sid, bool):
            raise FormatError(f"line {line_no}: id must be an integer")
        if sid in seen_ids:
            raise FormatError(f"line {line_no}: duplicate sample id {sid}")
        seen_ids.add(sid)
        split_name = record["split"]
        if split_name not in SPLIT_NAMES:
            raise FormatError(f"line {line_no} (id {sid}): unknown split {split_name!r}")
        feats = record["features"]
        if not isinstance(feats, list) or len(feats) != k:
            raise FormatError(
                f"line {line_no} (id {sid}): features must list exactly {k} values"
            )
        try:
            features = np.array([float(x) for x in feats], dtype=np.float64)
        except (TypeError, ValueError):
            raise FormatError(f"line {line_no} (id {sid}): non-numeric feature value") from None
        if not np.all(np.isfinite(features)):
            raise FormatError(f"line {line_no} (id {sid}): non-finite feature value")
        noisy = _indices_to_dense(record["y"], d, line_no, "y")
        verified = mask = None
        if split_name == "train":
            if "v" in record or "mask" in record:
                raise FormatError(
                    f"line {line_no} (id {sid}): train records must not carry "
                    f"verified labels"
                )
        else:
            if "v" not in record:
                raise FormatError(f"line {line_no} (id {sid}): missing ground truth 'v'")
            if "mask" not in record:
                raise FormatError(f"line {line_no} (id {sid}): missing verification mask")
            verified = _indices_to_dense(record["v"], d, line_no, "v")
            mask = _indices_to_dense(record["mask"], d, line_no, "mask")
        pools[split_name].append(
            Sample(
                sample_id=sid,
                features=features,
                noisy=noisy,
                verified=verified,
                verified_mask=mask,
            )
        )
    return DatasetSplit(
        vocabulary=vocab,
        feature_dim=k,
        train=pools["train"],
        clean=pools["clean"],
        holdout=pools["holdout"],
    )
