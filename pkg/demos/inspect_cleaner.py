"""Train the cleaning network on a toy dataset and show what it fixes.

Prints holdout rows where the cleaned labels differ most from the raw
annotations, marking each changed class as a good or bad edit against the
ground truth.
"""

import argparse
from dataclasses import replace

import numpy as np

from noisy_label_lab import datagen as dg, model as md, training as tr
from noisy_label_lab.config import build_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rows", type=int, default=8, help="how many rows to show")
    args = ap.parse_args()

    cfg = build_config({
        "seed": args.seed,
        "dataset": {
            "class_count": 40, "feature_dim": 16, "train_size": 3000,
            "clean_size": 300, "holdout_size": 900, "calibration_samples": 3000,
            "implication_count": 12, "exclusion_count": 4, "confusion_count": 10,
        },
        "train": {"batch_size": 128, "max_steps": 1500,
                  "variants": {"ours_pretrained": {"pretrain_steps": 800}}},
    })
    split = dg.generate_dataset(cfg.dataset, cfg.seed)
    dims = cfg.model.dims(split.feature_dim, split.vocabulary.class_count)

    print("training baseline, then the pretrained cleaner...")
    base, _ = tr.train(split, cfg.train_config("baseline"), dims=dims)
    params, _ = tr.train(
        split, cfg.train_config("ours_pretrained"), dims=dims, start_params=base
    )

    rows = split.holdout
    feats = np.stack([s.features for s in rows])
    noisy = np.stack([s.noisy for s in rows]).astype(np.float64)
    emb = md.features(params, feats)
    cleaned = md.clean_labels(params, noisy, emb).data

    # rank rows by how much the cleaner edited them
    edit = np.abs(cleaned - noisy).sum(axis=1)
    order = np.argsort(-edit)[: args.rows]
    names = split.vocabulary.names
    for i in order:
        truth = rows[i].verified
        print(f"\nsample {rows[i].sample_id} (total edit {edit[i]:.2f})")
        for c in np.flatnonzero(np.abs(cleaned[i] - noisy[i]) > 0.25):
            kind = "drop" if cleaned[i, c] < noisy[i, c] else "add"
            good = (cleaned[i, c] > 0.5) == bool(truth[c])
            mark = "fixed" if good else "wrong"
            print(f"  {kind:<4} {names[c]:<12} noisy={int(noisy[i, c])} "
                  f"cleaned={cleaned[i, c]:.2f} truth={int(truth[c])} [{mark}]")


if __name__ == "__main__":
    main()
