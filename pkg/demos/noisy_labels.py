"""Rank training points by value and see how many flipped labels sit at the bottom."""

from weightedshap import NoisyLabelConfig, eval_noisy_labels
from weightedshap.datasets import make_blobs

for seed in range(3):
    data = make_blobs(n_train=60, seed=seed)
    cfg = NoisyLabelConfig(alpha=16, beta=1, K=5, seed=seed)
    line = []
    for valuator in ("exact", "random"):
        rep = eval_noisy_labels(data, 0.2, valuator, cfg)
        line.append(f"{valuator} AUC {rep.auc:.3f}")
    print(f"seed {seed}: " + ", ".join(line))
