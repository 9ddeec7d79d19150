"""
Weighted against plain softmax loss on a skewed corpus
======================================================

Five texture classes with 1000, 100, 50, 25 and 10 images. Both arms share
the seed, the initial weights and the batch order; only the loss differs.
This reduced version uses 32x32 images and runs in under a minute.
"""

from imbalance_cnn import TrainConfig, compare_losses
from imbalance_cnn.synthetic import texture_dataset

data = texture_dataset(size=(32, 32), seed=0)
print("training sizes per class:", data.train_sizes())

config = TrainConfig(input_size=(32, 32), learning_rate=1e-3, epochs=8)
arms, summary = compare_losses(config, data, n_seeds=2)

for arm in ("weighted", "unweighted"):
    s = summary[arm]
    print(f"{arm:10s} val error {s['final_val_error_mean']:.4f}  "
          f"minority recall {s['minority_recall_mean']:.3f}")

# per-epoch validation error of the first seed
for arm, runs in arms.items():
    print(arm, [round(e, 3) for e in runs[0].val_error])
