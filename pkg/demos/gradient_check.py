"""
Checking backpropagation with finite differences
================================================

Every analytic gradient is compared with a central difference. Errors are
measured relative to the largest gradient in the same tensor.
"""

import numpy as np

from imbalance_cnn import build_preset, class_weights, finite_diff_check
from imbalance_cnn.loss import weighted_softmax_loss

rng = np.random.default_rng(1)
net = build_preset("vgg_micro", 3, (8, 8), seed=1)

# nonzero shifts move activations away from the ReLU kink at zero
for _, _, name, value in net.named_params():
    if name in ("b", "beta"):
        value[...] = rng.normal(0.0, 0.1, value.shape)

x = rng.normal(size=(4, 1, 8, 8))
y = np.array([1, 2, 3, 3])
w = class_weights([300, 30, 10], 20)


def loss(logits):
    out = weighted_softmax_loss(logits, y, w)
    return out.loss, out.grad_logits


report = finite_diff_check(net, x, tolerance=1e-4, loss=loss)
print(report)
