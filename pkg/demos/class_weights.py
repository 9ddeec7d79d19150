"""
Class weights for an imbalanced malware corpus
==============================================

Every class gets a weight ``1 + (S_max - S_k) / (beta * S_max)``. The largest
class keeps weight 1 and the rarest gets the most, but never more than
``1 + 1/beta``.
"""

import numpy as np

from imbalance_cnn import class_weights
from imbalance_cnn.dataset import malimg_fixture

names, sizes = zip(*malimg_fixture())
sizes = np.array(sizes)

# the default beta of 20 keeps every weight within 5% of one
w = class_weights(sizes, 20)
order = np.argsort(sizes)[::-1]
for i in order:
    print(f"{names[i]:24s} {sizes[i]:5d}  {w[i]:.6f}")

# smaller beta spreads the weights further apart
for beta in (5, 10, 20, 40, 80):
    w = class_weights(sizes, beta)
    print(f"beta={beta:3d}  max weight {w.max():.4f}  bound {1 + 1 / beta:.4f}")

# with every class the same size the loss is left alone
print(class_weights([50, 50, 50], 20))
