"""
Agreement metrics and their losses
==================================

"""

# CCC punishes both decorrelation and shifts in mean or scale.
import numpy as np
from affectfusion import ndcore as nd
from affectfusion.objectives import ccc, ccc_loss, f1_loss, one_hot, pcc

rng = np.random.default_rng(1)
y = np.sin(np.linspace(0, 6, 200))
print("pcc(y + 0.5, y) =", pcc(y + 0.5, y), "  ccc(y + 0.5, y) =", ccc(y + 0.5, y))
print("closed form      ", 2 * y.var() / (2 * y.var() + 0.25))

# As a loss, 1 - CCC is differentiable in the predictions.
pred = nd.Tensor(y * 0.3 + rng.normal(scale=0.1, size=200), requires_grad=True)
loss = ccc_loss(pred, y)
nd.backward(loss)
print("ccc loss", loss.item(), " grad norm", np.linalg.norm(pred.grad))

# Soft macro-F1 reads counts off probabilities; one-hot input gives hard F1.
labels = rng.integers(0, 8, 64)
logits = nd.Tensor(one_hot(labels, 8) * 4 + rng.normal(size=(64, 8)), requires_grad=True)
probs = nd.softmax(logits, axis=-1)
soft = f1_loss(probs, one_hot(labels, 8))
nd.backward(soft)
print("soft F1 loss", soft.item())
