"""
Reverse-mode gradients on numpy arrays
======================================

"""

# Tensors wrap float64 arrays; leaves flagged with requires_grad collect
# gradients when backward() runs from a scalar.
import numpy as np
from affectfusion import ndcore as nd

rng = np.random.default_rng(0)
W = nd.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
x = nd.Tensor(rng.normal(size=(4, 3)))
loss = nd.sum(nd.tanh(nd.matmul(x, W)) ** 2)
nd.backward(loss)
print("loss", loss.item())
print("dL/dW\n", W.grad)

# The same gradient from central differences, via grad_check.
def objective():
    return nd.sum(nd.tanh(nd.matmul(x, W)) ** 2)

report = nd.grad_check(objective, [W])
print("max relative error", report.max_rel_err, "passed", report.passed)

# An LSTM cell is an op like any other.
h = 5
params = {k: nd.Tensor(rng.normal(scale=0.3, size=s), requires_grad=True)
          for k, s in {"W": (3, 4 * h), "U": (h, 4 * h), "b": (4 * h,)}.items()}
state = nd.lstm_cell(x, nd.Tensor(np.zeros((4, h))), nd.Tensor(np.zeros((4, h))),
                     params["W"], params["U"], params["b"])
print("hidden state shape", state[0].shape)
