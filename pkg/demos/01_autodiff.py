"""Walk through the reverse-mode autodiff engine.

Builds a small computation, backpropagates, and checks one gradient
against central finite differences by hand.
"""

import numpy as np

from mtdta import tensor as T

# A tiny expression: loss = mean(relu(x @ w + b) ** approximated-by mul)
rng = np.random.default_rng(0)
x = T.Tensor(rng.standard_normal((4, 3)), requires_grad=True)
w = T.Tensor(rng.standard_normal((3, 2)), requires_grad=True)
b = T.Tensor(np.zeros((1, 2)), requires_grad=True)

h = (x @ w + b).relu()
loss = (h * h).mean()
print(f"loss = {loss.item():.6f}")

# One call walks the DAG in reverse topological order.
T.backward(loss)
print("d loss / d w:")
print(w.grad)

# Verify a single entry with central differences.
eps = 1e-6
w_plus = w.data.copy()
w_plus[0, 0] += eps
w_minus = w.data.copy()
w_minus[0, 0] -= eps


def value(wd):
    h = (x.data @ wd + b.data)
    h = np.maximum(h, 0.0)
    return float(np.mean(h * h))


numeric = (value(w_plus) - value(w_minus)) / (2 * eps)
print(f"analytic {w.grad[0, 0]:.8f}  numeric {numeric:.8f}")

# The built-in checker does this for every entry of every input.
err = T.grad_check(lambda ts: ((ts[0] @ ts[1]).relu() * (ts[0] @ ts[1])).mean(),
                   [x.data, w.data], 1e-5)
print(f"grad_check max relative error: {err:.2e}")
