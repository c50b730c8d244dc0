"""
Reverse-mode gradients on numpy arrays
=======================================

Every model in the package runs on a small tape-based autodiff engine.
This script builds a tiny two-layer network by hand, backpropagates a loss
and checks the tape against central differences.
"""

import numpy as np

from feta import tensor as T

rng = np.random.default_rng(0)

# Leaves created with ``parameter`` collect gradients; plain arrays do not.
X = rng.normal(size=(5, 3))
W1 = T.parameter(rng.normal(size=(3, 4)))
W2 = T.parameter(rng.normal(size=(4, 2)))
labels = np.array([0, 1, 1, 0, 1])

def loss_fn():
    h = T.relu(T.matmul(X, W1))
    logp = T.log_softmax_rows(T.matmul(h, W2))
    picked = logp * np.eye(2)[labels]
    return T.sum(picked) * (-1.0 / len(labels))

loss = loss_fn()
T.backward(loss)
print("loss", loss.item())
print("dL/dW2\n", W2.grad)

# The same function evaluated with perturbed leaves gives the numeric
# gradient; the worst relative disagreement should sit near round-off.
print("finite-difference check", T.finite_diff_check(loss_fn, [W1, W2]))

# Batched leading axes broadcast through every op, including matmul.
A = T.parameter(rng.normal(size=(3, 4, 4)))
v = T.sum(T.matmul(A, A))
T.backward(v)
print("batched grad shape", A.grad.shape)
