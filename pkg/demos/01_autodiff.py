"""A tour of the tape-based autodiff core.

Everything in this package trains through one mechanism: float64 numpy
arrays wrapped in Tensor, ops recorded on a Tape, gradients pushed back in
reverse insertion order.
"""

import numpy as np

from mtctc.tensor import Tape, Tensor, backward, log_softmax_rows, matmul, sum_, tanh

rng = np.random.default_rng(0)

# Leaves are the only tensors whose .grad survives backward().
w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
x = Tensor(rng.normal(size=(4, 3)))

with Tape():
    hidden = tanh(matmul(x, w))
    loss = sum_(hidden * hidden)
    backward(loss)

print("loss:", loss.item())
print("dloss/dw:\n", w.grad)

# The same graph evaluated twice accumulates, like any reverse-mode engine.
w.grad = None
with Tape():
    backward(sum_(matmul(x, w)))
with Tape():
    backward(sum_(matmul(x, w)))
print("\naccumulated twice, grad == 2 * column sums of x:")
print(np.allclose(w.grad, 2 * np.tile(x.data.sum(axis=0)[:, None], (1, 2))))

# Check any gradient against central finite differences.
def fd(f, tensor, i, j, step=1e-6):
    orig = tensor.data[i, j]
    tensor.data[i, j] = orig + step
    up = f()
    tensor.data[i, j] = orig - step
    down = f()
    tensor.data[i, j] = orig
    return (up - down) / (2 * step)

w.grad = None
with Tape():
    loss = sum_(log_softmax_rows(matmul(x, w)))
    backward(loss)
numeric = fd(lambda: sum_(log_softmax_rows(matmul(x, w))).item(), w, 1, 0)
print("\nanalytic vs numeric at w[1,0]:", w.grad[1, 0], "vs", numeric)
