"""Central finite-difference gradient oracle shared by the test suite.

Written against plain numpy and frozen before the layers were implemented;
do not modify to make a failing gradient test pass.
"""

from __future__ import annotations

import numpy as np

from mtctc.tensor import Tape, backward, zero_grads


def finite_difference(fn, params, step: float = 1e-5):
    """Central differences of the scalar fn() w.r.t. each parameter tensor.

    fn must be a pure function of the current parameter values and must not
    be running under an active tape.
    """
    grads = []
    for p in params:
        flat = p.data.reshape(-1)
        grad = np.zeros_like(flat)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            hi = fn()
            flat[i] = saved - step
            lo = fn()
            flat[i] = saved
            grad[i] = (hi - lo) / (2.0 * step)
        grads.append(grad.reshape(p.data.shape))
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_gradients(build_loss, params, step: float = 1e-5, tol: float = 1e-4) -> float:
    """Verify tape gradients of build_loss() against finite differences.

    build_loss is called once under a fresh tape for the analytic pass and
    repeatedly (tape-free) for the numeric pass. Returns the worst relative
    error over all parameters.
    """
    zero_grads(params)
    with Tape():
        loss = build_loss()
        backward(loss)
    analytic = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    zero_grads(params)
    numeric = finite_difference(lambda: build_loss().item(), params, step=step)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        worst = max(worst, max_relative_error(a, n))
    assert worst < tol, f"gradient mismatch: max relative error {worst:.3e} >= {tol:.0e}"
    return worst
