"""Shared test utilities: the finite-difference gradient oracle.

The oracle perturbs raw parameter buffers and re-runs the forward
function, so it stays independent of the reverse-mode implementation it
checks.
"""

import numpy as np

from iram.tensor import backward


def finite_difference(scalar_fn, tensors, h=1e-5):
    """Central-difference gradients of scalar_fn() w.r.t. each tensor's data.

    scalar_fn must rebuild its computation from the tensors' current data
    on every call and return a plain float.
    """
    grads = []
    for t in tensors:
        flat = t.data.reshape(-1)
        grad = np.zeros(flat.size)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            upper = scalar_fn()
            flat[i] = original - h
            lower = scalar_fn()
            flat[i] = original
            grad[i] = (upper - lower) / (2.0 * h)
        grads.append(grad.reshape(t.data.shape))
    return grads


def max_relative_error(analytic, numeric, floor=1e-4):
    """Worst-case elementwise relative error; tiny entries compare absolutely."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def check_gradients(build_loss, tensors, h=1e-5, tol=1e-4):
    """Assert reverse-mode gradients of build_loss() match finite differences.

    build_loss constructs a fresh scalar Tensor from the given leaves.
    """
    loss = build_loss()
    for t in tensors:
        t.grad = None
    backward(loss)
    analytic = [np.array(t.grad) if t.grad is not None else np.zeros(t.shape) for t in tensors]
    for t in tensors:
        t.grad = None
    numeric = finite_difference(lambda: build_loss().item(), tensors, h)
    worst = max_relative_error(analytic, numeric)
    assert worst < tol, f"gradient mismatch: max relative error {worst:.3e} >= {tol}"
    return worst
