"""Central finite-difference gradient oracle used across the test suite.

Independent of the engine's backward pass: gradients are estimated by
re-running the forward computation with perturbed inputs.
"""

from __future__ import annotations

import numpy as np

from pxafkit.nn import tensor as T


def numeric_grad(eval_loss, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``eval_loss()`` w.r.t. every element of x."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = eval_loss()
        x[idx] = orig - h
        fm = eval_loss()
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(1e-8, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale


def check_gradients(build, arrays: dict[str, np.ndarray], tol: float = 1e-4,
                    h: float = 1e-5, abs_tol: float = 1e-7) -> float:
    """Compare engine gradients of ``build(**tensors)`` against the oracle.

    ``build`` maps named Tensors to a scalar loss Tensor. Returns the
    worst relative error over all inputs; asserts it is below ``tol``.
    ``abs_tol`` covers gradients at the finite-difference noise floor,
    where a relative comparison is meaningless.
    """
    tensors = {k: T.Tensor(v, requires_grad=True) for k, v in arrays.items()}
    loss = build(**tensors)
    loss.backward()

    def eval_loss():
        with T.no_grad():
            return build(**tensors).item()

    worst = 0.0
    for name, t in tensors.items():
        assert t.grad is not None, f"no gradient reached input {name!r}"
        fd = numeric_grad(eval_loss, t.data, h=h)
        if float(np.max(np.abs(t.grad - fd))) < abs_tol:
            continue
        err = rel_err(t.grad, fd)
        assert err < tol, f"gradient mismatch for {name!r}: rel err {err:.3e}"
        worst = max(worst, err)
    return worst
