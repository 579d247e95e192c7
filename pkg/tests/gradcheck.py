"""Central finite-difference oracle, independent of the autodiff path."""
import numpy as np


def numeric_grad(f, tensor, h=1e-5):
    """d f() / d tensor by central differences, perturbing ``tensor.data`` in place."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        g[i] = (fp - fm) / (2 * h)
    return grad


def rel_error(analytic, numeric, floor=1e-6):
    """Norm-based relative error; ``floor`` keeps all-zero gradients comparable."""
    a, n = np.asarray(analytic).ravel(), np.asarray(numeric).ravel()
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))
