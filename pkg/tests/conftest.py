import numpy as np
import pytest

from priorforge.autodiff import Tensor


def numeric_grad(fn, arrays, wrt, h=1e-5):
    """Central finite differences of the scalar fn w.r.t. arrays[wrt]."""
    base = [a.copy() for a in arrays]
    g = np.zeros_like(base[wrt])
    it = np.nditer(base[wrt], flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        plus = [a.copy() for a in base]
        minus = [a.copy() for a in base]
        plus[wrt][idx] += h
        minus[wrt][idx] -= h
        g[idx] = (fn(*plus) - fn(*minus)) / (2 * h)
    return g


def gradcheck(build, arrays, tol=1e-5, h=1e-5):
    """Compare backward() gradients against finite differences.

    ``build`` maps Tensors (one per array, all requires_grad) to a scalar
    Tensor. Relative error uses the gradient norms so that near-zero entries
    do not inflate it.
    """
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    loss = build(*tensors)
    loss.backward()

    def scalar(*arrs):
        return build(*[Tensor(a, requires_grad=True) for a in arrs]).item()

    for i, t in enumerate(tensors):
        num = numeric_grad(scalar, arrays, i, h=h)
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        denom = max(np.linalg.norm(num), np.linalg.norm(ana), 1e-8)
        rel = np.linalg.norm(num - ana) / denom
        assert rel < tol, f"input {i}: rel grad error {rel:.3g} >= {tol}"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
