"""Small dense linear algebra and activation kernels.

Everything is float64; matrices here are tiny (at most a few dozen rows),
so clarity wins over speed.
"""

from __future__ import annotations

import numpy as np

PIVOT_TOL = 1e-13
DEFAULT_RIDGE = 1e-10


class DimensionError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    pass


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def matvec(A, x) -> np.ndarray:
    A = as_tensor(A)
    x = as_tensor(x)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise DimensionError(f"cannot multiply {A.shape} by {x.shape}")
    return A @ x


def solve(A, B) -> np.ndarray:
    """Solve ``A X = B`` by Gaussian elimination with partial pivoting."""
    A = as_tensor(A).copy()
    B = as_tensor(B).copy()
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n or B.shape[0] != n:
        raise DimensionError(f"bad system shapes {A.shape}, {B.shape}")
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) < PIVOT_TOL:
            raise SingularMatrixError(f"pivot {A[p, k]:.3e} below {PIVOT_TOL:g} at column {k}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            B[[k, p]] = B[[p, k]]
        m = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(m, A[k, k:])
        B[k + 1:] -= np.outer(m, B[k])
    X = np.empty_like(B)
    for k in range(n - 1, -1, -1):
        X[k] = (B[k] - A[k, k + 1:] @ X[k + 1:]) / A[k, k]
    return X[:, 0] if vector else X


def pinv_left(A, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Left pseudo-inverse ``(A^T A + ridge I)^{-1} A^T`` of a tall matrix."""
    A = as_tensor(A)
    if A.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {A.shape}")
    m, n = A.shape
    if m < n:
        raise DimensionError(f"left inverse needs rows >= cols, got {A.shape}")
    gram = A.T @ A + ridge * np.eye(n)
    return solve(gram, A.T)


def elu(x):
    x = as_tensor(x)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    x = as_tensor(x)
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def tanh(x):
    return np.tanh(as_tensor(x))


def tanh_grad(x):
    return 1.0 - np.tanh(as_tensor(x)) ** 2


def identity(x):
    return as_tensor(x)


def identity_grad(x):
    return np.ones_like(as_tensor(x))


ACTIVATIONS = {
    "elu": (elu, elu_grad),
    "tanh": (tanh, tanh_grad),
    "none": (identity, identity_grad),
}
