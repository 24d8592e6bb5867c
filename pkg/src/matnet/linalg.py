"""Dense linear-algebra substrate used by every other module.

Matrices are 2-D float64 numpy arrays, vectors are 1-D. All operations
are pure: arguments are never mutated and results are fresh arrays.
"""

from __future__ import annotations

import numpy as np

# Cholesky pivots below this threshold (relative to the largest pivot)
# are treated as singular even when the factorization succeeds.
PIVOT_TOL = 1e-12

# Residual bound certified by solve(): ||a v - b||_inf <= SOLVE_RTOL * (1 + ||b||_inf).
SOLVE_RTOL = 1e-8


class ShapeError(ValueError):
    """Operands have incompatible or invalid shapes."""


class SolveFailure(ArithmeticError):
    """Linear system is not positive definite within pivot tolerance."""


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a 2-D float64 array with finite entries."""
    a = np.asarray(values, dtype=float)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {a.ndim}-D")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name} must have positive dimensions, got {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Validate and convert to a 1-D float64 array with finite entries.

    A column matrix (n, 1) is accepted and flattened.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 2 and v.shape[1] == 1:
        v = v[:, 0]
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError(f"{name} contains non-finite entries")
    return v


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D arrays."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    """Transpose of a matrix (returns a copy)."""
    return np.ascontiguousarray(a.T)


def diag(v: np.ndarray) -> np.ndarray:
    """Square matrix with v on the diagonal and zeros elsewhere."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ShapeError(f"diag expects a vector, got shape {v.shape}")
    return np.diag(v)


def augment(x: np.ndarray) -> np.ndarray:
    """Append a trailing 1 so the bias folds into the linear map."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"augment expects a vector, got shape {x.shape}")
    return np.append(x, 1.0)


def selector(l: int) -> np.ndarray:
    """The (l+1) x l block [I; 0] mapping x to the non-bias rows of augment(x).

    Its transpose strips the trailing bias entry: selector(l).T @ augment(x) == x.
    """
    if l < 1:
        raise ShapeError(f"selector width must be >= 1, got {l}")
    out = np.zeros((l + 1, l))
    out[:l, :] = np.eye(l)
    return out


def solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a @ v = b for a symmetric positive definite matrix a.

    Uses a Cholesky factorization to certify positive definiteness, then a
    direct solve. Raises SolveFailure when a is not SPD within PIVOT_TOL or
    the solution residual exceeds SOLVE_RTOL * (1 + ||b||_inf); callers in
    the damped least-squares loop respond by increasing damping.
    """
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"solve expects a square matrix, got {a.shape}")
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.shape[0] != a.shape[0]:
        raise ShapeError(f"solve rhs shape {b.shape} does not match matrix {a.shape}")
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure("matrix is not positive definite") from exc
    pivots = np.diagonal(chol) ** 2
    if pivots.min() <= PIVOT_TOL * max(1.0, pivots.max()):
        raise SolveFailure(
            f"pivot {pivots.min():.3e} below tolerance {PIVOT_TOL:.0e}"
        )
    v = np.linalg.solve(a, b)
    residual = np.abs(a @ v - b).max()
    bound = SOLVE_RTOL * (1.0 + np.abs(b).max())
    if residual > bound:
        raise SolveFailure(f"solve residual {residual:.3e} exceeds {bound:.3e}")
    return v
