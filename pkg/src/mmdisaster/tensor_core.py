"""Dense float64 matrix helpers, seeded RNG and the finite-difference oracle.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64; vectors
are carried as 1 x n rows. Every helper validates shapes and returns a new
array, so callers may treat results as immutable values.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ShapeError

Matrix = np.ndarray


def as_matrix(data) -> Matrix:
    """Coerce ``data`` to a 2-D float64 array (1-D input becomes a row)."""
    m = np.array(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def _check2d(m: Matrix, name: str) -> None:
    if not isinstance(m, np.ndarray) or m.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D array, got {getattr(m, 'shape', type(m))}")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Seeded PCG64 generator; ``stream`` ids derive independent substreams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *stream])))


def matmul(a: Matrix, b: Matrix) -> Matrix:
    _check2d(a, "a")
    _check2d(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def transpose(m: Matrix) -> Matrix:
    _check2d(m, "m")
    return m.T.copy()


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    _check2d(a, "a")
    _check2d(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"elementwise product needs equal shapes, got {a.shape} and {b.shape}")
    return a * b


def add(m: Matrix, bias: Matrix) -> Matrix:
    """Add a 1 x cols bias row to every row of ``m`` (or an equal-shape matrix)."""
    _check2d(m, "m")
    _check2d(bias, "bias")
    if bias.shape != m.shape and bias.shape != (1, m.shape[1]):
        raise ShapeError(f"cannot add {bias.shape} to {m.shape}")
    return m + bias


def scale(m: Matrix, factor: float) -> Matrix:
    _check2d(m, "m")
    return m * float(factor)


def mean_rows(m: Matrix) -> Matrix:
    """Column-wise mean, shape 1 x cols."""
    _check2d(m, "m")
    if m.shape[0] == 0:
        raise ShapeError("mean of an empty matrix")
    return m.mean(axis=0, keepdims=True)


def l2_normalize_row(m: Matrix) -> Matrix:
    """Scale each row to unit L2 norm; all-zero rows stay zero."""
    _check2d(m, "m")
    norms = np.sqrt((m * m).sum(axis=1, keepdims=True))
    safe = np.where(norms > 0.0, norms, 1.0)
    return m / safe


def softmax_rows(m: Matrix) -> Matrix:
    _check2d(m, "m")
    if m.size == 0:
        raise ShapeError("softmax of an empty matrix")
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


_SIG_LO = float(np.finfo(np.float64).smallest_subnormal)
_SIG_HI = float(np.nextafter(1.0, 0.0))


def sigmoid_elem(m: Matrix) -> Matrix:
    """Logistic function, evaluated without overflow for large |x|.

    Results are clipped to the open interval (0, 1): in float64 the exact
    value rounds to 1.0 once x exceeds about 37.
    """
    m = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return np.clip(out, _SIG_LO, _SIG_HI)


def xavier_init(rows: int, cols: int, rng: np.random.Generator) -> Matrix:
    """Glorot-uniform matrix in [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"xavier_init needs positive dims, got {rows}x{cols}")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def finite_diff_grad(loss_fn: Callable[[Matrix], float], at: Matrix, eps: float = 1e-5) -> Matrix:
    """Central-difference gradient of a scalar function of one matrix.

    ``loss_fn`` receives a perturbed copy of ``at``; ``at`` itself is never
    modified.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x = np.array(at, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        f_plus = float(loss_fn(x.copy()))
        flat[idx] = orig - eps
        f_minus = float(loss_fn(x.copy()))
        flat[idx] = orig
        gflat[idx] = (f_plus - f_minus) / (2.0 * eps)
    return grad
