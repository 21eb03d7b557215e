"""Dense complex linear algebra helpers and random device generators.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidDimensionError

__all__ = [
    "as_complex_matrix",
    "haar_random_unitary",
    "random_bogoliubov",
    "is_unitary",
    "unitarity_residual",
    "frobenius_distance",
    "polar_unitary",
]

DEFAULT_TOL = 1e-10


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_complex_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce ``m`` to a finite 2-d complex128 array."""
    arr = np.array(m, dtype=np.complex128)
    if arr.ndim != 2:
        raise InvalidDimensionError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _require_square(m: np.ndarray, name: str = "matrix") -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidDimensionError(f"{name} must be square, got shape {m.shape}")


def haar_random_unitary(n: int, seed=None) -> np.ndarray:
    r"""Haar-distributed :math:`n\times n` unitary.

    A complex Ginibre matrix is QR-factorised and the columns of ``Q`` are
    rephased by the diagonal of ``R`` so the result is uniform on U(n).

    Args:
        n (int): number of modes
        seed: integer seed or an existing ``numpy.random.Generator``

    Returns:
        array: unitary matrix of shape ``(n, n)``
    """
    if n < 1:
        raise InvalidDimensionError(f"mode count must be >= 1, got {n}")
    rng = _rng(seed)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_bogoliubov(n: int, max_squeeze: float, seed=None) -> tuple[np.ndarray, np.ndarray]:
    r"""Random physical Bogoliubov pair ``(U, V)`` in Bloch-Messiah form.

    ``U = W1 cosh(R) W2`` and ``V = W1 sinh(R) W2^*`` with Haar ``W1, W2`` and
    squeezing parameters drawn uniformly from ``[0, max_squeeze]``. The pair
    satisfies :math:`UU^\dagger - VV^\dagger = 1` and :math:`UV^T = (UV^T)^T`.
    """
    if n < 1:
        raise InvalidDimensionError(f"mode count must be >= 1, got {n}")
    if not np.isfinite(max_squeeze) or max_squeeze < 0:
        raise ValueError(f"max_squeeze must be finite and non-negative, got {max_squeeze}")
    rng = _rng(seed)
    w1 = haar_random_unitary(n, rng)
    w2 = haar_random_unitary(n, rng)
    r = rng.uniform(0.0, max_squeeze, size=n)
    u = (w1 * np.cosh(r)) @ w2
    v = (w1 * np.sinh(r)) @ w2.conj()
    return u, v


def unitarity_residual(m) -> float:
    """Largest entry of ``|m m^dagger - I|``."""
    m = np.asarray(m, dtype=np.complex128)
    _require_square(m)
    return float(np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0]))))


def is_unitary(m, tol: float = DEFAULT_TOL) -> bool:
    return unitarity_residual(m) <= tol


def frobenius_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise InvalidDimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2)))


def polar_unitary(m) -> np.ndarray:
    """Closest unitary to ``m`` in Frobenius norm (unitary polar factor).

    Never applied implicitly by the reconstruction routines.
    """
    m = np.asarray(m, dtype=np.complex128)
    _require_square(m)
    w, _, vh = np.linalg.svd(m)
    return w @ vh
