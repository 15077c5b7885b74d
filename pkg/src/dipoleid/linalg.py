"""Dense Hermitian linear algebra for small quantum systems.

Operators are plain ``(N, N)`` complex arrays and states are ``(N,)``
complex arrays. Exponentials go through an eigendecomposition, which is
exact for Hermitian input and cheap at the sizes used here (N of a few
to a few tens).
"""
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "SpectralDecomposition",
    "make_hermitian",
    "eigendecompose",
    "expi_scale",
    "random_hermitian_basis",
    "hermitian_to_real",
    "real_to_hermitian",
    "combine",
    "inner",
    "basis_state",
]


class SpectralDecomposition(NamedTuple):
    """Eigenpairs of a Hermitian operator, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def expi(self, s):
        """Return ``exp(-1j * s * op)``."""
        return expi_scale(self, s)

    def reconstruct(self):
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.conj().T


def _asymmetry(a):
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def make_hermitian(raw, tol=1e-8, return_asymmetry=False):
    """Symmetrize ``raw`` into ``(raw + raw^H) / 2``.

    Args:
        raw: square complex (or real) matrix, at least 2x2.
        tol: largest tolerated ``max|raw - raw^H|``; anything larger is
            treated as corrupted input. ``None`` disables the check.
        return_asymmetry: also return the asymmetry that was removed.

    Raises:
        ValueError: non-square input, ``N < 2``, non-finite entries, or
            asymmetry above ``tol``.
    """
    a = np.array(raw, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 2:
        raise ValueError("operators must be at least 2x2")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    asym = _asymmetry(a)
    if tol is not None and asym > tol:
        raise ValueError(f"matrix asymmetry {asym:.3e} exceeds tolerance {tol:.1e}")
    h = 0.5 * (a + a.conj().T)
    if return_asymmetry:
        return h, asym
    return h


def eigendecompose(op):
    """Eigendecompose a Hermitian operator.

    Raises:
        numpy.linalg.LinAlgError: if the eigensolver does not converge.
    """
    w, v = np.linalg.eigh(np.asarray(op, dtype=complex))
    return SpectralDecomposition(w, v)


def expi_scale(dec, s):
    """Return ``U diag(exp(-1j*s*lambda)) U^H`` for a decomposition ``dec``."""
    U = dec.eigenvectors
    return (U * np.exp(-1j * s * dec.eigenvalues)) @ U.conj().T


def hermitian_to_real(op):
    """Map a Hermitian matrix to its N**2 real coordinates.

    Diagonal entries, then ``sqrt(2)`` times real and imaginary parts of the
    strict upper triangle, so the Frobenius inner product becomes the dot
    product.
    """
    op = np.asarray(op)
    iu = np.triu_indices(op.shape[0], 1)
    upper = op[iu]
    return np.concatenate(
        [op.diagonal().real, np.sqrt(2) * upper.real, np.sqrt(2) * upper.imag]
    )


def real_to_hermitian(vec, n):
    """Inverse of :func:`hermitian_to_real`."""
    vec = np.asarray(vec, dtype=float)
    m = n * (n - 1) // 2
    out = np.diag(vec[:n]).astype(complex)
    iu = np.triu_indices(n, 1)
    out[iu] = (vec[n:n + m] + 1j * vec[n + m:]) / np.sqrt(2)
    return out + np.triu(out, 1).conj().T


def random_hermitian_basis(n, count, seed, max_condition=1e6, max_tries=100):
    """Draw ``count`` random Hermitian ``n x n`` matrices.

    Real and imaginary parts are i.i.d. standard normal before
    symmetrization. The set is redrawn (from the same generator) until the
    Gram matrix of Frobenius inner products has condition number below
    ``max_condition``, so the elements are safely linearly independent.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 1 <= count <= n * n:
        raise ValueError(f"count must be in [1, {n * n}] for n={n}, got {count}")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        raw = rng.standard_normal((count, n, n)) + 1j * rng.standard_normal((count, n, n))
        basis = 0.5 * (raw + raw.conj().transpose(0, 2, 1))
        X = np.array([hermitian_to_real(b) for b in basis])
        if np.linalg.cond(X @ X.T) < max_condition:
            return list(basis)
    raise RuntimeError("could not draw a well-conditioned basis")


def combine(alpha, basis):
    """Return ``sum_j alpha_j basis_j`` for real ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    basis = np.asarray(basis)
    if alpha.shape != (basis.shape[0],):
        raise ValueError(
            f"got {alpha.shape[0] if alpha.ndim else 0} coefficients "
            f"for {basis.shape[0]} basis elements"
        )
    return np.tensordot(alpha, basis, axes=1)


def inner(a, b):
    """Hermitian product ``sum(conj(a) * b)``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def basis_state(n, k):
    """Unit vector ``e_k`` in ``C^n`` (zero-based ``k``)."""
    e = np.zeros(n, dtype=complex)
    e[k] = 1.0
    return e


def check_state(psi, n=None, name="state", atol=1e-10) -> np.ndarray:
    """Validate a physical (unit-norm) state and return it as complex."""
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1 or (n is not None and psi.shape[0] != n):
        raise ValueError(f"{name} has shape {psi.shape}, expected ({n},)")
    if abs(np.linalg.norm(psi) - 1.0) > atol:
        raise ValueError(f"{name} is not normalized (norm {np.linalg.norm(psi):.12g})")
    return psi


def stack_basis(basis: Sequence) -> np.ndarray:
    return np.asarray([np.asarray(b, dtype=complex) for b in basis])
