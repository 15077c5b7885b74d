"""Strang-split propagation of ``i dpsi/dt = (H + eps(t) mu) psi``.

One step of length ``dt`` with piecewise-constant field value ``eps_j`` is

    psi_{j+1} = A exp(-1j eps_j mu dt) A psi_j,    A = exp(-1j H dt / 2).

Everything here works with that discrete map directly: the tangent and the
adjoint recurrences are the exact derivative and the exact transpose of the
implemented step, so gradients and objective increments agree with the
forward propagation to rounding error rather than to O(dt**2).

Internally the recursion runs in the eigenbasis of ``mu`` on the
coordinates ``y_j = V^H A psi_j``, for which one step reads
``y_{j+1} = W (p_j * y_j)`` with ``W = V^H exp(-1j H dt) V`` and
``p_j = exp(-1j eps_j lambda dt)``.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .linalg import eigendecompose, expi_scale

__all__ = [
    "TimeGrid",
    "StrangPropagator",
    "propagate",
    "propagate_tangent",
    "propagate_adjoint",
    "mu_delta_t",
    "divided_phase",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``M`` steps on ``[0, T]``."""

    T: float
    M: int

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if not np.isfinite(self.T) or self.T <= 0:
            raise ValueError(f"T must be positive and finite, got {self.T}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dt(self):
        return self.T / self.M

    def times(self):
        """Left end of each step, ``j * dt``; the time stamp of sample ``j``."""
        return np.arange(self.M) * self.dt

    def midpoints(self):
        """Step midpoints, where smooth fields should be sampled."""
        return (np.arange(self.M) + 0.5) * self.dt

    def sample(self, f):
        """Sample a callable field shape at the step midpoints."""
        return np.asarray(f(self.midpoints()), dtype=float)

    def check_field(self, eps):
        eps = np.asarray(eps, dtype=float)
        if eps.shape != (self.M,):
            raise ValueError(f"field has shape {eps.shape}, grid expects ({self.M},)")
        if not np.all(np.isfinite(eps)):
            raise ValueError("field has non-finite samples")
        return eps


def divided_phase(lam, s_new, s_old):
    """Return ``(exp(-1j s_new lam) - exp(-1j s_old lam)) / (-1j (s_new - s_old))``.

    ``s`` is a field value times ``dt``. Written with ``sinc`` so it is smooth
    through ``s_new == s_old``, where it equals ``lam * exp(-1j s lam)``.
    """
    lam = np.asarray(lam)
    half = 0.5 * (s_new - s_old) * lam
    return lam * np.exp(-0.5j * (s_new + s_old) * lam) * np.sinc(half / np.pi)


def _check_operator(op, n, name):
    op = np.asarray(op, dtype=complex)
    if op.shape != (n, n):
        raise ValueError(f"{name} has shape {op.shape}, expected ({n}, {n})")
    return op


class StrangPropagator:
    """Cached split-step propagator for a fixed ``(H, mu, dt)``.

    The eigendecomposition of ``mu`` and the half-step exponential of ``H``
    are computed once; every propagation then only changes the diagonal
    phases.
    """

    def __init__(self, H, mu, dt, mu_dec=None):
        H = np.asarray(H, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"H must be square, got shape {H.shape}")
        self.n = H.shape[0]
        self.H = H
        self.mu = _check_operator(mu, self.n, "mu")
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.dt = float(dt)
        self.half = expi_scale(eigendecompose(H), 0.5 * self.dt)
        self.dec = mu_dec if mu_dec is not None else eigendecompose(self.mu)
        self.lam = self.dec.eigenvalues
        V = self.dec.eigenvectors
        self.V = V
        # psi -> y and back
        self.to_eig = V.conj().T @ self.half
        self.from_eig = self.to_eig.conj().T
        self.W = V.conj().T @ self.half @ self.half @ V

    def _fields(self, eps):
        eps = np.asarray(eps, dtype=float)
        if eps.ndim != 1:
            raise ValueError("field must be one-dimensional")
        if not np.all(np.isfinite(eps)):
            raise ValueError("field has non-finite samples")
        return eps

    def phases(self, eps):
        """``(M, N)`` array of ``exp(-1j eps_j lambda_k dt)``."""
        eps = self._fields(eps)
        return np.exp(-1j * self.dt * eps[:, None] * self.lam[None, :])

    def forward_eig(self, eps, psi0):
        """Return ``y_0 .. y_M`` (eigenbasis coordinates) for initial ``psi0``."""
        p = self.phases(eps)
        psi0 = np.asarray(psi0, dtype=complex)
        if psi0.shape != (self.n,):
            raise ValueError(f"psi0 has shape {psi0.shape}, expected ({self.n},)")
        return _kernels.forward_eig(self.W, p, self.to_eig @ psi0)

    def forward(self, eps, psi0):
        """Trajectory ``psi_0 .. psi_M`` as an ``(M+1, N)`` array."""
        return self.forward_eig(eps, psi0) @ self.from_eig.T

    def final(self, eps, psi0):
        y = self.forward_eig(eps, psi0)
        return self.from_eig @ y[-1]

    def adjoint_eig(self, eps, terminal):
        """Backward recursion ``q_j = V^H A^H chi_{j+1}`` for ``j = M-1 .. 0``.

        ``chi_M = terminal`` and ``chi_j = U_j^H chi_{j+1}``. The ``q`` form is
        the adjoint as it pairs with the field in the step ``j`` update.
        """
        p = self.phases(eps)
        terminal = np.asarray(terminal, dtype=complex)
        if terminal.shape != (self.n,):
            raise ValueError(f"terminal has shape {terminal.shape}, expected ({self.n},)")
        q_last = self.V.conj().T @ (self.half.conj().T @ terminal)
        return _kernels.adjoint_eig(np.ascontiguousarray(self.W.conj().T), p.conj(), q_last)

    def backward(self, eps, terminal):
        """Adjoint trajectory ``chi_0 .. chi_M`` as an ``(M+1, N)`` array."""
        q = self.adjoint_eig(eps, terminal)
        p = self.phases(eps)
        chi = np.empty((q.shape[0] + 1, self.n), dtype=complex)
        chi[-1] = terminal
        chi[:-1] = (p.conj() * q) @ (self.half.conj().T @ self.V).T
        return chi

    def tangent(self, eps, dmus, y):
        """Derivative of ``psi_M`` along each direction in ``dmus``.

        Args:
            eps: field samples.
            dmus: ``(L, N, N)`` Hermitian directions for ``mu``.
            y: base trajectory in eigenbasis coordinates (``forward_eig``).

        Returns:
            ``(L, N)`` array, row ``l`` is ``d psi_M`` along ``dmus[l]``.
        """
        p = self.phases(eps)
        dmus = np.asarray(dmus, dtype=complex)
        if dmus.ndim == 2:
            dmus = dmus[None]
        V = self.V
        E = np.ascontiguousarray(np.einsum("km,lmn,nq->lkq", V.conj().T, dmus, V))
        s = self.dt * self._fields(eps)
        dy = _kernels.tangent_eig(self.W, p, self.lam, s, E, np.ascontiguousarray(y))
        return (self.from_eig @ dy).T


def propagate(H, mu, eps, psi0, dt):
    """Forward Strang propagation; returns the ``(M+1, N)`` trajectory."""
    return StrangPropagator(H, mu, dt).forward(eps, psi0)


def propagate_tangent(H, mu_alpha, dmu, eps, base, dt):
    """``d psi(T)`` in direction ``dmu`` for the trajectory ``base``.

    ``base`` is the ``(M+1, N)`` trajectory obtained from
    ``propagate(H, mu_alpha, eps, psi0, dt)``. ``dmu`` may be a single
    direction or a stack of them; the result has matching leading shape.
    """
    prop = StrangPropagator(H, mu_alpha, dt)
    base = np.asarray(base, dtype=complex)
    eps = np.asarray(eps, dtype=float)
    if base.shape != (eps.shape[0] + 1, prop.n):
        raise ValueError(
            f"trajectory shape {base.shape} does not match {eps.shape[0]} steps"
        )
    y = base @ prop.to_eig.T
    dmu = np.asarray(dmu, dtype=complex)
    out = prop.tangent(eps, dmu, y)
    return out[0] if dmu.ndim == 2 else out


def propagate_adjoint(H, mu, eps, terminal, dt):
    """Backward adjoint trajectory ``chi_0 .. chi_M`` with ``chi_M = terminal``."""
    return StrangPropagator(H, mu, dt).backward(eps, terminal)


def mu_delta_t(H, mu, eps_new, eps_old, dt):
    """Divided-difference surrogate of ``mu`` between two field values.

    Returns ``A^H D A`` with ``A = exp(-1j H dt/2)`` and
    ``D = (exp(-1j eps_new mu dt) - exp(-1j eps_old mu dt)) / (-1j dt (eps_new - eps_old))``,
    which is symmetric in its two field arguments and tends to
    ``A^H mu exp(-1j eps mu dt) A`` as they coincide.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    dec = eigendecompose(mu)
    A = expi_scale(eigendecompose(H), 0.5 * dt)
    V = dec.eigenvectors
    d = divided_phase(dec.eigenvalues, eps_new * dt, eps_old * dt)
    return A.conj().T @ (V * d) @ V.conj().T @ A
