"""Measurement model and the scalar objectives built on it."""
from dataclasses import dataclass

import numpy as np

from .linalg import check_state, combine, eigendecompose, expi_scale, stack_basis
from .propagator import StrangPropagator, TimeGrid, mu_delta_t, propagate, propagate_adjoint

__all__ = [
    "ProblemContext",
    "measure_phi",
    "selectivity_J",
    "selectivity_increment",
    "MeasurementModel",
    "fitting_cost",
    "fitting_gradient",
]


@dataclass(frozen=True, eq=False)
class ProblemContext:
    """Known part of the experiment.

    Attributes:
        H: internal Hamiltonian.
        psi0: initial state.
        psi1: reference state the final state is projected on.
        grid: time discretization.
        beta: weight of the field-energy penalty.
    """

    H: np.ndarray
    psi0: np.ndarray
    psi1: np.ndarray
    grid: TimeGrid
    beta: float = 1e-2

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"H must be square, got {H.shape}")
        if np.max(np.abs(H - H.conj().T)) > 1e-10:
            raise ValueError("H is not Hermitian")
        n = H.shape[0]
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "psi0", check_state(self.psi0, n, "psi0"))
        object.__setattr__(self, "psi1", check_state(self.psi1, n, "psi1"))
        if not self.beta >= 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")

    @property
    def dim(self):
        return self.H.shape[0]

    @property
    def dt(self):
        return self.grid.dt

    def penalty(self, eps):
        return self.beta * self.dt * float(np.dot(eps, eps))

    def propagator(self, mu):
        return StrangPropagator(self.H, mu, self.dt)


def measure_phi(ctx, mu, eps):
    """Final-time overlap ``<psi1, psi(T)>`` under dipole ``mu`` and field ``eps``."""
    eps = ctx.grid.check_field(eps)
    return complex(np.vdot(ctx.psi1, ctx.propagator(mu).final(eps, ctx.psi0)))


def selectivity_J(ctx, muA, muB, eps):
    """Discrete selectivity ``|<psi1, psiA(T) - psiB(T)>|**2 - beta dt sum(eps**2)``."""
    eps = ctx.grid.check_field(eps)
    gap = measure_phi(ctx, muA, eps) - measure_phi(ctx, muB, eps)
    return abs(gap) ** 2 - ctx.penalty(eps)


def selectivity_increment(ctx, muA, muB, eps_old, eps_new, return_terms=False):
    """Right-hand side of the exact increment formula for ``selectivity_J``.

    Uses the adjoints of the ``eps_old`` trajectories, the ``eps_new``
    trajectories, and the divided-difference matrices from
    :func:`~dipoleid.propagator.mu_delta_t`. Mathematically equals
    ``selectivity_J(eps_new) - selectivity_J(eps_old)``; it is computed here
    through an independent route for verification.

    With ``return_terms`` also returns the quadratic terminal part and the
    per-step terms (each already multiplied by ``dt``).
    """
    grid, dt = ctx.grid, ctx.dt
    eps_old = grid.check_field(eps_old)
    eps_new = grid.check_field(eps_new)
    psiA = propagate(ctx.H, muA, eps_old, ctx.psi0, dt)
    psiB = propagate(ctx.H, muB, eps_old, ctx.psi0, dt)
    psiA_new = propagate(ctx.H, muA, eps_new, ctx.psi0, dt)
    psiB_new = propagate(ctx.H, muB, eps_new, ctx.psi0, dt)
    P = np.outer(ctx.psi1, ctx.psi1.conj())
    terminal = P @ (psiA[-1] - psiB[-1])
    chiA = propagate_adjoint(ctx.H, muA, eps_old, terminal, dt)
    chiB = propagate_adjoint(ctx.H, muB, eps_old, terminal, dt)
    # adjoint carried back over one free step, the partner of mu_delta_t
    shift = expi_scale(eigendecompose(ctx.H), -dt)
    diff = (psiA_new[-1] - psiB_new[-1]) - (psiA[-1] - psiB[-1])
    quad = float(np.real(np.vdot(diff, P @ diff)))
    terms = np.empty(grid.M)
    for j in range(grid.M):
        e1, e0 = eps_new[j], eps_old[j]
        mA = mu_delta_t(ctx.H, muA, e1, e0, dt)
        mB = mu_delta_t(ctx.H, muB, e1, e0, dt)
        zA = np.vdot(shift @ chiA[j + 1], mA @ psiA_new[j])
        zB = np.vdot(shift @ chiB[j + 1], mB @ psiB_new[j])
        terms[j] = dt * (e1 - e0) * (2 * zA.imag - 2 * zB.imag - ctx.beta * (e1 + e0))
    total = quad + float(np.sum(terms))
    if return_terms:
        return total, quad, terms
    return total


class MeasurementModel:
    """Map ``alpha -> phi(sum_j alpha_j basis_j, eps_m)`` over a set of fields,
    with residuals against fixed targets.

    Value and gradient of ``sum_m |phi_m(alpha) - target_m|**2`` share one
    forward plus one tangent propagation per field; the last evaluation is
    cached so optimizers may call cost and gradient separately.
    """

    def __init__(self, ctx, basis, fields, targets):
        self.ctx = ctx
        self.basis = stack_basis(basis)
        self.fields = [ctx.grid.check_field(f) for f in fields]
        self.targets = np.asarray(targets, dtype=complex)
        if self.targets.shape != (len(self.fields),):
            raise ValueError(
                f"{self.targets.shape[0] if self.targets.ndim else 0} targets "
                f"for {len(self.fields)} fields"
            )
        self._cache = None

    def _evaluate(self, alpha, with_jac):
        alpha = np.asarray(alpha, dtype=float)
        key = alpha.tobytes()
        if self._cache is not None and self._cache[0] == key and (self._cache[2] is not None or not with_jac):
            return self._cache[1], self._cache[2]
        prop = self.ctx.propagator(combine(alpha, self.basis))
        phi = np.empty(len(self.fields), dtype=complex)
        jac = np.empty((len(self.fields), len(alpha)), dtype=complex) if with_jac else None
        psi1c = self.ctx.psi1.conj()
        for m, eps in enumerate(self.fields):
            y = prop.forward_eig(eps, self.ctx.psi0)
            phi[m] = psi1c @ (prop.from_eig @ y[-1])
            if with_jac:
                jac[m] = prop.tangent(eps, self.basis, y) @ psi1c
        self._cache = (key, phi, jac)
        return phi, jac

    def phi(self, alpha):
        return self._evaluate(alpha, False)[0]

    def residuals(self, alpha):
        return self.phi(alpha) - self.targets

    def cost(self, alpha):
        r = self.residuals(alpha)
        return float(np.sum(r.real ** 2 + r.imag ** 2))

    def gradient(self, alpha):
        phi, jac = self._evaluate(alpha, True)
        r = phi - self.targets
        return 2.0 * np.real(r.conj() @ jac)


def _fitting_model(ctx, basis, k, fields):
    L = len(basis)
    if not 2 <= k <= L:
        raise IndexError(f"k must be in [2, {L}], got {k}")
    if len(fields) != k - 1:
        raise ValueError(f"step k={k} uses {k - 1} fields, got {len(fields)}")
    target_mu = np.asarray(basis[k - 1], dtype=complex)
    targets = [measure_phi(ctx, target_mu, eps) for eps in fields]
    return MeasurementModel(ctx, basis[:k - 1], fields, targets)


def fitting_cost(ctx, basis, k, alpha, fields):
    """Misfit ``sum_m |phi(mu_k, eps_m) - phi(sum_j alpha_j mu_j, eps_m)|**2``.

    ``k`` is one-based: the target is ``basis[k-1]``, the combination runs
    over ``basis[:k-1]`` and ``fields`` holds the ``k-1`` earlier fields.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (k - 1,):
        raise ValueError(f"alpha must have length {k - 1}, got {alpha.shape}")
    return _fitting_model(ctx, basis, k, fields).cost(alpha)


def fitting_gradient(ctx, basis, k, alpha, fields):
    """Gradient of :func:`fitting_cost` with respect to ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (k - 1,):
        raise ValueError(f"alpha must have length {k - 1}, got {alpha.shape}")
    return _fitting_model(ctx, basis, k, fields).gradient(alpha)
