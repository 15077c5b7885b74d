"""Monotonic field optimization and multistart least squares.

:func:`discriminate` maximizes the discrete selectivity between two dipole
operators. Each iteration propagates the adjoint pair backwards with the
current field, then sweeps forward choosing every new field sample so that
its term in the exact increment formula is non-negative, while advancing
both new states. The objective can therefore never decrease.

:func:`multistart_lsq` minimizes a smooth non-negative cost from several
random starts with BFGS and keeps the best point.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import _kernels
from .propagator import StrangPropagator

__all__ = [
    "MonotonicSettings",
    "MultistartSettings",
    "OptimizerTrace",
    "MonotonicityError",
    "discriminate",
    "maximize_transfer",
    "newton_field_update",
    "theta_update",
    "multistart_lsq",
]

log = logging.getLogger(__name__)

_RULES = {"newton_step": _kernels.NEWTON, "theta_implicit": _kernels.THETA_IMPLICIT}


class MonotonicityError(RuntimeError):
    """The objective decreased between two monotonic iterations."""


@dataclass(frozen=True)
class MonotonicSettings:
    """Settings of the monotonic scheme.

    The penalty weight ``beta`` belongs to the problem (see
    :class:`~dipoleid.functionals.ProblemContext`), not to these settings.

    Attributes:
        theta: positive relaxation of the theta rule.
        tol: stop once the discrete L2 norm of the field change is below this.
        max_iters: iteration cap.
        update_rule: ``"newton_step"`` (one safeguarded Newton step per time
            step) or ``"theta_implicit"`` (theta rule solved by fixed point).
    """

    theta: float = 1.0
    tol: float = 1e-4
    max_iters: int = 200
    update_rule: str = "newton_step"

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        if self.update_rule not in _RULES:
            raise ValueError(f"update_rule must be one of {sorted(_RULES)}")


@dataclass(frozen=True)
class MultistartSettings:
    restarts: int = 10
    init_scale: float = 1.0
    convergence_tol: float = 1e-10
    max_evals: int = 2000
    seed: int = 0

    def __post_init__(self):
        if int(self.restarts) != self.restarts or self.restarts < 1:
            raise ValueError(f"restarts must be a positive integer, got {self.restarts}")
        for name in ("init_scale", "convergence_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_evals < 1:
            raise ValueError("max_evals must be positive")


@dataclass
class OptimizerTrace:
    """Record of one optimizer run.

    For monotonic runs ``objective_history`` holds the objective before the
    first iteration and after each one, ``field_changes`` the discrete L2
    norm of each field update and ``min_step_gain`` the smallest per-step
    increment term of each sweep. For multistart runs
    ``objective_history`` holds the final cost of every restart.
    """

    objective_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    field_changes: list = field(default_factory=list)
    min_step_gain: list = field(default_factory=list)
    evaluations: int = 0

    @property
    def final_objective(self):
        return self.objective_history[-1] if self.objective_history else None


def _terminal_and_objective(ctx, pa, pb, ya, yb, eps):
    psiA = pa.from_eig @ ya[-1]
    psiB = pb.from_eig @ yb[-1]
    gap = np.vdot(ctx.psi1, psiA - psiB)
    return ctx.psi1 * gap, abs(gap) ** 2 - ctx.penalty(eps)


def discriminate(ctx, muA, muB, init_field, settings=None):
    """Maximize ``selectivity_J(ctx, muA, muB, .)`` monotonically from ``init_field``.

    Returns:
        ``(eps, trace)`` with the final field and its :class:`OptimizerTrace`.
        Hitting ``max_iters`` returns the last field with
        ``trace.converged = False``; it is also the best one since the
        objective never decreases.

    Raises:
        MonotonicityError: the objective dropped by more than ``1e-8``,
            which can only come from a defect in the propagation code.
    """
    settings = settings or MonotonicSettings()
    rule = _RULES[settings.update_rule]
    if ctx.beta <= 0:
        raise ValueError("the monotonic scheme needs beta > 0")
    dt = ctx.dt
    eps = ctx.grid.check_field(init_field).copy()
    pa = ctx.propagator(muA)
    pb = ctx.propagator(muB)
    ya = pa.forward_eig(eps, ctx.psi0)
    yb = pb.forward_eig(eps, ctx.psi0)
    terminal, J = _terminal_and_objective(ctx, pa, pb, ya, yb, eps)
    trace = OptimizerTrace(objective_history=[J])
    for it in range(settings.max_iters):
        qa = pa.adjoint_eig(eps, terminal)
        qb = pb.adjoint_eig(eps, terminal)
        eps_new, ya, yb, gains = _kernels.sweep(
            pa.W, pa.lam, qa, ya[0], pb.W, pb.lam, qb, yb[0],
            eps, dt, ctx.beta, settings.theta, rule,
        )
        terminal, J_new = _terminal_and_objective(ctx, pa, pb, ya, yb, eps_new)
        if J_new < J - 1e-8:
            raise MonotonicityError(
                f"objective decreased from {J!r} to {J_new!r} at iteration {it + 1}"
            )
        change = float(np.sqrt(dt * np.sum((eps_new - eps) ** 2)))
        eps, J = eps_new, J_new
        trace.objective_history.append(J)
        trace.field_changes.append(change)
        trace.min_step_gain.append(float(gains.min()))
        trace.iterations = it + 1
        if change <= settings.tol:
            trace.converged = True
            break
    log.debug(
        "discriminate: %d iterations, J %.6g -> %.6g, converged=%s",
        trace.iterations, trace.objective_history[0], J, trace.converged,
    )
    return eps, trace


def maximize_transfer(ctx, mu, init_field, settings=None):
    """Maximize ``|<psi1, psi(T)> - <psi1, psi_free(T)>|**2`` minus the penalty.

    This is :func:`discriminate` against the uncoupled system ``mu = 0``;
    when ``psi1`` is not reached by free evolution (as with the paper's
    level structure) the reference term vanishes and this is the plain
    transfer ``|phi(mu, eps)|**2``.
    """
    return discriminate(ctx, mu, np.zeros_like(np.asarray(mu, dtype=complex)), init_field, settings)


def _step_inputs(ctx, muA, muB, chiA_next, chiB_next, psiA, psiB):
    pa = StrangPropagator(ctx.H, muA, ctx.dt)
    pb = StrangPropagator(ctx.H, muB, ctx.dt)
    qa = pa.V.conj().T @ (pa.half.conj().T @ np.asarray(chiA_next, dtype=complex))
    qb = pb.V.conj().T @ (pb.half.conj().T @ np.asarray(chiB_next, dtype=complex))
    ya = pa.to_eig @ np.asarray(psiA, dtype=complex)
    yb = pb.to_eig @ np.asarray(psiB, dtype=complex)
    return qa, ya, pa.lam, qb, yb, pb.lam


def newton_field_update(ctx, muA, muB, chiA_next, chiB_next, psiA, psiB, eps_old, settings=None):
    """New field value for one time step, by one safeguarded Newton step.

    Args:
        chiA_next, chiB_next: adjoint states at the end of the step (time
            index ``j+1``), computed with the old field.
        psiA, psiB: new states at the start of the step (index ``j``).
        eps_old: old field value on this step.

    Returns:
        ``(eps_new, gain)``: ``gain`` is the step's term in the increment
        formula (divided by ``dt``); it is never negative.
    """
    settings = settings or MonotonicSettings()
    args = _step_inputs(ctx, muA, muB, chiA_next, chiB_next, psiA, psiB)
    return _kernels.newton_step(*args, float(eps_old), ctx.dt, ctx.beta, settings.theta)


def theta_update(ctx, muA, muB, chiA_next, chiB_next, psiA, psiB, eps_old, settings=None):
    """Explicit theta rule for one time step.

    Solves ``e' - e = (theta / beta) (D - beta (e' + e))`` for ``e'`` with the
    bracket ``D`` frozen at ``e' = e``. Arguments as for
    :func:`newton_field_update`; returns the unsafeguarded value.
    """
    settings = settings or MonotonicSettings()
    qa, ya, la, qb, yb, lb = _step_inputs(ctx, muA, muB, chiA_next, chiB_next, psiA, psiB)
    e = float(eps_old)
    return _kernels.theta_value(qa, ya, la, qb, yb, lb, e, e, ctx.dt, ctx.beta, settings.theta)


class _EvalBudget(Exception):
    pass


def multistart_lsq(cost, gradient, dim, settings=None):
    """Minimize ``cost`` from ``settings.restarts`` Gaussian random starts.

    Each restart runs BFGS until the gradient max-norm is below
    ``convergence_tol`` or ``max_evals`` cost evaluations are spent. The best
    point over all restarts is returned, together with a trace whose
    ``objective_history`` lists the final cost of each restart.
    ``converged`` is true when the best restart met the gradient criterion.
    """
    settings = settings or MultistartSettings()
    rng = np.random.default_rng(settings.seed)
    trace = OptimizerTrace()
    best_x, best_f, best_ok = None, np.inf, False
    for _ in range(settings.restarts):
        x0 = settings.init_scale * rng.standard_normal(dim)
        seen = {"x": x0.copy(), "f": np.inf, "n": 0}

        def f(x, seen=seen):
            if seen["n"] >= settings.max_evals:
                raise _EvalBudget
            seen["n"] += 1
            val = float(cost(x))
            if val < seen["f"]:
                seen["x"], seen["f"] = np.array(x, dtype=float), val
            return val

        ok = False
        try:
            res = optimize.minimize(
                f, x0, jac=gradient, method="BFGS",
                options={"gtol": settings.convergence_tol, "maxiter": settings.max_evals},
            )
            ok = bool(res.success) or float(np.max(np.abs(res.jac), initial=0.0)) <= settings.convergence_tol
        except _EvalBudget:
            pass
        trace.evaluations += seen["n"]
        trace.objective_history.append(seen["f"])
        if seen["f"] < best_f:
            best_x, best_f, best_ok = seen["x"], seen["f"], ok
    trace.iterations = settings.restarts
    trace.converged = best_ok
    return best_x, trace
