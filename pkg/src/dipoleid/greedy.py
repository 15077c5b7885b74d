"""Greedy construction of selective fields and the identification solve."""
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .functionals import MeasurementModel, measure_phi
from .linalg import combine, make_hermitian, stack_basis
from .optimizers import (
    MonotonicityError,
    MonotonicSettings,
    MultistartSettings,
    OptimizerTrace,
    discriminate,
    maximize_transfer,
    multistart_lsq,
)

__all__ = [
    "SelectivityWarning",
    "SelectiveFieldSet",
    "IdentificationResult",
    "MeasurementRecord",
    "initial_field",
    "greedy_fields",
    "fit_alpha",
    "identify",
    "relative_error",
]

log = logging.getLogger(__name__)

# fitted combination reproduces the target's measurements this well
_DEGENERATE_FIT = 1e-12
# selectivity gap that still counts as "no discrimination"
_DEGENERATE_GAP = 1e-8


class SelectivityWarning(UserWarning):
    """A discriminatory step could not separate the target from its fit."""


@dataclass
class SelectiveFieldSet:
    """Output of :func:`greedy_fields`.

    Attributes:
        basis: the dipole basis, one ``(N, N)`` array per element.
        fields: one field per basis element, all on the same grid.
        fit_coefficients: ``fit_coefficients[k]`` is the fitted combination
            used at step ``k + 1`` (empty for the first field).
        fit_costs: final fitting cost per step (``nan`` for the first).
        traces: monotonic-optimizer trace per field.
        provenance: settings and seeds that produced the set.
    """

    basis: list
    fields: list
    fit_coefficients: list = field(default_factory=list)
    fit_costs: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.fields) != len(self.basis):
            raise ValueError(f"{len(self.fields)} fields for {len(self.basis)} basis elements")


@dataclass
class IdentificationResult:
    alpha: np.ndarray
    mu_hat: np.ndarray
    residual: float
    relative_error: Optional[float] = None
    trace: Optional[OptimizerTrace] = None


@dataclass(frozen=True)
class MeasurementRecord:
    field_id: int
    value: complex


def initial_field(grid, seed, amplitude=1e-2):
    """Small seeded white-noise field, the default starting guess."""
    return amplitude * np.random.default_rng(seed).standard_normal(grid.M)


def fit_alpha(ctx, basis, k, fields, settings=None):
    """Fitting step ``k`` (one-based): best real combination of
    ``basis[:k-1]`` mimicking ``basis[k-1]`` under ``fields``.

    Returns:
        ``(alpha, cost, trace)``.
    """
    L = len(basis)
    if not 2 <= k <= L:
        raise IndexError(f"k must be in [2, {L}], got {k}")
    if len(fields) != k - 1:
        raise ValueError(f"step k={k} uses {k - 1} fields, got {len(fields)}")
    targets = [measure_phi(ctx, basis[k - 1], eps) for eps in fields]
    model = MeasurementModel(ctx, basis[:k - 1], fields, targets)
    alpha, trace = multistart_lsq(model.cost, model.gradient, k - 1, settings)
    return alpha, model.cost(alpha), trace


def greedy_fields(ctx, basis, mono=None, ms=None, field_seed=0):
    """Compute one selective field per basis element.

    The first field maximizes the measured transfer for ``basis[0]``. Field
    ``k`` then comes from fitting ``basis[k-1]`` with the earlier elements
    under the earlier fields, and driving the target and its fit apart.
    Starting guesses are seeded noise from ``field_seed + k``; the fitting
    steps use ``ms.seed + k``.
    """
    mono = mono or MonotonicSettings()
    ms = ms or MultistartSettings()
    basis = list(stack_basis(basis))
    if not basis:
        raise ValueError("empty basis")
    grid = ctx.grid
    fields, coeffs, costs, traces = [], [np.zeros(0)], [float("nan")], []

    try:
        eps, trace = maximize_transfer(ctx, basis[0], initial_field(grid, field_seed), mono)
    except MonotonicityError as exc:
        raise MonotonicityError(f"field 1: {exc}") from exc
    fields.append(eps)
    traces.append(trace)
    log.info("field 1: J = %.6g after %d iterations", trace.final_objective, trace.iterations)

    for k in range(2, len(basis) + 1):
        ms_k = MultistartSettings(
            restarts=ms.restarts, init_scale=ms.init_scale,
            convergence_tol=ms.convergence_tol, max_evals=ms.max_evals, seed=ms.seed + k,
        )
        alpha, cost, _ = fit_alpha(ctx, basis, k, fields, ms_k)
        coeffs.append(alpha)
        costs.append(cost)
        mu_fit = combine(alpha, basis[:k - 1])
        try:
            eps, trace = discriminate(ctx, basis[k - 1], mu_fit, initial_field(grid, field_seed + k - 1), mono)
        except MonotonicityError as exc:
            raise MonotonicityError(f"field {k}: {exc}") from exc
        fields.append(eps)
        traces.append(trace)
        gap = abs(measure_phi(ctx, basis[k - 1], eps) - measure_phi(ctx, mu_fit, eps))
        log.info(
            "field %d: fit cost %.3e, J = %.6g after %d iterations, gap %.3e",
            k, cost, trace.final_objective, trace.iterations, gap,
        )
        if cost <= _DEGENERATE_FIT and gap <= _DEGENERATE_GAP:
            warnings.warn(
                f"step {k}: fitted combination is indistinguishable from basis element {k} "
                f"(fit cost {cost:.2e}, gap {gap:.2e})",
                SelectivityWarning,
                stacklevel=2,
            )

    provenance = {
        "monotonic": {
            "theta": mono.theta, "tol": mono.tol,
            "max_iters": mono.max_iters, "update_rule": mono.update_rule,
        },
        "multistart": {
            "restarts": ms.restarts, "init_scale": ms.init_scale,
            "convergence_tol": ms.convergence_tol, "max_evals": ms.max_evals, "seed": ms.seed,
        },
        "field_seed": field_seed,
        "beta": ctx.beta,
        "T": grid.T,
        "M": grid.M,
    }
    return SelectiveFieldSet(basis, fields, coeffs, costs, traces, provenance)


def identify(ctx, fieldset, measurements, ms=None):
    """Solve for the real combination of ``fieldset.basis`` reproducing the
    measurements in the least-squares sense.

    ``measurements`` are :class:`MeasurementRecord` objects (or plain complex
    values) aligned with ``fieldset.fields``. The residual reported is
    ``sum_k |phi_k(alpha) - m_k|**2`` at the returned point.
    """
    values = [m.value if isinstance(m, MeasurementRecord) else m for m in measurements]
    if len(values) != len(fieldset.fields):
        raise ValueError(
            f"{len(values)} measurements for {len(fieldset.fields)} fields"
        )
    if measurements and isinstance(measurements[0], MeasurementRecord):
        ids = [m.field_id for m in measurements]
        if ids != list(range(len(ids))):
            raise ValueError(f"measurement field ids {ids} do not match the field order")
    model = MeasurementModel(ctx, fieldset.basis, fieldset.fields, values)
    alpha, trace = multistart_lsq(model.cost, model.gradient, len(fieldset.basis), ms)
    mu_hat = make_hermitian(combine(alpha, fieldset.basis))
    residual = model.cost(alpha)
    return IdentificationResult(alpha, mu_hat, residual, None, trace)


def relative_error(mu_hat, mu_star):
    """Spectral-norm relative error ``||mu_star - mu_hat||_2 / ||mu_star||_2``."""
    mu_hat = np.asarray(mu_hat, dtype=complex)
    mu_star = np.asarray(mu_star, dtype=complex)
    if mu_hat.shape != mu_star.shape:
        raise ValueError(f"shape mismatch: {mu_hat.shape} vs {mu_star.shape}")
    denom = np.linalg.norm(mu_star, 2)
    if denom == 0:
        raise ValueError("mu_star is zero")
    return float(np.linalg.norm(mu_star - mu_hat, 2) / denom)
