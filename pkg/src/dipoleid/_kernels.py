"""Compiled inner loops.

The time recursions are sequential and act on tiny matrices, so numpy call
overhead dominates; these kernels run them in numba. All of them work in
the eigenbasis of the dipole operator (see :mod:`dipoleid.propagator`).
"""
import numpy as np
from numba import njit

NEWTON = 0
THETA_IMPLICIT = 1


@njit(cache=True)
def forward_eig(W, p, y0):
    M, n = p.shape
    y = np.empty((M + 1, n), dtype=np.complex128)
    y[0] = y0
    tmp = np.empty(n, dtype=np.complex128)
    for j in range(M):
        for k in range(n):
            tmp[k] = p[j, k] * y[j, k]
        for k in range(n):
            acc = 0j
            for m in range(n):
                acc += W[k, m] * tmp[m]
            y[j + 1, k] = acc
    return y


@njit(cache=True)
def adjoint_eig(Wh, pc, q_last):
    M, n = pc.shape
    q = np.empty((M, n), dtype=np.complex128)
    q[M - 1] = q_last
    tmp = np.empty(n, dtype=np.complex128)
    for j in range(M - 1, 0, -1):
        for k in range(n):
            tmp[k] = pc[j, k] * q[j, k]
        for k in range(n):
            acc = 0j
            for m in range(n):
                acc += Wh[k, m] * tmp[m]
            q[j - 1, k] = acc
    return q


@njit(cache=True)
def _sinc(u):
    if abs(u) < 1e-4:
        u2 = u * u
        return 1.0 - u2 / 6.0 + u2 * u2 / 120.0
    return np.sin(u) / u


@njit(cache=True)
def tangent_eig(W, p, lam, s, E, y):
    """Tangent recursion ``dy <- W (p_j * dy + (E_l * G_j) y_j)`` from ``dy = 0``.

    ``E`` holds the ``L`` directions in the eigenbasis, ``G_j`` is the kernel
    of the derivative of ``exp(-1j s_j mu)`` and ``y`` the base trajectory.
    Returns the ``(N, L)`` final tangent.
    """
    M, n = p.shape
    L = E.shape[0]
    dy = np.zeros((n, L), dtype=np.complex128)
    tmp = np.empty((n, L), dtype=np.complex128)
    G = np.empty((n, n), dtype=np.complex128)
    for j in range(M):
        sj = s[j]
        for k in range(n):
            for m in range(n):
                G[k, m] = (-1j * sj * np.exp(-0.5j * sj * (lam[k] + lam[m]))
                           * _sinc(0.5 * sj * (lam[k] - lam[m])) * y[j, m])
        for k in range(n):
            for l in range(L):
                acc = p[j, k] * dy[k, l]
                for m in range(n):
                    acc += E[l, k, m] * G[k, m]
                tmp[k, l] = acc
        for k in range(n):
            for l in range(L):
                acc = 0j
                for m in range(n):
                    acc += W[k, m] * tmp[m, l]
                dy[k, l] = acc
    return dy


@njit(cache=True)
def pairing(q, y, lam, s_new, s_old):
    """``<q, D y>`` with ``D`` the diagonal divided difference of the control
    exponential between field-times-dt values ``s_new`` and ``s_old``."""
    acc = 0j
    for k in range(lam.shape[0]):
        u = 0.5 * (s_new - s_old) * lam[k]
        d = lam[k] * np.exp(-0.5j * (s_new + s_old) * lam[k]) * _sinc(u)
        acc += np.conj(q[k]) * y[k] * d
    return acc


@njit(cache=True)
def _pairing_slope(q, y, lam, s_old, dt):
    # d/d(eps_new) of pairing at eps_new == eps_old
    acc = 0j
    for k in range(lam.shape[0]):
        d1 = -0.5j * lam[k] * lam[k] * dt * np.exp(-1j * s_old * lam[k])
        acc += np.conj(q[k]) * y[k] * d1
    return acc


@njit(cache=True)
def step_slope(qa, ya, la, qb, yb, lb, eps_new, eps_old, dt, beta):
    """Bracketed factor of the step term: ``2 Im<.,.>_a - 2 Im<.,.>_b - beta (eps_new + eps_old)``."""
    za = pairing(qa, ya, la, eps_new * dt, eps_old * dt)
    zb = pairing(qb, yb, lb, eps_new * dt, eps_old * dt)
    return 2.0 * za.imag - 2.0 * zb.imag - beta * (eps_new + eps_old)


@njit(cache=True)
def step_gain(qa, ya, la, qb, yb, lb, eps_new, eps_old, dt, beta):
    """Per-step contribution ``(eps_new - eps_old) * step_slope`` (without ``dt``)."""
    return (eps_new - eps_old) * step_slope(qa, ya, la, qb, yb, lb, eps_new, eps_old, dt, beta)


@njit(cache=True)
def theta_value(qa, ya, la, qb, yb, lb, eps_old, eps_frozen, dt, beta, theta):
    """Affine solve of the theta rule with the bracket evaluated at ``eps_frozen``."""
    s_old = eps_old * dt
    s_fr = eps_frozen * dt
    D = 2.0 * pairing(qa, ya, la, s_fr, s_old).imag - 2.0 * pairing(qb, yb, lb, s_fr, s_old).imag
    return (eps_old * (1.0 - theta) + theta / beta * D) / (1.0 + theta)


@njit(cache=True)
def _safeguard(qa, ya, la, qb, yb, lb, eps_old, candidate, dt, beta):
    # halve the step until the gain is non-negative
    h = candidate - eps_old
    for _ in range(60):
        g = step_gain(qa, ya, la, qb, yb, lb, eps_old + h, eps_old, dt, beta)
        if g >= 0.0 and np.isfinite(g):
            return eps_old + h, g
        h *= 0.5
    return eps_old, 0.0


@njit(cache=True)
def theta_step(qa, ya, la, qb, yb, lb, eps_old, dt, beta, theta, implicit):
    e = theta_value(qa, ya, la, qb, yb, lb, eps_old, eps_old, dt, beta, theta)
    if implicit:
        for _ in range(50):
            e_next = theta_value(qa, ya, la, qb, yb, lb, eps_old, e, dt, beta, theta)
            if abs(e_next - e) <= 1e-15 * (1.0 + abs(e)):
                e = e_next
                break
            e = e_next
    return _safeguard(qa, ya, la, qb, yb, lb, eps_old, e, dt, beta)


@njit(cache=True)
def newton_step(qa, ya, la, qb, yb, lb, eps_old, dt, beta, theta):
    """One Newton step on the per-step gain from ``eps_old``, falling back to
    the explicit theta rule when the step does not increase the gain."""
    s_old = eps_old * dt
    F0 = step_slope(qa, ya, la, qb, yb, lb, eps_old, eps_old, dt, beta)
    F1 = (2.0 * _pairing_slope(qa, ya, la, s_old, dt).imag
          - 2.0 * _pairing_slope(qb, yb, lb, s_old, dt).imag - beta)
    if F1 < 0.0:
        cand = eps_old - F0 / (2.0 * F1)
        g = step_gain(qa, ya, la, qb, yb, lb, cand, eps_old, dt, beta)
        if g > 0.0 and np.isfinite(g):
            return cand, g
    return theta_step(qa, ya, la, qb, yb, lb, eps_old, dt, beta, theta, False)


@njit(cache=True)
def sweep(Wa, la, qa, ya0, Wb, lb, qb, yb0, eps, dt, beta, theta, rule):
    """Forward sweep computing the new field and both new trajectories together.

    Returns ``(eps_new, ya, yb, gains)`` where ``gains[j]`` is the per-step
    term of the objective increment for the accepted ``eps_new[j]``.
    """
    M = eps.shape[0]
    n = la.shape[0]
    eps_new = np.empty(M)
    gains = np.empty(M)
    ya = np.empty((M + 1, n), dtype=np.complex128)
    yb = np.empty((M + 1, n), dtype=np.complex128)
    ya[0] = ya0
    yb[0] = yb0
    ta = np.empty(n, dtype=np.complex128)
    tb = np.empty(n, dtype=np.complex128)
    for j in range(M):
        if rule == NEWTON:
            e, g = newton_step(qa[j], ya[j], la, qb[j], yb[j], lb, eps[j], dt, beta, theta)
        else:
            e, g = theta_step(qa[j], ya[j], la, qb[j], yb[j], lb, eps[j], dt, beta, theta, True)
        eps_new[j] = e
        gains[j] = g
        for k in range(n):
            ta[k] = np.exp(-1j * e * dt * la[k]) * ya[j, k]
            tb[k] = np.exp(-1j * e * dt * lb[k]) * yb[j, k]
        for k in range(n):
            acc_a = 0j
            acc_b = 0j
            for m in range(n):
                acc_a += Wa[k, m] * ta[m]
                acc_b += Wb[k, m] * tb[m]
            ya[j + 1, k] = acc_a
            yb[j + 1, k] = acc_b
    return eps_new, ya, yb, gains
