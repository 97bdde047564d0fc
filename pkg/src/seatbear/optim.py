"""Augmented-Lagrangian (PHR) wrapper around scipy's L-BFGS-B.

Callables return ``(value, gradient)`` for the objective and
``(values, jacobian)`` for constraint vectors; inequalities mean
``g(x) >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

__all__ = ["ALResult", "augmented_lagrangian"]


@dataclass
class ALResult:
    x: np.ndarray
    f: float
    eq_violation: float
    ineq_violation: float
    iterations: int
    converged: bool


def _empty(n):
    return np.zeros(0), np.zeros((0, n))


def augmented_lagrangian(f, x0, eq=None, ineq=None, bounds=None, tol: float = 1e-6,
                         max_outer: int = 40, rho0: float = 10.0, rho_max: float = 1e9,
                         inner_maxiter: int = 400) -> ALResult:
    x = np.asarray(x0, dtype=float).copy()
    n = len(x)
    eq = eq or (lambda _x: _empty(n))
    ineq = ineq or (lambda _x: _empty(n))
    lam = np.zeros(len(eq(x)[0]))
    mu = np.zeros(len(ineq(x)[0]))
    rho = rho0
    prev_viol = np.inf

    def violation(x):
        c, _ = eq(x)
        g, _ = ineq(x)
        return (float(np.abs(c).max()) if len(c) else 0.0,
                float(np.maximum(-g, 0).max()) if len(g) else 0.0)

    it = 0
    for it in range(1, max_outer + 1):
        def lagr(x, lam=lam, mu=mu, rho=rho):
            fv, fg = f(x)
            c, Jc = eq(x)
            g, Jg = ineq(x)
            shifted = np.maximum(0.0, mu - rho * g)
            val = fv + lam @ c + 0.5 * rho * c @ c + (shifted @ shifted - mu @ mu) / (2 * rho)
            grad = fg + Jc.T @ (lam + rho * c) - Jg.T @ shifted
            return val, grad

        res = minimize(lagr, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": inner_maxiter, "ftol": 1e-15, "gtol": 1e-10})
        x = res.x
        c, _ = eq(x)
        g, _ = ineq(x)
        lam = lam + rho * c
        mu = np.maximum(0.0, mu - rho * g)
        ev, iv = violation(x)
        viol = max(ev, iv)
        if viol <= tol and it > 1:
            break
        if viol > 0.25 * prev_viol:
            rho = min(rho * 10.0, rho_max)
        prev_viol = viol
    ev, iv = violation(x)
    return ALResult(x, float(f(x)[0]), ev, iv, it, max(ev, iv) <= tol)
