"""Small dense nonlinear least-squares solver (Levenberg-Marquardt).

Used both for the shooting root-find on the base moment (3 unknowns) and
for parameter identification (1-2 unknowns).  The Jacobian is formed by
forward differences, so residual functions only need to be evaluable.
Box bounds are handled by clamping trial points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass
class LeastSquaresResult:
    x: np.ndarray
    residual: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    message: str


def levenberg_marquardt(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    x0: Sequence[float],
    *,
    bounds: Sequence[tuple[float, float]] | None = None,
    residual_tol: float = 0.0,
    step_tol: float = 1e-6,
    max_iterations: int = 50,
    fd_step_rel: float = 1e-6,
    fd_step_min: float = 1e-9,
    lambda0: float = 1e-3,
    lambda_max: float = 1e12,
) -> LeastSquaresResult:
    """Minimize ||residual_fn(x)||^2 from x0.

    Converges when the residual 2-norm drops to residual_tol or the
    relative parameter step falls below step_tol.  The damping parameter
    shrinks on accepted steps and grows on rejected ones; exceeding
    lambda_max ends the search unconverged.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    if bounds is not None:
        for i, (a, b) in enumerate(bounds):
            lo[i], hi[i] = a, b
        x = np.clip(x, lo, hi)

    r = np.asarray(residual_fn(x), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residual function returned non-finite values at the start point")
    cost = float(r @ r)
    norm = float(np.sqrt(cost))
    if norm <= residual_tol:
        return LeastSquaresResult(x, r, norm, 0, True, "residual tolerance met at start point")

    lam = lambda0
    for it in range(1, max_iterations + 1):
        jac = np.empty((r.size, n))
        for j in range(n):
            h = fd_step_rel * max(abs(x[j]), 1.0)
            h = max(h, fd_step_min)
            if x[j] + h > hi[j]:
                h = -h
            xp = x.copy()
            xp[j] += h
            rp = np.asarray(residual_fn(xp), dtype=float)
            jac[:, j] = (rp - r) / h

        jtj = jac.T @ jac
        jtr = jac.T @ r
        diag = np.diag(jtj).copy()
        diag[diag <= 0.0] = 1.0

        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -jtr)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                x_try = np.clip(x + step, lo, hi)
                r_try = np.asarray(residual_fn(x_try), dtype=float)
                if np.all(np.isfinite(r_try)):
                    cost_try = float(r_try @ r_try)
                    if cost_try < cost:
                        actual_step = x_try - x
                        x, r, cost = x_try, r_try, cost_try
                        norm = float(np.sqrt(cost))
                        lam = max(lam / 3.0, 1e-14)
                        break
            lam *= 10.0
            if lam > lambda_max:
                return LeastSquaresResult(
                    x, r, norm, it, norm <= residual_tol,
                    f"damping exceeded {lambda_max:g} without progress")

        if norm <= residual_tol:
            return LeastSquaresResult(x, r, norm, it, True, "residual tolerance met")
        rel_step = float(np.max(np.abs(actual_step) / np.maximum(np.abs(x), 1e-30)))
        if rel_step < step_tol:
            converged = residual_tol <= 0.0 or norm <= residual_tol
            return LeastSquaresResult(
                x, r, norm, it, converged,
                f"relative parameter step {rel_step:.3g} below {step_tol:g}")

    return LeastSquaresResult(x, r, norm, max_iterations, False,
                              f"no convergence within {max_iterations} iterations")
