"""Deterministic nonlinear least-squares with parameter standard errors.

Every fitting routine in the toolkit goes through :func:`least_squares`. The
minimizer is damped Gauss-Newton (Levenberg-Marquardt via MINPACK for
unbounded problems, a trust-region reflective variant when bounds are given;
both deterministic). Parameter uncertainties follow the standard local
linearization::

    cov = s^2 (J^T J)^{-1},   s^2 = RSS / (m - p)

with ``J`` the Jacobian at the optimum, finite-differenced when no analytic
Jacobian is supplied. The finite-difference step is
``sqrt(machine epsilon) * max(|param|, 1)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.optimize


class UnderdeterminedFit(ValueError):
    """Fewer residuals than free parameters."""


@dataclass
class FitProblem:
    """A residual-vector minimization task.

    ``residual(params)`` must return a 1-D array of the same length for any
    parameter vector. Bounds are optional elementwise limits; ``jacobian``
    (optional) returns the (m, p) derivative matrix of the residuals.
    ``tolerance`` bounds both the relative cost decrease and the relative
    step at convergence; ``max_iterations`` caps the damped Gauss-Newton
    iterations (each costs one Jacobian plus one residual evaluation).
    """

    residual: Callable[[np.ndarray], np.ndarray]
    x0: Sequence[float]
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    max_iterations: int = 200
    tolerance: float = 1e-10


@dataclass
class FitResult:
    params: np.ndarray
    std_errors: np.ndarray
    covariance: np.ndarray
    rss: float
    iterations: int
    converged: bool
    singular: bool = False
    message: str = ""
    jacobian: np.ndarray = field(default=None, repr=False)

    def __iter__(self):  # allows ``params, errs, *_ = result`` style use
        return iter((self.params, self.std_errors))


def _validate(problem: FitProblem) -> tuple[np.ndarray, tuple]:
    x0 = np.atleast_1d(np.asarray(problem.x0, dtype=float))
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial parameters must be finite")
    if (problem.lower is None) != (problem.upper is None):
        raise ValueError("provide both bounds or neither")
    if problem.lower is not None:
        lo = np.asarray(problem.lower, dtype=float)
        hi = np.asarray(problem.upper, dtype=float)
        if np.any(lo > hi):
            raise ValueError("lower bounds must not exceed upper bounds")
        if np.any(x0 < lo) or np.any(x0 > hi):
            raise ValueError("initial parameters must lie within bounds")
        bounds = (lo, hi)
    else:
        bounds = (-np.inf, np.inf)
    r0 = np.asarray(problem.residual(x0), dtype=float)
    if not np.all(np.isfinite(r0)):
        raise ValueError("residual is not finite at the initial parameters")
    if r0.size <= x0.size:
        raise UnderdeterminedFit(
            f"{r0.size} residuals cannot constrain {x0.size} parameters"
        )
    return x0, bounds


def covariance_from_jacobian(jac: np.ndarray, rss: float) -> tuple[np.ndarray, np.ndarray, bool]:
    """Covariance, standard errors and a singularity flag from J and RSS."""
    m, p = jac.shape
    dof = max(m - p, 1)
    s2 = rss / dof
    jtj = jac.T @ jac
    singular = np.linalg.matrix_rank(jtj) < p
    if singular:
        cov = s2 * np.linalg.pinv(jtj)
    else:
        cov = s2 * np.linalg.inv(jtj)
    cov = 0.5 * (cov + cov.T)
    std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return cov, std, singular


def least_squares(problem: FitProblem) -> FitResult:
    """Minimize the sum of squared residuals; deterministic for fixed input."""
    x0, bounds = _validate(problem)
    unbounded = problem.lower is None
    n = x0.size
    opts = dict(
        ftol=problem.tolerance,
        xtol=problem.tolerance,
        gtol=1e-14,
        max_nfev=problem.max_iterations * (n + 1),
    )
    res = scipy.optimize.least_squares(
        problem.residual,
        x0,
        jac=problem.jacobian if problem.jacobian is not None else "2-point",
        bounds=bounds,
        method="lm" if unbounded else "trf",
        x_scale="jac",
        **opts,
    )
    rss = float(2.0 * res.cost)
    cov, std, singular = covariance_from_jacobian(res.jac, rss)
    converged = res.status > 0
    result = FitResult(
        params=res.x,
        std_errors=std,
        covariance=cov,
        rss=rss,
        iterations=int(res.nfev),
        converged=converged,
        singular=singular,
        message=res.message,
        jacobian=np.asarray(res.jac),
    )
    if not converged:
        warnings.warn(
            f"fit did not converge within the iteration budget: {res.message}",
            RuntimeWarning,
            stacklevel=2,
        )
    return result


def model_fit(
    model: Callable[..., np.ndarray],
    x: np.ndarray,
    y: np.ndarray,
    p0: Sequence[float],
    sigma: Optional[np.ndarray] = None,
    lower: Optional[Sequence[float]] = None,
    upper: Optional[Sequence[float]] = None,
    jacobian: Optional[Callable[..., np.ndarray]] = None,
    **problem_kwargs,
) -> FitResult:
    """Fit ``y ~ model(x, *params)``, optionally weighted by per-point sigma.

    ``jacobian(x, *params)`` must return the (m, p) matrix of model
    derivatives; the residual Jacobian sign/weighting is handled here.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma <= 0):
            raise ValueError("sigma entries must be positive")

    def residual(params):
        r = model(x, *params) - y
        return r / sigma if sigma is not None else r

    jac = None
    if jacobian is not None:

        def jac(params):
            j = jacobian(x, *params)
            return j / sigma[:, None] if sigma is not None else j

    problem = FitProblem(
        residual=residual,
        x0=p0,
        lower=lower,
        upper=upper,
        jacobian=jac,
        **problem_kwargs,
    )
    return least_squares(problem)
