"""Multi-output ridge regression and row-sparse (l1/l2) multi-task regression."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DimensionError, ParameterError, RankDeficiencyError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RidgeSolution:
    H: np.ndarray  # (d + 1, m), last row is the bias
    lambda_: float
    train_residual: float

    @property
    def weights(self) -> np.ndarray:
        return self.H[:-1]

    @property
    def bias(self) -> np.ndarray:
        return self.H[-1]

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.H[:-1] + self.H[-1]


def _check_xy(X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or Y.ndim != 2:
        raise DimensionError("X and Y must be 2-D")
    if X.shape[0] != Y.shape[0]:
        raise DimensionError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
    if X.shape[0] < 1:
        raise DimensionError("need at least one sample")
    return X, Y


def ridge_fit(X, Y, lambda_: float, fit_bias: bool = True) -> RidgeSolution:
    """Minimize ``||Y - X W - 1 b^T||_F^2 + lambda ||W||_F^2``.

    The bias ``b`` is not penalized. With ``fit_bias=False`` it is fixed at
    zero, which reduces to the textbook ``(X^T X + lambda I)^-1 X^T Y``.
    """
    X, Y = _check_xy(X, Y)
    if lambda_ < 0:
        raise ParameterError("lambda must be non-negative")
    d = X.shape[1]
    if fit_bias:
        x_mean, y_mean = X.mean(axis=0), Y.mean(axis=0)
        Xc, Yc = X - x_mean, Y - y_mean
    else:
        Xc, Yc = X, Y
    A = Xc.T @ Xc
    if lambda_ == 0 and np.linalg.matrix_rank(Xc) < d:
        raise RankDeficiencyError("X^T X is singular; use lambda > 0")
    A[np.diag_indices_from(A)] += lambda_
    W = np.linalg.solve(A, Xc.T @ Yc)
    b = y_mean - x_mean @ W if fit_bias else np.zeros(Y.shape[1])
    H = np.vstack([W, b])
    resid = float(np.linalg.norm(Y - X @ W - b))
    return RidgeSolution(H, float(lambda_), resid)


def group_soft_threshold(u, theta: float) -> np.ndarray:
    """Proximal operator of ``theta * ||.||_2``: ``(1 - theta/||u||)_+ u``."""
    if theta < 0:
        raise ParameterError("threshold must be non-negative")
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u)
    if norm <= theta:
        return np.zeros_like(u)
    return (1.0 - theta / norm) * u


def ssa_objective(X, Y, C, lambda_s: float) -> float:
    """``||Y - X C||_F^2 + lambda_s * sum_i ||C_i||_2``."""
    X, Y = _check_xy(X, Y)
    C = np.asarray(C, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    if C.shape != (X.shape[1], Y.shape[1]):
        raise DimensionError(f"C has shape {C.shape}, expected {(X.shape[1], Y.shape[1])}")
    R = Y - X @ C
    return float(np.sum(R * R) + lambda_s * np.sum(np.linalg.norm(C, axis=1)))


def ssa_lambda_max(X, Y) -> float:
    """Smallest ``lambda_s`` for which ``C = 0`` is optimal."""
    X, Y = _check_xy(X, Y)
    return float(2.0 * np.max(np.linalg.norm(X.T @ Y, axis=1)))


@dataclass(frozen=True)
class SsaSolution:
    C: np.ndarray
    lambda_s: float
    objective_trace: np.ndarray
    active_rows: np.ndarray
    converged: bool
    n_iter: int


def ssa_fit(
    X,
    Y,
    lambda_s: float,
    tol: float = 1e-6,
    max_iter: int = 1000,
    C0=None,
) -> SsaSolution:
    """Row-sparse multi-task least squares by cyclic block-coordinate descent.

    Solves ``min_C ||Y - X C||_F^2 + lambda_s * sum_i ||C_i||_2``. Each row
    update is exact: the unregularized row solution is group-soft-thresholded
    at ``lambda_s / (2 ||X_i||^2)``. Columns of ``X`` are scaled to unit norm
    internally; all-zero columns get all-zero rows.

    Iteration stops once the largest row change, relative to ``1 + ||C_i||``,
    drops below ``tol``, or when a sweep fails to lower the objective at
    rounding level (that sweep is discarded, so the trace never rises).
    Hitting ``max_iter`` sets ``converged=False``. ``C0`` warm-starts the
    descent.
    """
    X, Y = _check_xy(X, Y)
    if lambda_s < 0:
        raise ParameterError("lambda_s must be non-negative")
    if tol <= 0 or max_iter < 1:
        raise ParameterError("need tol > 0 and max_iter >= 1")
    d, m = X.shape[1], Y.shape[1]

    scale = np.linalg.norm(X, axis=0)
    live = np.flatnonzero(scale > 0)
    if live.size < d:
        warnings.warn(f"{d - live.size} all-zero feature columns dropped", RuntimeWarning, stacklevel=2)
    Xn = X[:, live] / scale[live]
    s = scale[live]
    G = Xn.T @ Xn
    XtY = Xn.T @ Y
    yy = float(np.sum(Y * Y))
    thresh = lambda_s / (2.0 * s)  # per-row threshold in normalized coordinates

    # B = diag(s) C lives in normalized coordinates; X C == Xn B
    B = np.zeros((live.size, m))
    if C0 is not None:
        C0 = np.asarray(C0, dtype=float)
        if C0.shape != (d, m):
            raise DimensionError(f"C0 has shape {C0.shape}, expected {(d, m)}")
        B = C0[live] * s[:, None]

    def objective(B):
        # penalty sum_i ||C_i|| = sum_i ||B_i|| / s_i
        fit = yy - 2.0 * np.sum(B * XtY) + np.sum(B * (G @ B))
        return max(fit, 0.0) + lambda_s * float(np.sum(np.linalg.norm(B, axis=1) / s))

    # C = 0 is optimal exactly when lambda_s >= lambda_max
    if lambda_s >= ssa_lambda_max(X, Y):
        zero = np.zeros((d, m))
        return SsaSolution(zero, float(lambda_s), np.array([objective(zero[live])]), np.array([], dtype=np.int64), True, 0)

    GB = G @ B
    trace = [objective(B)]
    converged = False
    n_iter = 0
    slack = 1e-10 * (yy + 1.0)
    for n_iter in range(1, max_iter + 1):
        prev_B, prev_GB = B.copy(), GB.copy()
        max_change = 0.0
        for i in range(live.size):
            old = B[i].copy()
            # unit-norm column: unregularized row minimizer is X_i^T (residual + X_i B_i)
            u = XtY[i] - GB[i] + old
            new = group_soft_threshold(u, thresh[i])
            delta = new - old
            if np.any(delta):
                B[i] = new
                GB += np.outer(G[:, i], delta)
                change = np.linalg.norm(delta) / s[i] / (1.0 + np.linalg.norm(new) / s[i])
                max_change = max(max_change, change)
        obj = objective(B)
        if obj > trace[-1] + slack:
            raise AssertionError(f"objective increased at sweep {n_iter}: {trace[-1]} -> {obj}")
        if obj > trace[-1]:
            # rounding-level rise: no further progress is possible, keep the previous sweep
            B, GB = prev_B, prev_GB
            converged = True
            break
        trace.append(obj)
        if max_change < tol:
            converged = True
            break
    if not converged:
        log.warning("ssa_fit did not converge in %d sweeps (lambda_s=%g)", max_iter, lambda_s)

    C = np.zeros((d, m))
    C[live] = B / s[:, None]
    active = np.flatnonzero(np.any(C != 0.0, axis=1))
    return SsaSolution(C, float(lambda_s), np.asarray(trace), active, converged, n_iter)
