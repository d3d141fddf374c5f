"""Dense reference solvers used as ground truth."""

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .barrier import BarrierConfig, StepSolution, solve
from .errors import Infeasible, RankDeficient, SingularSystem, TooLarge


@dataclass
class DenseSolveResult:
    solution: np.ndarray
    residual_norm: float
    condition_estimate: float


def solve_kkt_dense(kkt):
    """Direct solve of the full KKT system; returns ``(dx, v, result)``.

    The system is symmetrically equilibrated by ``diag(D^{-1/2}, I)`` before
    the LU solve, which keeps it well scaled when ``D`` spans many decades.
    The reported residual is ``||K z - rhs||`` in the original scaling.
    """
    K = kkt.matrix()
    rhs = kkt.rhs()
    k = kkt.k
    scale = np.ones(len(rhs))
    scale[:k] = 1.0 / np.sqrt(kkt.D)
    Ks = K * scale[:, None] * scale[None, :]
    try:
        lu = scipy.linalg.lu_factor(Ks, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularSystem(str(exc)) from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.abs(Ks).max()):
        raise SingularSystem("KKT matrix is numerically singular")
    z = scale * scipy.linalg.lu_solve(lu, scale * rhs)
    if not np.all(np.isfinite(z)):
        raise SingularSystem("non-finite KKT solution")
    residual = float(np.linalg.norm(K @ z - rhs))
    cond = float(np.linalg.cond(Ks, 1)) if len(rhs) <= 2000 else math.nan
    return z[:k], z[k:], DenseSolveResult(z, residual, cond)


def solve_ls_dense(ls):
    """Least-squares minimizer through a pivoted QR factorization."""
    F = ls.F.toarray() if hasattr(ls.F, "toarray") else np.asarray(ls.F, dtype=float)
    g = np.asarray(ls.g, dtype=float)
    rows, cols = F.shape
    if rows < cols:
        raise RankDeficient(f"F has {rows} rows but {cols} columns")
    Q, R, perm = scipy.linalg.qr(F, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if cols and diag[-1] <= max(rows, cols) * np.finfo(float).eps * diag[0]:
        raise RankDeficient("F is numerically rank deficient")
    z = np.empty(cols)
    z[perm] = scipy.linalg.solve_triangular(R, Q.T @ g)
    return z


def ls_gradient_norm(ls, z):
    """||F^T (F z - g)|| for residual checks."""
    return float(np.linalg.norm(ls.F.T @ (ls.F @ z - ls.g)))


class DenseBackend:
    """Barrier backend that solves every Newton system exactly."""

    def __call__(self, kkt):
        dx, v, result = solve_kkt_dense(kkt)
        return StepSolution(dx=dx, v=v, inner_iterations=0, converged=True,
                            extra={"kkt_residual": result.residual_norm})


def lp_vertex_enumeration(problem, tol=1e-9):
    """Brute-force LP optimum over basic feasible points; tiny instances only."""
    H, b, q = problem.H, problem.b, problem.q
    m, n = H.shape
    if n + m > 12:
        raise TooLarge(f"vertex enumeration limited to n + m <= 12 (got {n + m})")
    # Rows of G y >= h: illuminance, y >= 0, -y >= -1.
    G = np.vstack([H, np.eye(n), -np.eye(n)])
    h = np.concatenate([b, np.zeros(n), -np.ones(n)])
    best, best_y = np.inf, None
    for active in itertools.combinations(range(len(h)), n):
        sub = G[list(active)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        y = np.linalg.solve(sub, h[list(active)])
        if np.all(G @ y >= h - tol * (1 + np.abs(h))):
            value = q @ y
            if value < best - 1e-15:
                best, best_y = value, y
    if best_y is None:
        raise Infeasible("no feasible vertex")
    return np.clip(best_y, 0.0, 1.0)


def reference_barrier_solve(problem, config=None, on_kkt=None):
    """Barrier method with the dense KKT backend; returns ``(y, report)``."""
    return solve(problem, config or BarrierConfig(), DenseBackend(), on_kkt=on_kkt)
