"""Log-barrier Newton method for the dimming LP.

The LP is lifted to ``minimize c^T x + e  s.t.  A x = b,  0 < x < u`` with
``x = [y; s]``, ``A = [H, -I]`` and ``u = [1; inf]``.  Each Newton step solves
the KKT system

    [D  A^T] [dx]     [t c - d]
    [A  0  ] [v ] = - [A x - b]

through a pluggable backend (dense oracle or Gaussian BP).
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    BoundaryPoint,
    ConfigError,
    FeasibilityViolation,
    LedbpError,
    NoInteriorPoint,
    SolverFailure,
    StepCollapse,
)

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"


@dataclass
class AugmentedProblem:
    A: sp.csr_matrix
    c: np.ndarray
    b: np.ndarray
    upper: np.ndarray
    n_leds: int
    m_uds: int
    k: int
    e: float = 0.0

    @property
    def H(self):
        return self.A[:, : self.n_leds]

    @property
    def barrier_terms_count(self):
        """Number of log terms: two per dimming variable, one per slack."""
        return int(np.isfinite(self.upper).sum() + self.k)


@dataclass
class BarrierConfig:
    t0: float = 1.0
    mu: float = 10.0
    gap_tol: float = 1e-6
    newton_tol: float = 1e-10
    nu_max: int = 50
    ls_alpha: float = 0.1
    ls_beta: float = 0.5
    start_mode: str = FEASIBLE
    fixed_t: bool = False
    delta: float = 1e-3
    # A stalled line search ends a stage when lambda^2 / 2 is at most this
    # fraction of the number of barrier terms (the stage's gap in t units).
    stall_tol: float = 1e-2

    def __post_init__(self):
        if not 0 < self.ls_alpha < 0.5:
            raise ValueError("ls_alpha must be in (0, 0.5)")
        if not 0 < self.ls_beta < 1:
            raise ValueError("ls_beta must be in (0, 1)")
        if self.t0 <= 0 or self.gap_tol <= 0 or self.newton_tol <= 0:
            raise ValueError("t0, gap_tol and newton_tol must be positive")
        if self.mu <= 1:
            raise ValueError("mu must exceed 1")
        if self.start_mode not in (FEASIBLE, INFEASIBLE):
            raise ValueError(f"unknown start_mode {self.start_mode!r}")

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class NewtonState:
    x: np.ndarray
    t: float
    nu: int = 0
    D: np.ndarray = None
    d: np.ndarray = None
    v: np.ndarray = None


@dataclass
class KktSystem:
    """Blocks of the Newton system plus what the LS reformulations need."""

    D: np.ndarray
    A: sp.csr_matrix
    rhs_top: np.ndarray
    rhs_bottom: np.ndarray
    x: np.ndarray
    d: np.ndarray
    c: np.ndarray
    b: np.ndarray
    t: float
    n_leds: int
    feasible: bool

    @property
    def k(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]

    def matrix(self):
        """Dense KKT matrix ``[[D, A^T], [A, 0]]``."""
        A = self.A.toarray()
        m, k = A.shape
        K = np.zeros((k + m, k + m))
        K[:k, :k] = np.diag(self.D)
        K[:k, k:] = A.T
        K[k:, :k] = A
        return K

    def rhs(self):
        return np.concatenate([self.rhs_top, self.rhs_bottom])


def augment(problem):
    H = np.asarray(problem.H, dtype=float)
    m, n = H.shape
    A = sp.hstack([sp.csr_matrix(H), -sp.identity(m, format="csr")], format="csr")
    A.eliminate_zeros()
    c = np.concatenate([problem.q, np.zeros(m)])
    upper = np.concatenate([np.ones(n), np.full(m, np.inf)])
    return AugmentedProblem(A, c, problem.b.copy(), upper, n, m, n + m, problem.e)


def _check_interior(aug, x):
    if x.shape != (aug.k,):
        raise ValueError(f"x must have shape ({aug.k},)")
    if not (np.all(x > 0) and np.all(x < aug.upper)):
        bad = np.flatnonzero(~((x > 0) & (x < aug.upper)))
        raise BoundaryPoint(f"x is not strictly interior at components {bad[:5].tolist()}")


def barrier_terms(aug, x):
    """Diagonal Hessian ``D`` and vector ``d`` of the log barrier at ``x``.

    Components with an infinite upper bound drop the ``u - x`` terms.
    """
    x = np.asarray(x, dtype=float)
    _check_interior(aug, x)
    gap = aug.upper - x
    with np.errstate(divide="ignore"):
        inv_gap = np.where(np.isfinite(aug.upper), 1.0 / gap, 0.0)
    D = x**-2 + inv_gap**2
    d = 1.0 / x - inv_gap
    return D, d


def barrier_objective(aug, x, t):
    x = np.asarray(x, dtype=float)
    _check_interior(aug, x)
    finite = np.isfinite(aug.upper)
    logs = np.log(x).sum() + np.log(aug.upper[finite] - x[finite]).sum()
    return t * (aug.c @ x + aug.e) - logs


def barrier_gradient(aug, x, t):
    D, d = barrier_terms(aug, x)
    return t * aug.c - d


def _objective_change(aug, x, dx, eta, t):
    """f(x + eta dx) - f(x) without cancellation against the large f(x)."""
    finite = np.isfinite(aug.upper)
    change = t * eta * (aug.c @ dx)
    change -= np.log1p(eta * dx / x).sum()
    change -= np.log1p(-eta * dx[finite] / (aug.upper[finite] - x[finite])).sum()
    return change


def assemble_kkt(aug, state, feasible=True):
    D, d = barrier_terms(aug, state.x)
    state.D, state.d = D, d
    residual = aug.b - aug.A @ state.x
    if feasible:
        worst = np.abs(residual).max() if residual.size else 0.0
        if worst > 1e-10 * max(1.0, np.abs(aug.b).max(initial=0.0)):
            raise FeasibilityViolation(f"||A x - b||_inf = {worst:.3e} in feasible mode")
        residual = np.zeros_like(residual)
    return KktSystem(
        D=D,
        A=aug.A,
        rhs_top=d - state.t * aug.c,
        rhs_bottom=residual,
        x=state.x.copy(),
        d=d,
        c=aug.c,
        b=aug.b,
        t=state.t,
        n_leds=aug.n_leds,
        feasible=feasible,
    )


def newton_decrement(D, dx):
    return math.sqrt(max(float(np.dot(dx, D * dx)), 0.0))


def max_interior_step(aug, x, dx):
    """Largest eta keeping ``0 < x + eta dx < u`` (inf if unbounded)."""
    eta = np.inf
    down = dx < 0
    if down.any():
        eta = min(eta, np.min(-x[down] / dx[down]))
    up = (dx > 0) & np.isfinite(aug.upper)
    if up.any():
        eta = min(eta, np.min((aug.upper[up] - x[up]) / dx[up]))
    return eta


def kkt_residual(aug, x, v, t):
    """Stacked residual ``[t c - d + A^T v; A x - b]`` for infeasible start."""
    _, d = barrier_terms(aug, x)
    return np.concatenate([t * aug.c - d + aug.A.T @ v, aug.A @ x - aug.b])


def line_search(aug, state, dx, v, config, min_step=1e-12):
    """Backtracking step size for the Newton direction ``dx``.

    In feasible mode the barrier objective must satisfy the Armijo condition.
    In infeasible mode the norm of the full KKT residual must shrink; ``v`` is
    then the new dual estimate returned by the backend.
    """
    if not np.any(dx):
        raise ValueError("line search needs a nonzero direction")
    x = state.x
    eta = min(1.0, 0.99 * max_interior_step(aug, x, dx))
    alpha, beta = config.ls_alpha, config.ls_beta

    if config.start_mode == FEASIBLE or v is None:
        slope = float((state.t * aug.c - state.d) @ dx)
        if slope >= 0:
            raise StepCollapse(f"direction is not a descent direction (slope {slope:.3e})")
        while _objective_change(aug, x, dx, eta, state.t) > alpha * eta * slope:
            eta *= beta
            if eta < min_step:
                raise StepCollapse("backtracking shrank the step below 1e-12")
        return eta

    r0 = np.linalg.norm(kkt_residual(aug, x, state.v, state.t))
    dv = v - state.v
    while True:
        trial = x + eta * dx
        if np.all(trial > 0) and np.all(trial < aug.upper):
            r = np.linalg.norm(kkt_residual(aug, trial, state.v + eta * dv, state.t))
            if r <= (1 - alpha * eta) * r0:
                return eta
        eta *= beta
        if eta < min_step:
            raise StepCollapse("backtracking shrank the step below 1e-12")


def take_step(x, eta, dx):
    return x + eta * dx


def initial_point(aug, mode=FEASIBLE, delta=1e-3):
    n = aug.n_leds
    y0 = np.full(n, 1.0 - delta)
    s0 = aug.H @ y0 - aug.b
    if mode == FEASIBLE:
        if np.any(s0 <= 0):
            raise NoInteriorPoint(
                f"H y0 - b has non-positive entries (min {s0.min():.3e}); use infeasible start"
            )
    else:
        s0 = np.maximum(s0, delta)
    return np.concatenate([y0, s0])


@dataclass
class StepSolution:
    """What a backend hands back for one Newton system."""

    dx: np.ndarray
    v: np.ndarray
    inner_iterations: int = 0
    converged: bool = True
    extra: dict = field(default_factory=dict)


@dataclass
class SolveReport:
    records: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    y: list = None
    objective: float = None
    t_final: float = None
    gap_bound: float = None

    @property
    def inner_iterations(self):
        return [r["inner_iterations"] for r in self.records]

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=1, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _center(aug, state, config, backend, report, stage, on_kkt):
    feasible = config.start_mode == FEASIBLE
    n = aug.n_leds
    for nu in range(1, config.nu_max + 1):
        state.nu = nu
        primal_ok = feasible or (
            np.abs(aug.A @ state.x - aug.b).max() <= 1e-8 * max(1.0, np.abs(aug.b).max())
        )
        kkt = assemble_kkt(aug, state, feasible=feasible)
        if on_kkt is not None:
            on_kkt(kkt, state)
        try:
            step = backend(kkt)
        except LedbpError as exc:
            raise SolverFailure(f"{type(exc).__name__}: {exc}", state.t, nu) from exc
        dx = np.array(step.dx, dtype=float)
        if feasible:
            # Keep A dx = 0 exactly even when the backend is inexact.
            dx[n:] = aug.H @ dx[:n]
        lam = newton_decrement(state.D, dx)
        record = {
            "stage": stage,
            "t": state.t,
            "nu": nu,
            "lambda": lam,
            "eta": 0.0,
            "inner_iterations": step.inner_iterations,
            "converged": step.converged,
            "residual": float(np.abs(aug.A @ state.x - aug.b).max()),
        }
        record.update(step.extra)
        if primal_ok and lam**2 / 2 <= config.newton_tol:
            report.records.append(record)
            return
        if not np.any(dx):
            report.records.append(record)
            return
        try:
            if feasible:
                eta = line_search(aug, state, dx, None, config)
            else:
                mode_cfg = config
                if primal_ok:
                    # Residual already vanished: finish with the objective line search.
                    mode_cfg = BarrierConfig(**{**asdict(config), "start_mode": FEASIBLE})
                eta = line_search(aug, state, dx, step.v, mode_cfg)
        except StepCollapse as exc:
            # At large t rounding in t c - d swamps tiny decrements.
            if primal_ok and lam**2 / 2 <= config.stall_tol * aug.barrier_terms_count:
                record["stalled"] = True
                report.records.append(record)
                return
            raise SolverFailure(f"StepCollapse: {exc}", state.t, nu) from exc
        if not feasible:
            state.v = state.v + eta * (step.v - state.v)
        x_new = take_step(state.x, eta, dx)
        if feasible:
            x_new[n:] = aug.H @ x_new[:n] - aug.b
        _check_interior(aug, x_new)
        state.x = x_new
        record["eta"] = eta
        report.records.append(record)


def solve(problem, config=None, backend=None, on_kkt=None):
    """Minimize energy subject to illuminance requirements.

    Returns ``(y, report)``.  ``backend`` maps a :class:`KktSystem` to an
    object with ``dx``, ``v``, ``inner_iterations``, ``converged`` and
    ``extra`` attributes; it defaults to the dense oracle.  ``on_kkt`` is
    called with every assembled system before it is solved.
    """
    if config is None:
        config = BarrierConfig()
    if backend is None:
        from .oracle import DenseBackend

        backend = DenseBackend()
    aug = augment(problem)
    x0 = initial_point(aug, config.start_mode, config.delta)
    state = NewtonState(x=x0, t=config.t0, v=np.zeros(aug.m_uds))
    report = SolveReport()
    terms = aug.barrier_terms_count
    stage = 0
    while True:
        stage += 1
        _center(aug, state, config, backend, report, stage, on_kkt)
        report.stages.append({"stage": stage, "t": state.t, "newton_steps": state.nu})
        if config.fixed_t or terms / state.t < config.gap_tol:
            break
        state.t *= config.mu

    y = state.x[: aug.n_leds]
    clipped = np.clip(y, 0.0, 1.0)
    if np.abs(clipped - y).max(initial=0.0) > 1e-10:
        raise BoundaryPoint("final dimming vector left [0, 1] by more than 1e-10")
    report.y = clipped.tolist()
    report.objective = float(problem.q @ clipped + problem.e)
    report.t_final = state.t
    report.gap_bound = terms / state.t
    return clipped, report
