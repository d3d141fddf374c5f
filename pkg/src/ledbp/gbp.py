"""Factor graphs over LS problems and synchronous Gaussian belief propagation.

Messages are stored per edge as (mean, precision).  A precision of zero is an
uninformative message.  Each factor is the linear-Gaussian likelihood
``N(g_i | sum_k F_ik z_k, 1)``.
"""

import csv
from dataclasses import dataclass, field

import numba
import numpy as np

from .barrier import StepSolution
from .errors import NumericalOverflow, UnsupportedMethod
from .lsforms import (
    FEASIBLE_ELIMINATION,
    GRAPH_METHODS,
    build,
    recover_newton_step,
)

OVERFLOW = 1e300

VARIABLE_KINDS = {"dy": "dy", "ds": "ds", "v": "v"}
FACTOR_KINDS = ("f_u", "f_lu", "f_ul")


@dataclass
class Message:
    mean: float = 0.0
    precision: float = 0.0

    def __post_init__(self):
        if self.precision < 0:
            raise ValueError("precision must be non-negative")

    @property
    def variance(self):
        return np.inf if self.precision == 0 else 1.0 / self.precision


@dataclass
class FactorGraph:
    """Bipartite graph with one factor per row and one variable per column of F.

    Edges are stored in row-major (factor) order: ``edge_factor``,
    ``edge_var`` and ``edge_coef`` are parallel arrays and ``factor_ptr``
    delimits each factor's edges.  ``var_ptr``/``var_edges`` give the same
    edges grouped by variable.
    """

    variable_kinds: list
    variable_labels: list
    factor_kinds: list
    factor_labels: list
    target: np.ndarray
    noise_variance: np.ndarray
    factor_ptr: np.ndarray
    edge_factor: np.ndarray
    edge_var: np.ndarray
    edge_coef: np.ndarray
    var_ptr: np.ndarray = field(init=False)
    var_edges: np.ndarray = field(init=False)
    method: str = ""

    def __post_init__(self):
        order = np.argsort(self.edge_var, kind="stable")
        self.var_edges = order.astype(np.int64)
        counts = np.bincount(self.edge_var, minlength=self.n_variables)
        self.var_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        if np.any(self.edge_coef == 0):
            raise ValueError("edge coefficients must be nonzero")
        if self.n_edges and (np.any(np.diff(self.factor_ptr) == 0) or np.any(counts == 0)):
            raise ValueError("every factor and variable needs at least one edge")

    @property
    def n_variables(self):
        return len(self.variable_kinds)

    @property
    def n_factors(self):
        return len(self.factor_kinds)

    @property
    def n_edges(self):
        return len(self.edge_var)

    @property
    def edges(self):
        return list(zip(self.edge_factor.tolist(), self.edge_var.tolist(), self.edge_coef.tolist()))

    def factor_degrees(self):
        return np.diff(self.factor_ptr)

    def variable_degrees(self):
        return np.diff(self.var_ptr)

    def factor_neighbors(self, i):
        return self.edge_var[self.factor_ptr[i]:self.factor_ptr[i + 1]]

    def variable_neighbors(self, j):
        return self.edge_factor[self.var_edges[self.var_ptr[j]:self.var_ptr[j + 1]]]

    def factors_of_kind(self, kind):
        return [lab for kd, lab in zip(self.factor_kinds, self.factor_labels) if kd == kind]

    def find_factor(self, label):
        return self.factor_labels.index(label)

    def find_variable(self, label):
        return self.variable_labels.index(label)

    def with_target(self, g):
        """Same topology and coefficients with a different target vector."""
        clone = FactorGraph(
            self.variable_kinds, self.variable_labels, self.factor_kinds, self.factor_labels,
            np.asarray(g, dtype=float), self.noise_variance, self.factor_ptr,
            self.edge_factor, self.edge_var, self.edge_coef, method=self.method,
        )
        return clone


def build_factor_graph(ls):
    if ls.method not in GRAPH_METHODS:
        raise UnsupportedMethod(
            f"no factor graph for {ls.method!r}; its Schur-complement rows do not follow "
            "the LED/UD communication pattern"
        )
    F = ls.F.tocsr()
    F.sort_indices()
    ptr = F.indptr.astype(np.int64)
    edge_var = F.indices.astype(np.int64)
    edge_coef = F.data.astype(float)
    edge_factor = np.repeat(np.arange(F.shape[0]), np.diff(ptr)).astype(np.int64)
    keep = edge_coef != 0
    if not keep.all():
        F = F.copy()
        F.eliminate_zeros()
        return build_factor_graph(type(ls)(F, ls.g, ls.method, ls.column_labels, ls.row_labels))
    return FactorGraph(
        variable_kinds=[VARIABLE_KINDS[lab[0]] for lab in ls.column_labels],
        variable_labels=list(ls.column_labels),
        factor_kinds=[lab[0] for lab in ls.row_labels],
        factor_labels=list(ls.row_labels),
        target=np.asarray(ls.g, dtype=float),
        noise_variance=np.ones(F.shape[0]),
        factor_ptr=ptr,
        edge_factor=edge_factor,
        edge_var=edge_var,
        edge_coef=edge_coef,
        method=ls.method,
    )


# -- message rules on explicit lists ---------------------------------------


def variable_to_factor(incoming):
    """Product of the incoming Gaussians (already excluding the target factor)."""
    prec = sum(msg.precision for msg in incoming)
    if prec == 0:
        return Message(0.0, 0.0)
    mean = sum(msg.precision * msg.mean for msg in incoming if msg.precision > 0) / prec
    return Message(mean, prec)


def factor_to_variable(coef_j, target, others, noise_variance=1.0):
    """Message from a linear factor to the variable with coefficient ``coef_j``.

    ``others`` pairs each remaining coefficient with the variable-to-factor
    message from that variable.
    """
    mean = target
    var = noise_variance
    for coef, msg in others:
        mean -= coef * msg.mean if msg.precision > 0 else 0.0
        var += coef**2 * msg.variance
    mean /= coef_j
    var /= coef_j**2
    return Message(mean, 0.0 if np.isinf(var) else 1.0 / var)


# -- vectorized kernels ------------------------------------------------------


@numba.njit(cache=True)
def _var_to_factor(var_ptr, var_edges, fv_mean, fv_prec, vf_mean, vf_prec):
    n_var = len(var_ptr) - 1
    for j in range(n_var):
        lo, hi = var_ptr[j], var_ptr[j + 1]
        # exclusive prefix sums stored in the outputs, then add suffixes
        acc_p = 0.0
        acc_pm = 0.0
        for a in range(lo, hi):
            e = var_edges[a]
            vf_prec[e] = acc_p
            vf_mean[e] = acc_pm
            acc_p += fv_prec[e]
            acc_pm += fv_prec[e] * fv_mean[e]
        acc_p = 0.0
        acc_pm = 0.0
        for a in range(hi - 1, lo - 1, -1):
            e = var_edges[a]
            p = vf_prec[e] + acc_p
            pm = vf_mean[e] + acc_pm
            vf_prec[e] = p
            vf_mean[e] = pm / p if p > 0 else 0.0
            acc_p += fv_prec[e]
            acc_pm += fv_prec[e] * fv_mean[e]


@numba.njit(cache=True)
def _factor_to_var(factor_ptr, coef, target, noise, vf_mean, vf_prec, fv_mean, fv_prec):
    n_fac = len(factor_ptr) - 1
    for i in range(n_fac):
        lo, hi = factor_ptr[i], factor_ptr[i + 1]
        acc_m = 0.0
        acc_v = 0.0
        for e in range(lo, hi):
            fv_mean[e] = acc_m
            fv_prec[e] = acc_v
            acc_m += coef[e] * vf_mean[e]
            if vf_prec[e] > 0:
                acc_v += coef[e] * coef[e] / vf_prec[e]
            else:
                acc_v = np.inf
        acc_m = 0.0
        acc_v = 0.0
        for e in range(hi - 1, lo - 1, -1):
            sm = fv_mean[e] + acc_m
            sv = fv_prec[e] + acc_v
            c = coef[e]
            fv_mean[e] = (target[i] - sm) / c
            var = (noise[i] + sv) / (c * c)
            fv_prec[e] = 1.0 / var if var < np.inf else 0.0
            acc_m += c * vf_mean[e]
            if vf_prec[e] > 0:
                acc_v += c * c / vf_prec[e]
            else:
                acc_v = np.inf


@numba.njit(cache=True)
def _marginals(var_ptr, var_edges, fv_mean, fv_prec, mean, var):
    n_var = len(var_ptr) - 1
    for j in range(n_var):
        p = 0.0
        pm = 0.0
        for a in range(var_ptr[j], var_ptr[j + 1]):
            e = var_edges[a]
            p += fv_prec[e]
            pm += fv_prec[e] * fv_mean[e]
        if p > 0:
            mean[j] = pm / p
            var[j] = 1.0 / p
        else:
            mean[j] = 0.0
            var[j] = np.inf


@numba.njit(cache=True)
def _precision_sweeps(var_ptr, var_edges, factor_ptr, coef, noise, vf_prec, fv_prec, tol, max_sweeps,
                      fresh=True):
    """Undamped precision-only sweeps; returns (sweeps, last relative change)."""
    E = len(coef)
    new = np.empty(E)
    pre = np.empty(E)
    n_var = len(var_ptr) - 1
    n_fac = len(factor_ptr) - 1
    change = np.inf
    for sweep in range(1, max_sweeps + 1):
        if sweep > 1 or not fresh:
            for j in range(n_var):
                lo, hi = var_ptr[j], var_ptr[j + 1]
                acc = 0.0
                for a in range(lo, hi):
                    e = var_edges[a]
                    pre[e] = acc
                    acc += fv_prec[e]
                acc = 0.0
                for a in range(hi - 1, lo - 1, -1):
                    e = var_edges[a]
                    vf_prec[e] = pre[e] + acc
                    acc += fv_prec[e]
        for i in range(n_fac):
            lo, hi = factor_ptr[i], factor_ptr[i + 1]
            acc = 0.0
            for e in range(lo, hi):
                pre[e] = acc
                if vf_prec[e] > 0:
                    acc += coef[e] * coef[e] / vf_prec[e]
                else:
                    acc = np.inf
            acc = 0.0
            for e in range(hi - 1, lo - 1, -1):
                c = coef[e]
                var = (noise[i] + pre[e] + acc) / (c * c)
                new[e] = 1.0 / var if var < np.inf else 0.0
                if vf_prec[e] > 0:
                    acc += c * c / vf_prec[e]
                else:
                    acc = np.inf
        # Precisions on a loop can decay geometrically to exactly zero, so the
        # relative change is floored at 1e-12 of coef^2 (the largest possible value).
        change = 0.0
        for e in range(E):
            d = abs(new[e] - fv_prec[e])
            if d > 0:
                r = d / (abs(new[e]) + 1e-12 * coef[e] * coef[e])
                if r > change:
                    change = r
            fv_prec[e] = new[e]
        if (sweep > 1 or not fresh) and change <= tol:
            return sweep, change
    return max_sweeps, change


def default_prior_precision(graph):
    """Seed precision for the first variable-to-factor sweep.

    When every variable touches a degree-one factor (the elimination form)
    BP bootstraps from uninformative messages.  Otherwise (the generic KKT
    form) uninformative messages would never become informative, so the
    first sweep starts from unit-variance messages.
    """
    unary = graph.factor_degrees() == 1
    anchored = np.zeros(graph.n_variables, dtype=bool)
    anchored[graph.edge_var[unary[graph.edge_factor]]] = True
    return 0.0 if anchored.all() else 1.0


@dataclass
class GbpConfig:
    tol: float = 1e-14
    tau_max: int = 2000
    damping_probability: float = 0.6
    damping_weight: float = 0.5
    seed: int = 0
    prior_precision: float | None = None
    relative_tol: bool = True

    def __post_init__(self):
        if not 0 <= self.damping_probability <= 1:
            raise ValueError("damping_probability must be in [0, 1]")
        if not 0 < self.damping_weight <= 1:
            raise ValueError("damping_weight must be in (0, 1]")
        if self.tol <= 0 or self.tau_max < 1:
            raise ValueError("tol must be positive and tau_max at least 1")

    @classmethod
    def undamped(cls, **kwargs):
        return cls(damping_probability=0.0, **kwargs)


@dataclass
class GbpReport:
    converged: bool
    tau: int
    marginal_means: np.ndarray
    marginal_variances: np.ndarray
    max_delta: float
    trace: list = field(default_factory=list)
    fv_mean: np.ndarray = None
    fv_prec: np.ndarray = None
    variance_trace: list = field(default_factory=list)


class GbpState:
    """Edge message arrays for one run; exposes the two half-iterations."""

    def __init__(self, graph, prior_precision=0.0):
        E = graph.n_edges
        self.graph = graph
        self.fv_mean = np.zeros(E)
        self.fv_prec = np.zeros(E)
        self.vf_mean = np.zeros(E)
        self.vf_prec = np.full(E, float(prior_precision))
        self._first = True

    def variable_half(self):
        if self._first:
            self._first = False
            return
        g = self.graph
        _var_to_factor(g.var_ptr, g.var_edges, self.fv_mean, self.fv_prec, self.vf_mean, self.vf_prec)

    def factor_half(self):
        g = self.graph
        mean = np.empty_like(self.fv_mean)
        prec = np.empty_like(self.fv_prec)
        _factor_to_var(g.factor_ptr, g.edge_coef, g.target, g.noise_variance,
                       self.vf_mean, self.vf_prec, mean, prec)
        return mean, prec

    def marginals(self):
        g = self.graph
        mean = np.empty(g.n_variables)
        var = np.empty(g.n_variables)
        _marginals(g.var_ptr, g.var_edges, self.fv_mean, self.fv_prec, mean, var)
        return mean, var


def run_gbp(graph, config=None, trace=False, record_variances=False):
    """Synchronous Gaussian BP with randomized damping of factor-to-variable means.

    Stops when the largest change of a factor-to-variable mean is at most
    ``tol`` (scaled by ``max(1, max |mean|)`` when ``relative_tol``) or after
    ``tau_max`` iterations.  Raises :class:`NumericalOverflow` when a mean
    exceeds 1e300 in magnitude.
    """
    if config is None:
        config = GbpConfig()
    prior = config.prior_precision
    if prior is None:
        prior = default_prior_precision(graph)
    state = GbpState(graph, prior)
    rng = np.random.default_rng(config.seed)
    E = graph.n_edges
    per_iter = 2 * E
    rows = []
    variances = []
    converged = False
    delta = np.inf
    tau = 0
    for tau in range(1, config.tau_max + 1):
        state.variable_half()
        mean, prec = state.factor_half()
        if config.damping_probability > 0:
            damp = rng.random(E) < config.damping_probability
            w = config.damping_weight
            mean = np.where(damp, w * mean + (1 - w) * state.fv_mean, mean)
        big = np.abs(mean).max(initial=0.0)
        if not np.isfinite(big) or big > OVERFLOW:
            raise NumericalOverflow(f"GBP mean exceeded {OVERFLOW:g} at tau={tau}", tau=tau)
        delta = np.abs(mean - state.fv_mean).max(initial=0.0)
        state.fv_mean = mean
        state.fv_prec = prec
        if record_variances:
            variances.append(prec.copy())
        if trace:
            rows.append((tau, delta, per_iter))
        threshold = config.tol * max(1.0, big) if config.relative_tol else config.tol
        # Factor messages with uninformative inputs are still settling for tau = 1.
        if tau > 1 and delta <= threshold:
            converged = True
            break
    means, variances_out = state.marginals()
    return GbpReport(
        converged=converged,
        tau=tau,
        marginal_means=means,
        marginal_variances=variances_out,
        max_delta=float(delta),
        trace=rows,
        fv_mean=state.fv_mean,
        fv_prec=state.fv_prec,
        variance_trace=variances,
    )


def write_trace_csv(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "max_delta_mean", "messages"])
        for tau, delta, msgs in report.trace:
            writer.writerow([tau, repr(float(delta)), msgs])


def communication_ledger(graph, tau):
    """Message counts: one message each way on every edge per iteration."""
    per_iteration = 2 * graph.n_edges
    return {"messages_per_iteration": per_iteration, "total_messages": per_iteration * int(tau)}


class GbpBackend:
    """Barrier backend that solves each Newton system with Gaussian BP.

    ``method`` picks the LS form.  Each call draws a fresh damping seed from
    ``config.seed`` and the call index, so a whole solve is reproducible.
    With ``fallback`` a Newton system on which BP fails is solved densely
    instead, so the trajectory can continue; the step still reports
    ``converged=False`` and ``extra["fallback"]`` is set.
    """

    def __init__(self, method=FEASIBLE_ELIMINATION, config=None, fallback=False):
        if method not in GRAPH_METHODS:
            raise UnsupportedMethod(f"GBP backend cannot use {method!r}")
        self.method = method
        self.config = config or GbpConfig()
        self.fallback = fallback
        self.calls = 0

    def __call__(self, kkt):
        ls = build(kkt, self.method)
        graph = build_factor_graph(ls)
        seed = np.random.SeedSequence([self.config.seed, self.calls]).generate_state(1)[0]
        self.calls += 1
        cfg = GbpConfig(**{**self.config.__dict__, "seed": int(seed)})
        try:
            result = run_gbp(graph, cfg)
        except NumericalOverflow as exc:
            if not self.fallback:
                raise
            return self._dense_step(kkt, graph, exc.tau)
        if not result.converged and self.fallback:
            return self._dense_step(kkt, graph, result.tau)
        z = result.marginal_means
        if self.method == FEASIBLE_ELIMINATION:
            v = z
            dx = recover_newton_step(kkt, v)
        else:
            dx, v = z[: kkt.k], z[kkt.k:]
        extra = {"edges": graph.n_edges, "messages": communication_ledger(graph, result.tau)["total_messages"]}
        return StepSolution(dx=dx, v=v, inner_iterations=result.tau,
                            converged=result.converged, extra=extra)

    def _dense_step(self, kkt, graph, tau):
        from .oracle import solve_kkt_dense

        dx, v, _ = solve_kkt_dense(kkt)
        extra = {"edges": graph.n_edges, "messages": communication_ledger(graph, tau)["total_messages"],
                 "fallback": True}
        return StepSolution(dx=dx, v=v, inner_iterations=tau, converged=False, extra=extra)
