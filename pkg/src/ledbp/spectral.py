"""Convergence analysis of synchronous Gaussian BP.

Once the message precisions settle, the undamped mean update is affine in
the factor-to-variable means, ``m' = Omega m + offset``.  BP converges iff
the spectral radius of ``Omega`` is below one; along a Newton trajectory the
worst case over all outer iterations decides.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import PowerIterationStall, VarianceNonconvergence
from .gbp import GbpState, _precision_sweeps, build_factor_graph, default_prior_precision


@dataclass
class SpectralReport:
    rho_per_nu: list = field(default_factory=list)
    rho_max: float = 0.0
    method: str = ""

    def to_dict(self):
        return {"rho_per_nu": [list(p) for p in self.rho_per_nu], "rho_max": self.rho_max,
                "method": self.method}


def variance_fixed_point(graph, prior_precision=None, tol=1e-12, max_sweeps=10_000,
                         accept_tol=None):
    """Iterate the (mean-independent) precision updates to their fixed point.

    Returns ``(fv_prec, vf_prec)``, the factor-to-variable and
    variable-to-factor precisions per edge.  Near-singular systems approach
    the fixed point sublinearly; ``accept_tol`` lets such runs through when
    the last relative change is below it instead of raising.
    """
    if prior_precision is None:
        prior_precision = default_prior_precision(graph)
    E = graph.n_edges
    vf_prec = np.full(E, float(prior_precision))
    fv_prec = np.zeros(E)
    sweeps, change = _precision_sweeps(
        graph.var_ptr, graph.var_edges, graph.factor_ptr, graph.edge_coef,
        graph.noise_variance, vf_prec, fv_prec, tol, max_sweeps,
    )
    if change > tol and (accept_tol is None or change > accept_tol):
        raise VarianceNonconvergence(
            f"precisions still moving after {sweeps} sweeps (relative change {change:.2e})"
        )
    # The sweep cannot tell precisions under its 1e-12 coef^2 floor from zero;
    # such messages are decaying towards uninformative, so make them exactly that.
    fv_prec[fv_prec < 1e-12 * graph.edge_coef**2] = 0.0
    # variable-to-factor precisions consistent with the final factor messages
    state = GbpState(graph)
    state._first = False
    state.fv_prec = fv_prec
    state.variable_half()
    return fv_prec, state.vf_prec.copy()


def _exclusive_pairs(ptr, members):
    """All ordered pairs (a, b), a != b, inside each group of ``members``."""
    rows, cols = [], []
    for lo, hi in zip(ptr[:-1], ptr[1:]):
        group = members[lo:hi]
        if len(group) < 2:
            continue
        a, b = np.meshgrid(group, group, indexing="ij")
        off = a != b
        rows.append(a[off])
        cols.append(b[off])
    if not rows:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def evolution_factors(graph, fv_prec):
    """Sparse ``(M, W)`` with ``Omega = M @ W``.

    ``W`` maps factor-to-variable means to variable-to-factor means (a
    precision-weighted average over the other factors of the variable) and
    ``M`` maps those to new factor-to-variable means.
    """
    E = graph.n_edges
    fv_prec = np.asarray(fv_prec, dtype=float)

    # W[b, c]: c and b share a variable, c != b.
    b_idx, c_idx = _exclusive_pairs(graph.var_ptr, graph.var_edges)
    totals = np.zeros(E)
    np.add.at(totals, b_idx, fv_prec[c_idx])
    safe = totals[b_idx] > 0
    w_val = np.zeros(len(b_idx))
    w_val[safe] = fv_prec[c_idx[safe]] / totals[b_idx[safe]]
    W = sp.csr_matrix((w_val, (b_idx, c_idx)), shape=(E, E))
    W.eliminate_zeros()

    # M[a, b]: a and b share a factor, b != a.
    edges = np.arange(E)
    a_idx, bb_idx = _exclusive_pairs(graph.factor_ptr, edges)
    coef = graph.edge_coef
    M = sp.csr_matrix((-coef[bb_idx] / coef[a_idx], (a_idx, bb_idx)), shape=(E, E))
    return M, W


def mean_evolution_matrix(graph, precisions=None):
    """Sparse Omega over factor-to-variable edges (in graph edge order)."""
    if precisions is None:
        precisions = variance_fixed_point(graph)[0]
    elif isinstance(precisions, tuple):
        precisions = precisions[0]
    M, W = evolution_factors(graph, precisions)
    return sp.csr_matrix(M @ W)


def mean_evolution_operator(graph, precisions=None):
    """Matrix-free Omega as a :class:`scipy.sparse.linalg.LinearOperator`."""
    if precisions is None:
        precisions = variance_fixed_point(graph)[0]
    elif isinstance(precisions, tuple):
        precisions = precisions[0]
    M, W = evolution_factors(graph, precisions)
    E = graph.n_edges
    return spla.LinearOperator((E, E), matvec=lambda x: M @ (W @ x), dtype=float)


def mean_offset(graph):
    """Constant part of the undamped mean update, ``g_i / F_ij``."""
    return graph.target[graph.edge_factor] / graph.edge_coef


@dataclass
class RadiusInfo:
    value: float
    method: str
    warning: bool = False


def _dense_radius(Omega):
    A = Omega.toarray() if sp.issparse(Omega) else np.asarray(Omega)
    if A.size == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvals(A)).max())


def _as_matvec(Omega):
    if isinstance(Omega, spla.LinearOperator):
        return Omega.matvec
    if sp.issparse(Omega):
        Omega = Omega.tocsr()
    else:
        Omega = np.asarray(Omega)
    return lambda x: Omega @ x


def power_radius(Omega, iters=1000, tol=1e-8, seed=0, window=20):
    """Spectral radius from the geometric growth rate of ``Omega^k x``.

    Using the growth of the norm over a window, rather than a Rayleigh
    quotient, also works when the dominant eigenvalues form a complex pair.
    Raises :class:`PowerIterationStall` when the estimate does not settle.
    """
    n = Omega.shape[0]
    matvec = _as_matvec(Omega)
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    logs = np.zeros(iters + 1)
    prev_est = None
    for k in range(1, iters + 1):
        x = matvec(x)
        nrm = np.linalg.norm(x)
        if nrm == 0:
            return 0.0
        logs[k] = logs[k - 1] + np.log(nrm)
        x /= nrm
        if k >= 2 * window and k % window == 0:
            est = np.exp((logs[k] - logs[k - window]) / window)
            if prev_est is not None and abs(est - prev_est) <= tol * max(est, 1e-300):
                return float(est)
            prev_est = est
    raise PowerIterationStall(f"power iteration did not settle in {iters} iterations")


def _arnoldi_radius(Omega, tol=1e-10):
    n = Omega.shape[0]
    if n < 4:
        raise ValueError("too small for ARPACK")
    op = Omega if isinstance(Omega, spla.LinearOperator) else spla.aslinearoperator(Omega)
    vals = spla.eigs(op, k=1, which="LM", tol=tol, maxiter=max(1000, 20 * n),
                     return_eigenvectors=False, v0=np.ones(n) / np.sqrt(n))
    return float(np.abs(vals).max())


def spectral_radius(Omega, method="auto", dense_limit=2000, power_iters=1000,
                    power_tol=1e-8, seed=0, return_info=False):
    """Largest eigenvalue modulus of ``Omega``.

    ``method`` is ``"dense"``, ``"power"``, ``"arnoldi"`` or ``"auto"``
    (dense up to ``dense_limit``, power iteration above).  A stalled power
    iteration falls back to a dense solve when the size allows, else returns
    the last estimate with ``warning`` set.
    """
    n = Omega.shape[0]
    if Omega.shape[0] != Omega.shape[1]:
        raise ValueError("Omega must be square")
    if n == 0:
        info = RadiusInfo(0.0, "empty")
        return info if return_info else info.value

    def densify():
        if isinstance(Omega, spla.LinearOperator):
            return Omega @ np.eye(n)
        return Omega

    if method == "auto":
        method = "dense" if n <= dense_limit else "power"

    if method == "dense":
        info = RadiusInfo(_dense_radius(densify()), "dense")
    elif method == "arnoldi":
        try:
            info = RadiusInfo(_arnoldi_radius(Omega), "arnoldi")
        except (spla.ArpackNoConvergence, spla.ArpackError, ValueError):
            info = RadiusInfo(_dense_radius(densify()), "dense")
    elif method == "power":
        try:
            info = RadiusInfo(power_radius(Omega, power_iters, power_tol, seed), "power")
        except PowerIterationStall:
            if n <= 4 * dense_limit:
                info = RadiusInfo(_dense_radius(densify()), "dense")
            else:
                warnings.warn("power iteration stalled; spectral radius is approximate")
                info = RadiusInfo(_power_estimate(Omega, power_iters, seed), "power", True)
    else:
        raise ValueError(f"unknown method {method!r}")
    return info if return_info else info.value


def _power_estimate(Omega, iters, seed):
    matvec = _as_matvec(Omega)
    x = np.random.default_rng(seed).standard_normal(Omega.shape[0])
    total = 0.0
    for _ in range(iters):
        x = matvec(x)
        nrm = np.linalg.norm(x)
        if nrm == 0:
            return 0.0
        total += np.log(nrm)
        x /= nrm
    return float(np.exp(total / iters))


def ls_spectral_radius(ls, method="auto", **kwargs):
    """rho for the factor graph of one LS problem."""
    graph = build_factor_graph(ls)
    fv_prec, _ = variance_fixed_point(graph, accept_tol=kwargs.pop("accept_tol", 1e-6))
    if method in ("dense", "auto") and graph.n_edges <= kwargs.get("dense_limit", 2000):
        Omega = mean_evolution_matrix(graph, fv_prec)
    else:
        Omega = mean_evolution_operator(graph, fv_prec)
    return spectral_radius(Omega, method=method, **kwargs)


def rho_max(trajectory, method="", **kwargs):
    """Worst spectral radius along the outer iterations.

    ``trajectory`` holds one entry per outer iteration: an Omega (matrix or
    operator) or an already computed radius.
    """
    pairs = []
    for nu, item in enumerate(trajectory, start=1):
        rho = float(item) if np.isscalar(item) else spectral_radius(item, **kwargs)
        pairs.append((nu, rho))
    if not pairs:
        raise ValueError("rho_max needs at least one outer iteration")
    return SpectralReport(pairs, max(r for _, r in pairs), method)
