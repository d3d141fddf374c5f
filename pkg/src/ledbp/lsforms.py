"""Least-squares forms of the Newton KKT system.

Column labels are ``("dy", i)``, ``("ds", j)`` or ``("v", j)``; row labels
name the factor each row becomes: ``("f_lu", i)`` for LED rows, ``("f_u", j)``
for UD-local rows and ``("f_ul", j)`` for UD rows that gather LED steps.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

INFEASIBLE_GENERIC = "infeasible_generic"
FEASIBLE_GENERIC = "feasible_generic"
INFEASIBLE_ELIMINATION_1 = "infeasible_elimination_1"
INFEASIBLE_ELIMINATION_2 = "infeasible_elimination_2"
FEASIBLE_ELIMINATION = "feasible_elimination"

GRAPH_METHODS = (INFEASIBLE_GENERIC, FEASIBLE_GENERIC, FEASIBLE_ELIMINATION)


@dataclass
class LsProblem:
    """``minimize ||F z - g||^2`` with labelled rows and columns."""

    F: sp.csr_matrix
    g: np.ndarray
    method: str
    column_labels: list
    row_labels: list

    def __post_init__(self):
        rows, cols = self.F.shape
        if len(self.g) != rows or len(self.row_labels) != rows:
            raise ValueError("row dimension mismatch between F, g and row labels")
        if len(self.column_labels) != cols:
            raise ValueError("column dimension mismatch between F and column labels")

    @property
    def shape(self):
        return self.F.shape

    def normal_equations(self):
        """Return ``(F^T F, F^T g)`` as dense arrays."""
        F = self.F.toarray()
        return F.T @ F, F.T @ self.g

    def dump_triplets(self, path=None):
        """Sparse-triplet text: ``row col value`` lines, then ``g row value`` lines."""
        coo = self.F.tocoo()
        lines = [f"# {self.method} {self.F.shape[0]} {self.F.shape[1]}"]
        lines += [f"{i} {j} {v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data)]
        lines += [f"g {i} {v:.17g}" for i, v in enumerate(self.g)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _labels(kkt):
    n, m = kkt.n_leds, kkt.m
    dy = [("dy", i) for i in range(n)]
    ds = [("ds", j) for j in range(m)]
    v = [("v", j) for j in range(m)]
    return dy, ds, v


def build_generic(kkt, feasible):
    """Full KKT matrix as the LS coefficient matrix over ``z = [dx; v]``."""
    n, m = kkt.n_leds, kkt.m
    A = sp.csr_matrix(kkt.A)
    F = sp.bmat([[sp.diags(kkt.D), A.T], [A, None]], format="csr")
    F.eliminate_zeros()
    bottom = np.zeros(m) if feasible else kkt.b - kkt.A @ kkt.x
    g = np.concatenate([kkt.d - kkt.t * kkt.c, bottom])
    dy, ds, v = _labels(kkt)
    rows = (
        [("f_lu", i) for i in range(n)]
        + [("f_u", j) for j in range(m)]
        + [("f_ul", j) for j in range(m)]
    )
    method = FEASIBLE_GENERIC if feasible else INFEASIBLE_GENERIC
    return LsProblem(F, g, method, dy + ds + v, rows)


def _scaled_transpose(kkt):
    """D^{-1/2} A^T with the LED rows first, then the slack rows."""
    scale = 1.0 / np.sqrt(kkt.D)
    F = sp.diags(scale) @ sp.csr_matrix(kkt.A).T
    return sp.csr_matrix(F), scale


def _drop_empty_rows(F, g, labels):
    keep = np.flatnonzero(np.diff(F.indptr) > 0)
    if len(keep) == F.shape[0]:
        return F, g, labels
    return F[keep], g[keep], [labels[i] for i in keep]


def build_feasible_elimination(kkt):
    """LS over the duals ``v``: F = D^{-1/2} A^T, g = D^{-1/2}(d - t c).

    LED rows whose gain column is empty carry no unknowns and are dropped;
    they do not change the minimizer.
    """
    n, m = kkt.n_leds, kkt.m
    F, scale = _scaled_transpose(kkt)
    F.eliminate_zeros()
    g = scale * (kkt.d - kkt.t * kkt.c)
    rows = [("f_lu", i) for i in range(n)] + [("f_u", j) for j in range(m)]
    F, g, rows = _drop_empty_rows(F, g, rows)
    _, _, v = _labels(kkt)
    return LsProblem(F, g, FEASIBLE_ELIMINATION, v, rows)


def build_infeasible_elimination(kkt):
    """The pair of LS problems whose solutions give ``v = v1 - v2``."""
    n, m = kkt.n_leds, kkt.m
    F1, scale = _scaled_transpose(kkt)
    F1.eliminate_zeros()
    g1 = scale * (kkt.D * kkt.x + kkt.d - kkt.t * kkt.c)
    rows1 = [("f_lu", i) for i in range(n)] + [("f_u", j) for j in range(m)]
    F1, g1, rows1 = _drop_empty_rows(F1, g1, rows1)
    _, _, v = _labels(kkt)
    first = LsProblem(F1, g1, INFEASIBLE_ELIMINATION_1, v, rows1)

    A = sp.csr_matrix(kkt.A)
    F2 = sp.csr_matrix(A @ sp.diags(1.0 / kkt.D) @ A.T)
    rows2 = [("schur", j) for j in range(m)]
    second = LsProblem(F2, np.array(kkt.b, dtype=float), INFEASIBLE_ELIMINATION_2, list(v), rows2)
    return first, second


def recover_newton_step(kkt, v):
    """dx = D^{-1}(d - t c - A^T v)."""
    v = np.asarray(v, dtype=float)
    return (kkt.d - kkt.t * kkt.c - kkt.A.T @ v) / kkt.D


def build(kkt, method):
    """Dispatch on method name; the infeasible elimination pair is returned as a tuple."""
    if method == FEASIBLE_ELIMINATION:
        return build_feasible_elimination(kkt)
    if method == FEASIBLE_GENERIC:
        return build_generic(kkt, feasible=True)
    if method == INFEASIBLE_GENERIC:
        return build_generic(kkt, feasible=False)
    if method in ("infeasible_elimination", INFEASIBLE_ELIMINATION_1, INFEASIBLE_ELIMINATION_2):
        return build_infeasible_elimination(kkt)
    raise ValueError(f"unknown LS method {method!r}")
