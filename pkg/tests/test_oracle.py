import numpy as np
import pytest
import scipy.sparse as sp

from ledbp.barrier import BarrierConfig, NewtonState, assemble_kkt, augment
from ledbp.errors import Infeasible, RankDeficient, SingularSystem, TooLarge
from ledbp.lsforms import FEASIBLE_ELIMINATION, LsProblem
from ledbp.oracle import (
    ls_gradient_norm,
    lp_vertex_enumeration,
    reference_barrier_solve,
    solve_kkt_dense,
    solve_ls_dense,
)
from ledbp.scene import assemble_problem

from conftest import interior_instance, kkt_at, sparse_gains


def _ls(F, g):
    F = sp.csr_matrix(np.asarray(F, dtype=float))
    return LsProblem(F, np.asarray(g, dtype=float), FEASIBLE_ELIMINATION,
                     [("v", j) for j in range(F.shape[1])],
                     [("f_u", i) for i in range(F.shape[0])])


def test_kkt_dense_residual_and_feasible_direction(rng):
    for _ in range(5):
        _, aug, x, t = interior_instance(rng, 8, 4)
        kkt = kkt_at(aug, x, t)
        dx, v, res = solve_kkt_dense(kkt)
        assert res.residual_norm <= 1e-9 * np.linalg.norm(kkt.rhs())
        assert np.abs(aug.A @ dx).max() <= 1e-9 * max(1, np.abs(dx).max())
        assert np.isfinite(res.condition_estimate)


def test_kkt_dense_one_led():
    aug = augment(assemble_problem([[2.0]], [1.0], [1.0]))
    kkt = assemble_kkt(aug, NewtonState(x=np.array([0.75, 0.5]), t=1.0))
    dx, v, res = solve_kkt_dense(kkt)
    K, rhs = kkt.matrix(), kkt.rhs()
    np.testing.assert_allclose(K @ np.concatenate([dx, v]), rhs, atol=1e-12)
    assert res.residual_norm < 1e-12


def test_kkt_singular_detected():
    aug = augment(assemble_problem([[2.0], [2.0]], [1.0, 1.0], [1.0]))
    kkt = assemble_kkt(aug, NewtonState(x=np.array([0.75, 0.5, 0.5]), t=1.0))
    kkt.A = sp.csr_matrix(np.array([[2.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))
    with pytest.raises(SingularSystem):
        solve_kkt_dense(kkt)


def test_ls_dense_examples():
    np.testing.assert_allclose(solve_ls_dense(_ls([[1.0], [1.0]], [1.0, 3.0])), [2.0])
    F = np.array([[2.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(solve_ls_dense(_ls(F, [1.0, 2.0])), np.linalg.solve(F, [1, 2]))
    with pytest.raises(RankDeficient):
        solve_ls_dense(_ls([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]], [1, 2, 3]))
    with pytest.raises(RankDeficient):
        solve_ls_dense(_ls([[1.0, 2.0]], [1.0]))


def test_ls_dense_gradient_small(rng):
    F = rng.standard_normal((12, 4))
    g = rng.standard_normal(12)
    ls = _ls(F, g)
    z = solve_ls_dense(ls)
    assert ls_gradient_norm(ls, z) <= 1e-9 * np.linalg.norm(F.T @ g)


def test_vertex_enumeration_examples():
    p = assemble_problem([[200.0]], [100.0], [1.0])
    np.testing.assert_allclose(lp_vertex_enumeration(p), [0.5])
    z = assemble_problem([[1.0, 2.0]], [0.0], [1.0, 1.0], standby=1.0)
    y = lp_vertex_enumeration(z)
    np.testing.assert_allclose(y, [0, 0])
    assert z.q @ y + z.e == pytest.approx(z.e)
    with pytest.raises(TooLarge):
        lp_vertex_enumeration(assemble_problem(np.ones((4, 9)), [1.0] * 4, 1.0))


def test_vertex_enumeration_infeasible():
    p = assemble_problem([[2.0]], [1.0], [1.0])
    p.b[:] = 5.0
    with pytest.raises(Infeasible):
        lp_vertex_enumeration(p)


def test_reference_solve_agrees_with_enumeration(rng):
    for _ in range(25):
        n, m = int(rng.integers(2, 7)), int(rng.integers(1, 5))
        H = sparse_gains(rng, n, m, per_ud=(1, n))
        p = assemble_problem(H, rng.uniform(0.1, 0.9) * H.sum(1), 1.0)
        y, report = reference_barrier_solve(p)
        opt = p.q @ lp_vertex_enumeration(p) + p.e
        assert report.objective == pytest.approx(opt, rel=1e-4)
        assert np.all((y >= 0) & (y <= 1))


def test_feasible_and_infeasible_reference_agree(rng):
    H = sparse_gains(rng, 6, 3)
    p = assemble_problem(H, 0.5 * H.sum(1), 1.0)
    y1, _ = reference_barrier_solve(p)
    y2, _ = reference_barrier_solve(p, BarrierConfig(start_mode="infeasible"))
    np.testing.assert_allclose(y1, y2, atol=1e-6)
