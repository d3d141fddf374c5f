import numpy as np
import pytest

from ledbp.barrier import NewtonState, assemble_kkt, augment
from ledbp.scene import assemble_problem

# Acceptance tests append (label, passed, detail) here; printed after the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{label}: {'PASS' if passed else 'FAIL'}  {detail}")


def sparse_gains(rng, n, m, per_ud=(2, 5)):
    """Random non-negative H where each UD sees a few LEDs."""
    H = np.zeros((m, n))
    for j in range(m):
        k = rng.integers(per_ud[0], per_ud[1] + 1)
        cols = rng.choice(n, size=min(k, n), replace=False)
        H[j, cols] = rng.uniform(50, 400, size=len(cols))
    return H


def interior_instance(rng, n=16, m=4, t=None, H=None):
    """A problem together with a strictly feasible interior point ``x``.

    ``b`` is chosen as ``H y - s`` for random ``y`` in (0, 1) and ``s > 0``, so
    ``A x = b`` holds exactly up to rounding.
    """
    if H is None:
        H = sparse_gains(rng, n, m)
    m, n = H.shape
    y = rng.uniform(0.05, 0.95, size=n)
    w = H @ y
    s = rng.uniform(0.05, 0.5) * w
    b = w - s
    problem = assemble_problem(H, b, 1.0)
    aug = augment(problem)
    x = np.concatenate([y, aug.H @ y - aug.b])
    if t is None:
        t = float(10 ** rng.uniform(0, 4))
    return problem, aug, x, t


def kkt_at(aug, x, t, feasible=True):
    return assemble_kkt(aug, NewtonState(x=x, t=t), feasible=feasible)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
