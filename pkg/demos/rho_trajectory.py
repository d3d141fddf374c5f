"""Spectral radius of the BP mean update along one barrier trajectory.

Prints rho every third Newton step for two LS forms.  Feasible elimination
stays below one; the generic form loses its variance fixed point (inf) or
exceeds one somewhere along the way.

Run: python demos/rho_trajectory.py [seed]
"""

import math
import sys

from ledbp.barrier import BarrierConfig, solve
from ledbp.errors import VarianceNonconvergence
from ledbp.harness import convergence_template
from ledbp.lsforms import FEASIBLE_ELIMINATION, FEASIBLE_GENERIC, build
from ledbp.oracle import DenseBackend
from ledbp.spectral import ls_spectral_radius

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
template = convergence_template()
template.seed = seed
_, problem = template.build()

kkts = []
solve(problem, BarrierConfig(), DenseBackend(), on_kkt=lambda kkt, state: kkts.append((state.t, kkt)))

print(f"{'t':>8} {'FE rho':>8} {'FG rho':>8}")
for t, kkt in kkts[::3]:
    row = []
    for method in (FEASIBLE_ELIMINATION, FEASIBLE_GENERIC):
        try:
            row.append(ls_spectral_radius(build(kkt, method), method="arnoldi"))
        except VarianceNonconvergence:
            row.append(math.inf)
    print(f"{t:8.0e} {row[0]:8.4f} {row[1]:8.4f}")
