"""Solve one office scene with the dense backend and with Gaussian BP.

Run: python demos/single_solve.py [seed]
"""

import sys

import numpy as np

from ledbp import BarrierConfig, DenseBackend, GbpBackend, GbpConfig, SceneConfig, solve

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
config = SceneConfig(seed=seed)
scene, problem = config.build()
print(f"{problem.n_leds} LEDs, {problem.m_uds} UDs, requirement {problem.b[0]:.0f} lux")

y_dense, rep_dense = solve(problem, BarrierConfig(), DenseBackend())
backend = GbpBackend("feasible_elimination", GbpConfig(seed=seed), fallback=True)
y_bp, rep_bp = solve(problem, BarrierConfig(), backend)

taus = np.array([r["inner_iterations"] for r in rep_bp.records])
print(f"dense objective {rep_dense.objective:.8f}, BP objective {rep_bp.objective:.8f}")
print(f"max |y_dense - y_bp| = {np.abs(y_dense - y_bp).max():.2e}")
print(f"{len(taus)} Newton steps, median BP iterations {np.median(taus):.0f}, max {taus.max()}")

# Dimming map, one row of the LED grid per line
for row in y_bp.reshape(config.grid_rows, config.grid_cols):
    print(" ".join(f"{v:4.2f}" for v in row))
