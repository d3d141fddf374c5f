"""Miniature versions of both Monte Carlo studies, written to ./demo_out.

Run: python demos/small_studies.py
"""

import json

from ledbp.harness import StudyConfig, run_convergence_study, run_overhead_study, write_outputs

conv = StudyConfig(count=10, seed=1)
result = run_convergence_study(conv)
write_outputs(result, "demo_out/convergence")
print(json.dumps(json.load(open("demo_out/convergence/summary.json"))["convergence_probability"], indent=2))

over = StudyConfig.overhead(sizes=[(225, 20), (225, 40)], count=4, seed=1)
result = run_overhead_study(over)
write_outputs(result, "demo_out/overhead")
for entry in json.load(open("demo_out/overhead/summary.json"))["per_size"]:
    print(f"n={entry['n']} m={entry['m']}: median tau {entry['median_tau']}, "
          f"broadcast {1000 * entry['broadcast_time_s']:.1f} ms")
