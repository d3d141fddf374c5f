"""LED dimming by a barrier method whose Newton systems are solved with Gaussian BP."""

from .barrier import BarrierConfig, solve
from .errors import LedbpError
from .gbp import GbpBackend, GbpConfig, build_factor_graph, run_gbp
from .harness import (
    StudyConfig,
    broadcast_time,
    convergence_probability,
    empirical_cdf,
    run_convergence_study,
    run_overhead_study,
)
from .lsforms import build as build_ls
from .oracle import DenseBackend, lp_vertex_enumeration, reference_barrier_solve
from .scene import SceneConfig
from .spectral import ls_spectral_radius, spectral_radius

__version__ = "0.1.0"
