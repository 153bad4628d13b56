"""Communication-sparsified distributed stochastic optimization simulator."""

from .engine import (ConfigError, DivergenceError, NetworkState, RunConfig,
                     StepSchedule, run, run_ensemble, step_baseline,
                     step_first, step_zeroth)
from .metrics import (RateFit, Trace, TraceRow, compare_baseline, compute_row,
                      fit_rate, summarize_ensemble)
from .network import (ActivationRound, ProtocolSchedule, Topology,
                      build_topology, complete_graph, expected_comm_cost,
                      expected_laplacian, mixing_step, path_graph,
                      realized_laplacian, ring_graph, sample_activation,
                      star_graph, validate_protocol)
from .problems import (NOISELESS, NoiseModel, OracleCounters, make_cubic_probe,
                       make_erm_problem, make_quadratic_problem, query_sfo,
                       query_szo, quadratic_from_terms)
from .zo import (BiasPoint, DirectionSampler, SmoothingSchedule,
                 default_smoothing, estimate_gradient_zo, measure_bias)

__all__ = [name for name in dir() if not name.startswith("_")]
