"""Transient nearest-neighbour random walks in i.i.d. random environment on Z.

The package splits into a small stack of layers:

* :mod:`rwre.env` - environment laws, potentials, excursion and window
  samplers (plain and conditioned-nonnegative regimes);
* :mod:`rwre.quenched` - exact quenched formulas for exit probabilities and
  hitting-time moments, plus the independent tridiagonal oracle;
* :mod:`rwre.valleys` - ladder epochs, excursion heights, deep-valley
  selection and the modified-environment substitution;
* :mod:`rwre.walk` - the instrumented walk simulator (compiled stepping
  kernel with a pure-Python fallback, bit-identical by construction);
* :mod:`rwre.limits` - heavy-tail constants, Kesten series, point-process
  limit laws and the trimmed Wasserstein metric;
* :mod:`rwre.experiments` - the named statistical experiments;
* :mod:`rwre.cli` - the ``rwre`` command-line front end.
"""

from .env import (
    BetaEnv,
    Environment,
    Excursion,
    ExcursionBatch,
    TabulatedEnv,
    TwoPointEnv,
    assemble_env,
    calibrate_kappa,
    is_discrete,
    moment_rho,
    moment_rho_log,
    sample_env,
    sample_env_conditioned,
    sample_env_window,
    sample_excursion,
    sample_excursion_batch,
    sample_excursion_conditioned,
    sample_omegas,
)
from .errors import (
    BudgetExhaustedError,
    CensoringError,
    DivergentMomentError,
    EnvSpecError,
    EstimationError,
    InsufficientWindowError,
    RunawayExcursionError,
    RwreError,
    WindowExitError,
)
from .experiments import EXPERIMENTS, Check, ExperimentConfig, ExperimentResult
from .limits import (
    ConstantsReport,
    LimitModel,
    TailFit,
    estimate_constants,
    exponential_reference,
    limit_law_sample,
    poisson_pp_sample,
    sample_kesten,
    sample_mean_crossing,
    tail_fit,
    wasserstein1,
)
from .quenched import (
    escape_prob,
    excursion_variances,
    excursion_weights,
    exit_prob,
    expected_hitting,
    oracle_solve,
    success_prob,
    variance_hitting,
)
from .seeding import stream
from .valleys import (
    DeepValleys,
    ValleyDecomposition,
    critical_height,
    deep_valleys,
    find_d_minus,
    ladder_epochs,
    no_overlap,
    spacing_blocks,
    substitute_high_excursions,
)
from .walk import WalkPlan, WalkRecord, active_backend, run_batch, simulate

__version__ = "0.1.0"

__all__ = [
    "BetaEnv",
    "BudgetExhaustedError",
    "CensoringError",
    "Check",
    "ConstantsReport",
    "DeepValleys",
    "DivergentMomentError",
    "EXPERIMENTS",
    "EnvSpecError",
    "Environment",
    "EstimationError",
    "Excursion",
    "ExcursionBatch",
    "ExperimentConfig",
    "ExperimentResult",
    "InsufficientWindowError",
    "LimitModel",
    "RunawayExcursionError",
    "RwreError",
    "TabulatedEnv",
    "TailFit",
    "TwoPointEnv",
    "ValleyDecomposition",
    "WalkPlan",
    "WalkRecord",
    "WindowExitError",
    "active_backend",
    "assemble_env",
    "calibrate_kappa",
    "critical_height",
    "deep_valleys",
    "escape_prob",
    "estimate_constants",
    "excursion_variances",
    "excursion_weights",
    "exit_prob",
    "expected_hitting",
    "exponential_reference",
    "find_d_minus",
    "is_discrete",
    "ladder_epochs",
    "limit_law_sample",
    "moment_rho",
    "moment_rho_log",
    "no_overlap",
    "oracle_solve",
    "poisson_pp_sample",
    "run_batch",
    "sample_env",
    "sample_env_conditioned",
    "sample_env_window",
    "sample_excursion",
    "sample_excursion_batch",
    "sample_excursion_conditioned",
    "sample_kesten",
    "sample_mean_crossing",
    "sample_omegas",
    "simulate",
    "spacing_blocks",
    "stream",
    "substitute_high_excursions",
    "success_prob",
    "tail_fit",
    "variance_hitting",
    "wasserstein1",
    "__version__",
]
