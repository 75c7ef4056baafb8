"""Policy iteration for discrete-time LQR: exact, disturbed, and data-driven,
plus a seeded benchmark harness."""

from .matops import (
    DimensionError,
    DuplicationMatrix,
    NotStabilizingError,
    NumericError,
    duplication,
    is_psd,
    lyap_solve,
    lyap_sum_oracle,
    smat,
    spectral_radius,
    svec,
    symmetrize,
    vtilde,
)
from .lqr import (
    AreSolution,
    CostParams,
    LinearSystem,
    PartitionedQuadratic,
    PiTrace,
    SingularBlockError,
    avg_cost,
    are_residual,
    exact_pi,
    g_of_p,
    h_operator,
    policy_eval,
    policy_improve,
    q_of_p,
    solve_are,
)
from .robustpi import (
    DegenerateProbeError,
    DisturbanceSpec,
    IssPoint,
    RobustPiTrace,
    contraction_probe,
    inexact_pi,
    iss_gain_curve,
)
from .olspi import (
    AugmentedQuadratic,
    OlspiConfig,
    OlspiResult,
    RegressionTriple,
    Rollout,
    UNSTABLE,
    build_regression,
    estimate_F,
    load_regression,
    load_rollout,
    olspi_run,
    relative_error,
    save_regression,
    save_rollout,
    simulate,
)
from .bench import (
    ConfigError,
    ExperimentConfig,
    TrialStats,
    load_config,
    preset,
    run_experiment,
    run_robustness,
    trial_seed,
)

__version__ = "0.1.0"
