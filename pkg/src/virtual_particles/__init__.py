"""Virtual particle stochastic approximation for mean-field Langevin dynamics."""

from .diagnostics import (
    batched_variance_ratio,
    compare_summaries,
    cross_particle_correlations,
    independence_diagnostic,
    unbiasedness_test,
)
from .dynamics import PMKVResult, VPSAResult, eval_count, pmkv_run, replay_from_witness, vpsa_run, vpsa_step
from .estimators import MeanFieldNetworkRegressor, ParticleSystemSampler, VirtualParticleSampler
from .exceptions import (
    ConfigError,
    DatasetError,
    DivergenceError,
    EmptyCloudError,
    InfeasibleScheduleError,
    SingularCovarianceError,
    VirtualParticleError,
    WitnessMismatchError,
)
from .functionals import (
    MfnnSpec,
    PairwiseSpec,
    QuadraticPotential,
    SmoothPotential,
    batched_estimate,
    check_assumptions,
    load_mfnn_dataset,
    mfnn_energy,
    mfnn_estimate,
    mfnn_exact_gradient,
    mfnn_lipschitz_constant,
    pairwise_energy,
    pairwise_estimate,
    pairwise_exact_gradient,
)
from .oracles import (
    GaussianSummary,
    SchedulePlan,
    affine_recursion_oracle,
    kl_gaussian,
    plan_schedule_mfnn,
    plan_schedule_pairwise,
    quadratic_lsi_constant,
    quadratic_stationary,
    w2_gaussian,
)
from .reports import AssumptionCheck, AssumptionReport, Report
from .rng import NoiseStream, StreamKind, philox4x32
from .types import DiagnosticsTrace, ParticleCloud, RunConfig, StepRecord, WitnessPath, config_hash

__version__ = "0.1.0"
