"""Passive 6DMA-assisted multiuser uplink: simulation and optimization."""

from .channel import (
    Problem,
    RateEvaluator,
    Scenario,
    achievable_sum_rate,
    effective_channel,
    sinr,
    sum_rate,
)
from .geometry import (
    FeasibilityReport,
    LocalLayout,
    SiteRegion,
    SurfacePose,
    feasibility_check,
)
from .experiment import (
    ExperimentConfig,
    ValidationError,
    load_config,
    run_experiment,
    summarize,
)
from .optimizer import OptimizerConfig, RunResult, ao_optimize, mmse_beamformer
from .radiation import RadiationPattern
from .scenario import (
    SCHEMES,
    ScenarioParams,
    dbm_to_watts,
    assigned_poses,
    fixed_pose,
    generate_scenario,
    init_poses,
    initial_poses_for_scheme,
    params_for_scheme,
    tiled_poses,
)

__version__ = "0.1.0"

__all__ = [
    "Problem",
    "RateEvaluator",
    "Scenario",
    "achievable_sum_rate",
    "effective_channel",
    "sinr",
    "sum_rate",
    "FeasibilityReport",
    "LocalLayout",
    "SiteRegion",
    "SurfacePose",
    "feasibility_check",
    "ExperimentConfig",
    "ValidationError",
    "load_config",
    "run_experiment",
    "summarize",
    "OptimizerConfig",
    "RunResult",
    "ao_optimize",
    "mmse_beamformer",
    "RadiationPattern",
    "SCHEMES",
    "ScenarioParams",
    "dbm_to_watts",
    "assigned_poses",
    "fixed_pose",
    "generate_scenario",
    "init_poses",
    "initial_poses_for_scheme",
    "params_for_scheme",
    "tiled_poses",
    "__version__",
]
