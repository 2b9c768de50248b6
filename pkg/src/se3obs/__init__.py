"""Hybrid pose and velocity-bias observers on SE(3), with a simulator.

The package splits into group/algebra primitives (:mod:`se3obs.se3`),
scene geometry and measurements (:mod:`se3obs.scene`), the alignment
potential and jump-set machinery (:mod:`se3obs.potential`), the observer
variants (:mod:`se3obs.observers`), the hybrid closed-loop simulator and
its monitors (:mod:`se3obs.sim`), and scenario-file plumbing
(:mod:`se3obs.config`, :mod:`se3obs.cli`).  The names re-exported here are
the stable entry points; everything else is reachable through the
submodules.
"""

from .config import ScenarioConfig, bundled_config_path, load_config
from .errors import (
    AssumptionViolated,
    DivergenceDetected,
    GapInfeasible,
    NumericalFailure,
    ParseError,
    PreconditionFailed,
    SE3ObsError,
    ValidationError,
)
from .observers import (
    VARIANT_TAGS,
    ObserverGains,
    ObserverState,
    ObserverVariant,
    ProjectionParams,
    correction_terms,
    flow,
    jump_condition,
    jump_map,
    proj_delta,
)
from .potential import (
    AlphaBounds,
    JumpSetDef,
    PotentialDef,
    alpha_bounds,
    build_jump_set,
    build_potential,
    critical_set,
    delta_star,
    true_gap,
)
from .scene import BiasModel, Scene, measure_outputs, measure_velocity
from .sim import (
    HybridTime,
    JumpEvent,
    RunDiagnostics,
    RunLog,
    Scenario,
    TrajectorySpec,
    monitors,
    run,
    step_observer,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaBounds",
    "AssumptionViolated",
    "BiasModel",
    "DivergenceDetected",
    "GapInfeasible",
    "HybridTime",
    "JumpEvent",
    "JumpSetDef",
    "NumericalFailure",
    "ObserverGains",
    "ObserverState",
    "ObserverVariant",
    "ParseError",
    "PotentialDef",
    "PreconditionFailed",
    "ProjectionParams",
    "RunDiagnostics",
    "RunLog",
    "SE3ObsError",
    "Scenario",
    "ScenarioConfig",
    "Scene",
    "TrajectorySpec",
    "VARIANT_TAGS",
    "ValidationError",
    "alpha_bounds",
    "build_jump_set",
    "build_potential",
    "bundled_config_path",
    "correction_terms",
    "critical_set",
    "delta_star",
    "flow",
    "jump_condition",
    "jump_map",
    "load_config",
    "measure_outputs",
    "measure_velocity",
    "monitors",
    "proj_delta",
    "run",
    "step_observer",
    "true_gap",
    "__version__",
]
