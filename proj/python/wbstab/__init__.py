"""Force-feedback whole-body stabilizer for position-controlled humanoids."""

from ._core import (
    Configuration,
    Error,
    InfeasibleError,
    ParseError,
    RobotModel,
    ScenarioConfig,
    ValidationError,
    bias_forces,
    builtin_biped,
    com_position,
    default_stance,
    forward_dynamics,
    frame_jacobian,
    load_config,
    load_model,
    mass_matrix,
    parse_config,
    resolve_model,
    run,
    solve_qp,
    sweep,
    validate_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
