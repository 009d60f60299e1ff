"""Landing-based constrained Langevin diffusion (Python bindings)."""

from ._core import (
    ConfigError,
    Geometry,
    LdiffError,
    Mode,
    NewtonOptions,
    NoiseSchedule,
    NonFiniteState,
    ProjectionFailure,
    SamplerConfig,
    ScoreNet,
    Task,
    decay_check,
    decay_prediction,
    jsd,
    make_disk,
    make_son,
    make_sphere,
    make_sphere_cap,
    power_traces,
    resolve_config,
    run_pipeline,
    sample,
    simulate_forward,
    spherical_jsd,
    violation_stats,
)

__all__ = [
    "ConfigError",
    "Geometry",
    "LdiffError",
    "Mode",
    "NewtonOptions",
    "NoiseSchedule",
    "NonFiniteState",
    "ProjectionFailure",
    "SamplerConfig",
    "ScoreNet",
    "Task",
    "decay_check",
    "decay_prediction",
    "jsd",
    "make_disk",
    "make_son",
    "make_sphere",
    "make_sphere_cap",
    "power_traces",
    "resolve_config",
    "run_pipeline",
    "sample",
    "simulate_forward",
    "spherical_jsd",
    "violation_stats",
]
