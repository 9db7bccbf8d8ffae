"""Conditional-dynamics laboratory for optomechanical gravity-model tests."""

__version__ = "0.1.0"

from .params import (SystemParams, DerivedParams, ScalingConstants,
                     derive, nondimensionalize, load_config, parse_config_text,
                     table_defaults, ConfigError)
from .moments import (MomentState, MomentTrajectory, EllipseParams,
                      riccati_rhs, integrate_moments, steady_state_classical,
                      steady_state_quantum, linearized_roots,
                      effective_decay_rate, ellipse_map, ellipse_inverse,
                      ellipse_rhs, integrate_ellipse, analytic_case2,
                      sqz_db, initial_squeezed_thermal, stationary_psd,
                      log_ratio, quantum_log_ratio_max, peak_exists)

__all__ = [
    "SystemParams", "DerivedParams", "ScalingConstants", "derive",
    "nondimensionalize", "load_config", "parse_config_text", "table_defaults",
    "ConfigError", "MomentState", "MomentTrajectory", "EllipseParams",
    "riccati_rhs", "integrate_moments", "steady_state_classical",
    "steady_state_quantum", "linearized_roots", "effective_decay_rate",
    "ellipse_map", "ellipse_inverse", "ellipse_rhs", "integrate_ellipse",
    "analytic_case2", "sqz_db", "initial_squeezed_thermal", "stationary_psd",
    "log_ratio", "quantum_log_ratio_max", "peak_exists",
]
