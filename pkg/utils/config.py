# utils/config.py
"""
Configuration settings for the Lagrangian phase barrier toolkit
"""

import os
from pathlib import Path
from typing import Dict

from dotenv import load_dotenv

load_dotenv()

# Project paths
PROJECT_ROOT = Path(__file__).resolve().parent.parent
SCHEMA_PATH = PROJECT_ROOT / "docs" / "config_schema.json"
DEFAULT_OUTPUT_DIR = "output"

SCHEMA_VERSION = "1.0"

# ============================================================================
# NUMERICAL TOLERANCES
# ============================================================================
TOLERANCES = {
    "params_consistency": 1e-10,  # |f(a) - g_inf| for user supplied g_inf
    "m_of_a_agreement": 1e-10,  # min-form vs closed form of M(A)
    "gradient_inverse": 1e-8,  # ||(I+M^2)G - I||
    "implicit_residual": 1e-12,  # defining equation residual after polish
    "verify_margin": 1e-8,  # sub/super inequality slack
    "profile_terminal": 1e-6,  # |W(s_K) - 1| before a barrier is built
}

# Bracketed bisection followed by Newton polish
ROOT_CONFIG = {
    "bisection_width": 1e-6,
    "max_newton": 60,
    "max_expansions": 200,
}

# Cyclic Jacobi eigen solver
JACOBI_CONFIG = {
    "relative_threshold": 1e-13,  # times the infinity norm
    "max_sweeps": 50,
}

# Adaptive RK integration of the profile ODEs, in t = ln(1+s)
INTEGRATOR_CONFIG = {
    "method": "RK45",
    "rtol": 1e-10,
    "atol": 1e-10,
    "radial_atol": 1e-30,  # radial deviation state is controlled relatively
}

PROFILE_GRID = {
    "points": 4000,
    "s_max": 1e10,
    "fit_window": (1e3, 1e9),
    "log_model_band": 0.05,  # |M(A) - beta/2| below which ln-corrected fit is tried
    "sub_start_factor": 1.05,  # default w0 = factor * w_under(0)
    "super_start_factor": 0.95,  # default w0 = factor * w_over(0)
}

# ============================================================================
# DIRICHLET GRID SOLVER
# ============================================================================
GRID_CONFIG = {
    "dimension": 3,
    "min_nodes_per_axis": 5,
    "sandwich_h2_factor": 10.0,  # tol = factor*h^2 + floor
    "sandwich_floor": 1e-6,
}

NEWTON_CONFIG = {
    "tolerance": 1e-8,
    "max_iterations": 50,
    "max_halvings": 30,
    "krylov_rtol": 1e-10,
    "krylov_maxiter": 2000,
    "backend": "krylov",  # or "direct"
}

SAMPLING_CONFIG = {
    "n_samples": 1000,
    "max_radius": 1e3,
    "seed": 12345,
}

# ============================================================================
# RADIAL STUDY
# ============================================================================
RADIAL_CONFIG = {
    "r_max": 1e8,
    "points": 3000,
    "fit_window": (1e2, 1e7),
    "start_radius": 1e-6,  # regular start for fields not constant near 0
    "probe_epsilons": (1e-3, 1e-2),
    "probe_r_min": 1e-8,
    "blowup_level": 1e6,
    "far_field_r_max": 1e4,
    "far_field_window": (30.0, 1e3),
}

OUTPUT_CONFIG = {
    "float_format": "%.17g",
    "line_terminator": "\n",
    "run_record": "run_record.json",
    "summary": "summary.json",
}


def get_thread_count(default: int = 1) -> int:
    """Get worker thread count from LML_THREADS or default"""
    raw = os.getenv("LML_THREADS")
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError as e:
        raise ValueError(f"LML_THREADS must be a positive integer, got {raw!r}") from e
    if value < 1:
        raise ValueError(f"LML_THREADS must be a positive integer, got {raw!r}")
    return value


def get_output_dir() -> str:
    """Get output directory from environment or default"""
    return os.getenv("LML_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)


def get_log_level() -> str:
    """Get log level name from environment or default"""
    return os.getenv("LML_LOG_LEVEL", "INFO").upper()


def get_solver_config(name: str) -> Dict:
    """Get a copy of a named solver configuration block"""
    blocks = {
        "root": ROOT_CONFIG,
        "jacobi": JACOBI_CONFIG,
        "integrator": INTEGRATOR_CONFIG,
        "profile": PROFILE_GRID,
        "grid": GRID_CONFIG,
        "newton": NEWTON_CONFIG,
        "sampling": SAMPLING_CONFIG,
        "radial": RADIAL_CONFIG,
    }
    if name not in blocks:
        raise ValueError(
            f"Unsupported solver config: {name}. Expected one of {sorted(blocks)}."
        )
    return dict(blocks[name])
