"""Version information for the lml toolkit"""

import platform

__version__ = "1.0.0"
__release_date__ = "2026-10-19"

# Run modes shipped in this release
FEATURES = {
    "barriers": True,
    "dirichlet": True,
    "limit_study": True,
    "nonexistence": True,
    "selfcheck": True,
}


def get_version():
    """Get version string"""
    return f"v{__version__}"


def get_features():
    """Get enabled features"""
    return {k: v for k, v in FEATURES.items() if v}


def get_environment_versions():
    """Versions of the numerical stack, stored in every run record"""
    import numpy
    import pandas
    import scipy

    return {
        "lml": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "pandas": pandas.__version__,
    }
