import math

import pytest

from lagrangian.envelopes_implicit import build_envelopes
from lagrangian.phase_core import PhaseParams

G_ISO = 3.0 * math.pi / 4.0


@pytest.fixture
def iso_params():
    """A = I in three dimensions, beta = 4."""
    return PhaseParams.diagonal((1.0, 1.0, 1.0), 4.0)


@pytest.fixture
def flat_envelope(iso_params):
    return build_envelopes(iso_params, 0.0)


@pytest.fixture
def two_sided_envelope(iso_params):
    return build_envelopes(iso_params, 0.1, "two_sided")


@pytest.fixture
def out_dir(tmp_path):
    path = tmp_path / "run"
    path.mkdir()
    return str(path)
