import numpy as np
import pytest

from lagrangian.reports import MODES
from utils.config import get_solver_config, get_thread_count
from utils.file_handler import canonical_json, read_grid_dump, write_grid_dump
from utils.version import get_environment_versions, get_features, get_version


def test_thread_count_from_environment(monkeypatch):
    monkeypatch.delenv("LML_THREADS", raising=False)
    assert get_thread_count() == 1
    monkeypatch.setenv("LML_THREADS", "4")
    assert get_thread_count() == 4


@pytest.mark.parametrize("raw", ["0", "-2", "many"])
def test_thread_count_rejects_bad_values(monkeypatch, raw):
    monkeypatch.setenv("LML_THREADS", raw)
    with pytest.raises(ValueError):
        get_thread_count()


def test_solver_config_is_a_copy():
    newton = get_solver_config("newton")
    newton["tolerance"] = 1.0
    assert get_solver_config("newton")["tolerance"] == 1e-8
    with pytest.raises(ValueError):
        get_solver_config("multigrid")


def test_canonical_json_sorts_keys():
    assert canonical_json({"b": np.float64(1.5), "a": [np.int64(2)]}) == '{"a":[2],"b":1.5}'


def test_grid_dump_header(tmp_path):
    values = np.arange(24, dtype=float).reshape(2, 3, 4)
    values[0, 0, 0] = np.nan
    path = write_grid_dump(str(tmp_path / "g.bin"), values, 0.25, 1.0, (-0.25, -0.5, -0.75))
    back, header = read_grid_dump(path)
    assert header == {"dims": (2, 3, 4), "h": 0.25, "s_level": 1.0, "origin": (-0.25, -0.5, -0.75)}
    np.testing.assert_array_equal(back, values)


def test_grid_dump_rejects_foreign_files(tmp_path):
    path = tmp_path / "other.bin"
    path.write_bytes(b"XXXX" + bytes(64))
    with pytest.raises(ValueError):
        read_grid_dump(str(path))


def test_versions():
    assert get_version().startswith("v")
    assert {"numpy", "scipy", "pandas", "python"} <= set(get_environment_versions())


def test_features_list_run_modes():
    assert MODES == tuple(sorted(get_features()))
    assert "selfcheck" in MODES
