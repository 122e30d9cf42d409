import json

import pytest

from src.models.solution import SolverOptions
from src.services.hjb_solver import build_grid
from tests.problems import CONFIG_DIR, FAST_OPTS, solved_basic


@pytest.fixture
def fast_opts() -> SolverOptions:
    return FAST_OPTS


@pytest.fixture
def basic_grid():
    return build_grid(0.0, 6.0, 0.01)


@pytest.fixture
def basic_solution():
    """(SolutionField, StoppingRule) для θ = 0.01"""
    return solved_basic(0.01)


@pytest.fixture
def basic_config_document() -> dict:
    return json.loads((CONFIG_DIR / "basic_two_state.json").read_text(encoding="utf-8"))


@pytest.fixture
def four_state_config_document() -> dict:
    return json.loads((CONFIG_DIR / "four_state_two_time_scale.json").read_text(encoding="utf-8"))


@pytest.fixture
def write_config(tmp_path):
    """Записать JSON-конфигурацию во временный файл и вернуть путь"""

    def _write(document: dict, name: str = "config.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def trivial_config_document() -> dict:
    """Постоянное препятствие на сетке из трёх узлов"""
    return {
        "problem": {
            "m": 2,
            "chain": {"rates": [[-1.0, 1.0], [1.0, -1.0]]},
            "coeffs": {"kind": "constant", "b": [0.1, 0.2], "sigma": [0.3, 0.3]},
            "rewards": {"terminal": {"kind": "constant", "value": 1.5}},
            "r": 1.0,
            "theta": 0.5,
        },
        "grid": {"x_min": 0.0, "x_max": 1.0, "h": 0.5},
    }
