import sys
from pathlib import Path

import pytest

# Add src to Python path
src_path = Path(__file__).resolve().parents[1] / "src"
if str(src_path) not in sys.path:
    sys.path.insert(0, str(src_path))

from sna_lab.core.constants_gate import derive_constants  # noqa: E402
from sna_lab.core.torus_dynamics import SystemParams  # noqa: E402


@pytest.fixture(scope="session")
def desk_params():
    """kappa=3, golden rotation, pinched at the origin"""
    return SystemParams(kappa=3.0)


@pytest.fixture(scope="session")
def desk_consts(desk_params):
    return derive_constants(desk_params)


@pytest.fixture(autouse=True)
def _runs_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("SNA_RUNS_DIR", str(tmp_path / "runs"))
