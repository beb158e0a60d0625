import pytest

from mfising.core.config import settings
from mfising.schemas.meanfield import ModelParams
from mfising.services import coupling as builders


@pytest.fixture
def high_temperature() -> ModelParams:
    return ModelParams(beta=0.5, b_field=0.0)


@pytest.fixture
def with_field() -> ModelParams:
    return ModelParams(beta=0.8, b_field=0.3)


@pytest.fixture
def small_complete():
    """K_6 divided by its degree."""
    return builders.build_complete(6)


@pytest.fixture
def small_couplings():
    """One small instance of each ensemble family, all enumerable."""
    return [
        builders.build_complete(8),
        builders.build_regular(10, 3, seed=7),
        builders.build_regular(10, 4, kind="circulant"),
        builders.build_erdos_renyi(9, 0.5, seed=3),
        builders.build_block_spin(8, 1.0, 0.5),
        builders.build_wigner(7, seed=11),
    ]


@pytest.fixture
def output_dir(tmp_path):
    return tmp_path / "out"


@pytest.fixture
def threads(monkeypatch):
    """Set settings.THREADS for one test."""
    def set_threads(count: int) -> None:
        monkeypatch.setattr(settings, "THREADS", count)
    return set_threads
