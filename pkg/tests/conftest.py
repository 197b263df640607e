"""
Fixtures partagées par les tests.
"""
import logging

import pytest

from engine.catalog import load_catalog
from engine.lde import Sampler
from utils.config import Settings
from utils.metrics import metrics

# Réduire le bruit des logs pendant les tests
logging.getLogger("engine").setLevel(logging.WARNING)


@pytest.fixture(scope="session")
def catalog():
    """Catalogue livré avec le moteur."""
    return load_catalog()


@pytest.fixture
def settings():
    return Settings(seed=7, samples=100, tolerance=1e-8)


@pytest.fixture
def sampler():
    """Échantillonneur déterministe ; `tolerance` et `case_id` ajustables."""

    def make(tolerance: float = 1e-8, case_id: str = "test", count: int = 100, seed: int = 0) -> Sampler:
        return Sampler(seed=seed, count=count, tolerance=tolerance, case_id=case_id)

    return make


@pytest.fixture(autouse=True)
def reset_metrics():
    metrics.reset()
    yield
    metrics.reset()


@pytest.fixture
def clean_env(monkeypatch):
    """Retire les variables DIFFCONS_* et LOG_LEVEL de l'environnement."""
    for name in ("DIFFCONS_CATALOG", "DIFFCONS_SEED", "DIFFCONS_SAMPLES", "DIFFCONS_TOLERANCE", "LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    return monkeypatch
