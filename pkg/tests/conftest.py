import numpy as np
import pytest

from src.core.sample import ObservedSample
from src.simulation.dgp import DgpConfig, FiniteDistribution, finite_support_distribution

MC_POINTS = 200_000


def expand_atoms(dist: FiniteDistribution, scale: int = 1000) -> ObservedSample:
    """Repeat every atom round(prob * scale) times: an exact empirical copy of the law."""
    counts = np.rint(dist.prob * scale).astype(int)
    assert np.all(np.isclose(counts, dist.prob * scale))
    return ObservedSample(
        y=np.repeat(dist.y, counts),
        x=np.repeat(dist.x, counts, axis=0),
        p=np.repeat(dist.p, counts),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def canonical():
    return finite_support_distribution()


@pytest.fixture
def canonical_sample(canonical):
    return expand_atoms(canonical)


@pytest.fixture
def baseline_cfg():
    return DgpConfig(n=2000, tau0=1.0, sigma_u=0.30)


@pytest.fixture
def small_env(monkeypatch):
    monkeypatch.setenv("LATENTGAP_MC_POINTS", str(MC_POINTS))
    monkeypatch.setenv("LATENTGAP_SEED", "20240601")
    monkeypatch.setenv("LATENTGAP_LOG_LEVEL", "WARNING")
