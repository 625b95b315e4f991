import numpy as np
import pytest

from drpfolio.core import AversionProfile, DrpInstance
from drpfolio.data import ScenarioSet


def build_instance(n_assets=6, n_periods=10, k=2, seed=0, *,
                   loss_aversion=1.5, risk_aversion=1.5,
                   ambiguity_radius=0.003, reference_point=0.001):
    """Random instance with asset-level means drawn apart so selections differ."""
    rng = np.random.default_rng(seed)
    mu = rng.uniform(-0.004, 0.012, size=n_assets)
    vol = rng.uniform(0.01, 0.05, size=n_assets)
    returns = mu + rng.standard_normal((n_periods, n_assets)) * vol
    profile = AversionProfile(
        loss_aversion=loss_aversion,
        risk_aversion=risk_aversion,
        ambiguity_radius=ambiguity_radius,
        reference_point=reference_point,
    )
    return DrpInstance.from_scenarios(ScenarioSet.from_returns(returns),
                                      profile, k)


@pytest.fixture
def make_instance():
    return build_instance


@pytest.fixture
def small_instance():
    return build_instance(n_assets=5, n_periods=8, k=2, seed=3)
