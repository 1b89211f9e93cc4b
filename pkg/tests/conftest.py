import numpy as np
import pytest

from platoon_shield.model import NoiseBounds, VehicleParams, build_plant
from platoon_shield import synthesis


@pytest.fixture(scope="session")
def plant():
    return build_plant(VehicleParams())


@pytest.fixture(scope="session")
def bounds():
    return NoiseBounds()


QUICK_A = (0.3, 0.5, 0.7)
QUICK_C = (0.3, 0.5, 0.7, 0.9)
QUICK_A3 = (0.3, 0.5, 0.7)
QUICK_TAU1 = (0.1, 0.2)
QUICK_REACH = (0.95, 0.975, 0.99, 0.995, 0.999)


@pytest.fixture(scope="session")
def quick_estimator(plant, bounds):
    """Reduced-grid estimator/monitor design shared across test modules."""
    return synthesis.synthesize_estimator_monitor(
        plant, bounds, a_grid=QUICK_A, c_grid=QUICK_C, a3_grid=QUICK_A3,
        tau1_grid=QUICK_TAU1, refinement_rounds=0, threads=2)


@pytest.fixture(scope="session")
def quick_controller(plant, bounds, quick_estimator):
    est = quick_estimator
    return synthesis.synthesize_controller(
        plant, bounds, Pi=est.Pi, P_e=est.P_e, alpha_e=est.alpha_inf_e,
        a_grid=QUICK_REACH, refinement_rounds=0, threads=2)
