import numpy as np
import pytest

from ocontrol.augmented import AugmentedModel, LqrWeights, build_augmented, map_lqr_weights
from ocontrol.plants import MsdPlant, default_msd_weights


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def msd_plant():
    return MsdPlant()


@pytest.fixture
def msd_full_model(msd_plant):
    """MSD augmented model with the full blocked objective measured every step."""
    weights = default_msd_weights()
    a, b = msd_plant.discrete()
    phi, h = build_augmented(a, b)
    lw = LqrWeights(q=weights["q"], r=weights["r"], m_cross=weights["m_cross"], r_tilde=weights["r_tilde"])
    q_grave, r_grave = map_lqr_weights(lw)
    return AugmentedModel(phi=phi, h=h, q_grave=q_grave, r_grave=r_grave, dt=msd_plant.dt, n=2, m=1)


@pytest.fixture
def msd_state_model(msd_plant):
    """MSD augmented model measuring only the plant states (no control penalty)."""
    weights = default_msd_weights()
    a, b = msd_plant.discrete()
    phi, _ = build_augmented(a, b)
    q_grave = np.zeros((3, 3))
    q_grave[2, 2] = 1.0 / weights["r_tilde"][0, 0]
    return AugmentedModel(
        phi=phi,
        h=np.eye(3)[:2],
        q_grave=q_grave,
        r_grave=np.linalg.inv(weights["q"]),
        dt=msd_plant.dt,
        n=2,
        m=1,
    )


def random_lti_model(rng, n=None, m=None, n_max_eta=8):
    """Random augmented model with full duality measurements; always stabilizable."""
    if n is None:
        n = int(rng.integers(1, n_max_eta - 1))
    if m is None:
        m = int(rng.integers(1, min(n_max_eta - n, 3) + 1))
    a = rng.normal(size=(n, n)) * 0.6
    b = rng.normal(size=(n, m))
    phi, h = build_augmented(a, b)
    eta = n + m
    w = rng.normal(size=(eta, eta))
    w = w @ w.T + 0.5 * np.eye(eta)
    r_grave = np.linalg.inv(w)
    q_grave = np.zeros((eta, eta))
    q_grave[n:, n:] = np.diag(1.0 / rng.uniform(0.5, 2.0, m))
    return AugmentedModel(phi=phi, h=h, q_grave=q_grave, r_grave=r_grave, dt=0.1, n=n, m=m)
