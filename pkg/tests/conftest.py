import warnings

import numpy as np
import pytest

from weakmorse import MassSystem, continuation, two_body_loop_seed
from weakmorse.collision import detect_collisions

L_SEP = 100.0
T_END = 1000.0


def flagship_config():
    return dict(M=256, t1=0.0, t2=T_END, grid="graded", kappa=0.05, seed=1,
                seed_strategy=two_body_loop_seed(L_SEP, 2.0), tol=1e-8)


@pytest.fixture(scope="session")
def flagship():
    """The two-body bounce continuation, eps_n = 4^-n for n = 1..8."""
    sys = MassSystem(3, (1.0, 1.0), 1.0)
    q = np.array([[-L_SEP / 2, 0.0, 0.0], [L_SEP / 2, 0.0, 0.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        seq = continuation(sys, q, q, [4.0 ** -n for n in range(1, 9)], **flagship_config())
    return seq


@pytest.fixture(scope="session")
def flagship_events(flagship):
    return detect_collisions(flagship)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
