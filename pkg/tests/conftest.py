import numpy as np
import pytest

import sparsegossip as sg


@pytest.fixture
def k10():
    return sg.complete_graph(10)


@pytest.fixture
def schedule():
    return sg.ProtocolSchedule(rho0=1.0, zeta0=0.3, tau=0.5, epsilon=0.25)


@pytest.fixture
def small_quadratic():
    return sg.make_quadratic_problem(4, 3, mu=1.0, lip_grad=5.0, rng=np.random.default_rng(0))


@pytest.fixture(autouse=True)
def _quiet_protocol_flags():
    # the conservative k=0 contraction flag fires for most sane configs by design
    import warnings

    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*contraction margin.*")
        yield
