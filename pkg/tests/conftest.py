import numpy as np
import pytest

from dichotomy import adjoint_basis_michelson, dae_build
from melnikov import xi_gradient_4d, xi_matrix_3d
from numerics import ToleranceConfig
from orbits import P_EXACT, shoot_homoclinic_4d


@pytest.fixture(scope="session")
def tight():
    return ToleranceConfig.tight()


@pytest.fixture(scope="session")
def dae():
    return dae_build()


@pytest.fixture(scope="session")
def michelson_basis(tight):
    # 伴随解基计算代价较高，整个会话只算一次
    return adjoint_basis_michelson(20.0, tight)


@pytest.fixture(scope="session")
def het_report(michelson_basis, dae):
    return xi_matrix_3d(michelson_basis, 20.0, 1.0, dae)


@pytest.fixture(scope="session")
def profile_p2():
    return shoot_homoclinic_4d(-2.0, 25.0)


@pytest.fixture(scope="session")
def profile_exact():
    return shoot_homoclinic_4d(P_EXACT, 25.0)


@pytest.fixture(scope="session")
def hom_report(profile_p2):
    return xi_gradient_4d(profile_p2, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
