import numpy as np
import pytest

from vdpsync import lattice, meanfield


# paper-scale SSH parameters: kappa1 = 5e-3 w0, kappa2 = 2 kappa1, lambda0 = 0.25 w0
@pytest.fixture(scope="session")
def ssh_params():
    return meanfield.MeanFieldParams(omega0=1.0, kappa1=5e-3, kappa2=1e-2)


@pytest.fixture(scope="session")
def kagome_params():
    return meanfield.MeanFieldParams(omega0=1.0, kappa1=5e-4, kappa2=1e-2)


@pytest.fixture(scope="session")
def ssh20_topo():
    return lattice.build_ssh(20, 0.25, 0.6 * 0.25)


@pytest.fixture(scope="session")
def ssh20_trivial():
    return lattice.build_ssh(20, 0.25, -0.4 * 0.25)


@pytest.fixture(scope="session")
def dimer():
    return lattice.build_custom(2, [(1, 2, 0.25)])


@pytest.fixture(scope="session")
def single_site():
    return lattice.CouplingMatrix(np.zeros((1, 1)))
