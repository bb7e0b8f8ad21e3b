"""Shared fixtures: reference couplings and small reusable instances."""

import numpy as np
import pytest

from phi4kz.local_solver import LocalHamiltonianSpec, site_operators, solve_local
from phi4kz.model import ModelParams, coupling_ion_chain


@pytest.fixture(scope="session")
def g_ref():
    return coupling_ion_chain()


@pytest.fixture(scope="session")
def params_ref(g_ref):
    """Reference couplings of the ion-chain mapping at omega0 = 9."""
    return ModelParams(hbar=0.1, g=g_ref, omega0=9.0)


@pytest.fixture(scope="session")
def small_ops(g_ref):
    """Site operators at d=4 for tiny-lattice cross-checks (eps_tilde = -0.5)."""
    spec = LocalHamiltonianSpec(hbar=0.1, g=g_ref, omega0=9.0, eps_tilde=-0.5)
    return site_operators(solve_local(spec, 4))


@pytest.fixture(scope="session")
def small_ops_plus(g_ref):
    """Same couplings on the disordered side (eps_tilde = +0.5)."""
    spec = LocalHamiltonianSpec(hbar=0.1, g=g_ref, omega0=9.0, eps_tilde=0.5)
    return site_operators(solve_local(spec, 4))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
