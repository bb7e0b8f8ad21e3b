"""Gate-schedule coefficients and evolution accuracy against the dense oracle."""

import numpy as np
import pytest

from phi4kz.local_solver import LocalHamiltonianSpec, site_operators, solve_local
from phi4kz.model import (
    LatticeHamiltonian,
    LatticeSpec,
    ModelParams,
    assemble,
    coupling_ion_chain,
    critical_field_shift,
)
from phi4kz.mps import MatrixProductState, TruncationPolicy
from phi4kz.oracle import DenseState, dense_evolve, dense_expectation
from phi4kz.tebd import GateSet, evolve_fixed, evolve_total, st4_coefficients, st4_schedule

ORACLE_TRUNC = TruncationPolicy(16, 1e-30)


@pytest.fixture(scope="module")
def chain():
    g = coupling_ion_chain()
    eps_tilde = critical_field_shift(0.1, g, 9.0)
    ops = site_operators(solve_local(LocalHamiltonianSpec(0.1, g, 9.0, eps_tilde), 4))
    return assemble(LatticeSpec(4, ModelParams(0.1, g, 9.0)), ops, eps_tilde)


def start_state():
    return MatrixProductState.product_state(4, 4, 0, trunc=ORACLE_TRUNC)


def aligned_error(v, ref):
    phase = np.vdot(ref, v)
    phase /= abs(phase)
    return np.linalg.norm(v - phase * ref)


class TestCoefficients:
    def test_closed_forms(self):
        c = st4_coefficients()
        assert c["c1"] == pytest.approx(0.6756035, abs=1e-7)
        assert c["d1"] == pytest.approx(1.3512071, abs=1e-7)
        assert c["d2"] < 0

    def test_sums_to_one(self):
        c = st4_coefficients()
        assert abs(2 * c["c1"] + 2 * c["c2"] - 1) < 1e-15
        assert abs(2 * c["d1"] + c["d2"] - 1) < 1e-15

    def test_schedule_pattern(self):
        sched = st4_schedule(0.1)
        assert [w for w, _ in sched.layers] == ["A", "B", "A", "B", "A", "B", "A"]
        coeffs = [c for _, c in sched.layers]
        assert coeffs == coeffs[::-1]  # palindromic composition


class TestEvolveFixed:
    def test_zero_step_identity(self, chain):
        psi = start_state()
        before = psi.to_statevector()
        evolve_fixed(psi, chain, 0.0)
        assert np.array_equal(psi.to_statevector(), before)

    def test_fidelity_against_dense(self, chain):
        psi = start_state()
        ref = dense_evolve(DenseState(psi.to_statevector(), 4, 4), chain, 1.0)
        evolve_total(psi, chain, 1.0, 1e-2)
        fid = abs(np.vdot(psi.to_statevector(), ref.vector))
        assert fid >= 1 - 1e-6

    def test_fourth_order_scaling(self, chain):
        ref = dense_evolve(DenseState(start_state().to_statevector(), 4, 4), chain, 1.0)
        errs = []
        for dt in (2e-2, 1e-2):
            psi = start_state()
            evolve_total(psi, chain, 1.0, dt)
            errs.append(aligned_error(psi.to_statevector(), ref.vector))
        ratio = errs[0] / errs[1]
        assert 16 * 0.7 <= ratio <= 16 * 1.3

    def test_energy_conservation(self, chain):
        psi = start_state()
        e0 = dense_expectation(DenseState(psi.to_statevector(), 4, 4), chain)
        evolve_total(psi, chain, 1.0, 1e-3)
        e1 = dense_expectation(DenseState(psi.to_statevector(), 4, 4), chain)
        assert abs(e1 - e0) < 1e-8

    def test_norm_preserved_up_to_ledger(self, chain):
        psi = start_state()
        evolve_total(psi, chain, 0.5, 1e-2)
        assert psi.norm() == pytest.approx(1.0, abs=1e-12)
        assert psi.norm_ledger == pytest.approx(1.0, abs=1e-10)

    def test_hbar_dependence_of_phase(self, chain):
        # an eigenstate only picks up exp(-i E t / hbar): doubling hbar at
        # fixed matrices halves the accumulated angle
        from phi4kz.dmrg import DmrgSettings, ground_state

        res = ground_state(chain, DmrgSettings(energy_tol=1e-13, trunc=ORACLE_TRUNC))
        t = 0.3

        def phase_with_hbar(hbar):
            lattice = LatticeSpec(4, ModelParams(hbar, chain.lattice.model.g,
                                                 chain.lattice.model.omega0))
            h2 = LatticeHamiltonian(site_terms=chain.site_terms,
                                    bond_terms=chain.bond_terms,
                                    eps_tilde=chain.eps_tilde,
                                    lattice=lattice, ops=chain.ops)
            psi = res.psi.copy()
            before = psi.to_statevector()
            evolve_total(psi, h2, t, 1e-3)
            return np.angle(np.vdot(before, psi.to_statevector()))

        p1 = phase_with_hbar(0.1)
        p2 = phase_with_hbar(0.2)
        assert p1 == pytest.approx(-res.energy * t / 0.1, abs=1e-8)
        assert p1 == pytest.approx(2 * p2, abs=1e-8)

    def test_gateset_reuse_and_guard(self, chain):
        gates = GateSet(chain, 1e-2)
        psi = start_state()
        evolve_fixed(psi, chain, 1e-2, gates=gates)
        from phi4kz.errors import ConfigurationError
        with pytest.raises(ConfigurationError):
            evolve_fixed(psi, chain, 2e-2, gates=gates)

    def test_geometry_guard(self, chain):
        psi = MatrixProductState.product_state(6, 4, 0)
        from phi4kz.errors import ConfigurationError
        with pytest.raises(ConfigurationError):
            evolve_fixed(psi, chain, 1e-2)
