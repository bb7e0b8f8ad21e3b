"""Reference implementations: self-consistency and pinned fixtures."""

import json
from pathlib import Path

import numpy as np
import pytest

from phi4kz.errors import ConfigurationError
from phi4kz.local_solver import LocalHamiltonianSpec, site_operators, solve_local
from phi4kz.model import (
    LatticeSpec,
    ModelParams,
    assemble,
    coupling_ion_chain,
    critical_field_shift,
)
from phi4kz.oracle import (
    DenseState,
    dense_correlator,
    dense_evolve,
    dense_expectation,
    dense_ground,
    dense_hamiltonian,
    grid_local_solver,
)

FIXTURES = Path(__file__).parent / "fixtures"


def tiny_chain(d=4, eps=-0.5, length=4):
    g = coupling_ion_chain()
    eps_c = critical_field_shift(0.1, g, 9.0)
    eps_tilde = eps_c - eps
    ops = site_operators(solve_local(LocalHamiltonianSpec(0.1, g, 9.0, eps_tilde), d))
    lattice = LatticeSpec(length, ModelParams(0.1, g, 9.0))
    return assemble(lattice, ops, eps_tilde), ops


class TestDenseHamiltonian:
    def test_two_site_hand_expansion(self):
        h, ops = tiny_chain(d=2, length=4)
        mat = dense_hamiltonian(h)
        eye = np.eye(2)

        def emb(m, pos, width):
            out = m
            if pos:
                out = np.kron(np.eye(2 ** pos), out)
            rest = 4 - pos - width
            if rest:
                out = np.kron(out, np.eye(2 ** rest))
            return out

        manual = sum(emb(t, j, 1) for j, t in enumerate(h.site_terms))
        manual = manual + sum(emb(t, b, 2) for b, t in enumerate(h.bond_terms))
        assert np.abs(mat - manual).max() < 1e-13
        assert np.abs(mat - mat.conj().T).max() < 1e-13

    def test_cap_enforced(self):
        h, _ = tiny_chain(d=4, length=4)
        with pytest.raises(ConfigurationError):
            DenseState(np.zeros(4 ** 12), 12, 4)

    def test_pinned_ground_energies(self):
        fix = json.loads((FIXTURES / "dense_ground_reference.json").read_text())
        for key, entry in fix["entries"].items():
            h, _ = tiny_chain(d=4, eps=entry["eps"])
            energy, _ = dense_ground(h)
            assert energy == pytest.approx(entry["ground_energy"], abs=1e-10)

    def test_ground_invariant_under_site_reversal(self):
        h, ops = tiny_chain(d=3)
        e1, _ = dense_ground(h)
        reversed_h = type(h)(
            site_terms=list(reversed(h.site_terms)),
            bond_terms=list(reversed(h.bond_terms)),
            eps_tilde=h.eps_tilde, lattice=h.lattice, ops=ops,
        )
        e2, _ = dense_ground(reversed_h)
        assert e1 == pytest.approx(e2, abs=1e-12)


class TestDenseEvolve:
    def test_zero_time_identity(self):
        h, _ = tiny_chain(d=3)
        _, state = dense_ground(h)
        out = dense_evolve(state, h, 0.0)
        assert np.abs(out.vector - state.vector).max() < 1e-12

    def test_eigenstate_pure_phase(self):
        h, _ = tiny_chain(d=3)
        energy, state = dense_ground(h)
        t = 0.7
        out = dense_evolve(state, h, t)
        expected = np.exp(-1j * energy * t / 0.1) * state.vector
        assert np.abs(out.vector - expected).max() < 1e-10
        assert abs(abs(np.vdot(out.vector, state.vector)) - 1.0) < 1e-12

    def test_stepping_matches_exact(self):
        h, _ = tiny_chain(d=3)
        _, state = dense_ground(h)
        rot = DenseState(np.roll(state.vector, 1), state.length, state.d).normalized()
        a = dense_evolve(rot, h, 0.3, method="exact")
        b = dense_evolve(rot, h, 0.3, method="stepping")
        assert np.abs(a.vector - b.vector).max() < 1e-9

    def test_energy_conserved(self):
        h, _ = tiny_chain(d=3)
        _, state = dense_ground(h)
        rot = DenseState(np.roll(state.vector, 2), state.length, state.d).normalized()
        e0 = dense_expectation(rot, h)
        e1 = dense_expectation(dense_evolve(rot, h, 1.3), h)
        assert e0 == pytest.approx(e1, abs=1e-10)


class TestDenseCorrelator:
    def test_product_state_factorizes(self):
        h, ops = tiny_chain(d=3)
        v = np.zeros(3 ** 4, dtype=np.complex128)
        v[0] = 1.0  # |0000>
        state = DenseState(v, 4, 3)
        for l in (1, 2, 3):
            assert dense_correlator(state, ops, 0, l) == pytest.approx(0.0, abs=1e-14)
        # l = 0 contracts the truncated product Y.Y, not the represented y^2
        y_sq = (ops.y_mat @ ops.y_mat)[0, 0]
        assert dense_correlator(state, ops, 1, 0) == pytest.approx(y_sq, abs=1e-12)

    def test_ferromagnetic_ground_correlations(self):
        h, ops = tiny_chain(d=4, eps=0.5)  # ordered side
        _, state = dense_ground(h)
        c1 = dense_correlator(state, ops, 1, 1)
        assert c1 > 0


class TestGridSolver:
    def test_harmonic_limit(self):
        spec = LocalHamiltonianSpec(hbar=0.1, g=1e-12, omega0=1.0, eps_tilde=1.0)
        vals = grid_local_solver(spec, 5)
        assert np.abs(vals - 0.1 * (np.arange(5) + 0.5)).max() < 1e-8

    def test_double_well_doublet_positive_splitting(self):
        spec = LocalHamiltonianSpec(hbar=0.1, g=coupling_ion_chain(), omega0=9.0, eps_tilde=-1.0)
        vals = grid_local_solver(spec, 4)
        assert vals[1] - vals[0] > 0

    def test_point_doubling_convergence(self):
        spec = LocalHamiltonianSpec(hbar=0.1, g=coupling_ion_chain(), omega0=9.0, eps_tilde=0.2)
        coarse = grid_local_solver(spec, 4, points=3000, richardson=False)
        fine = grid_local_solver(spec, 4, points=6000, richardson=False)
        finest = grid_local_solver(spec, 4, points=12000, richardson=False)
        err_coarse = np.abs(coarse - finest).max()
        err_fine = np.abs(fine - finest).max()
        assert err_fine < err_coarse / 2.5  # second-order stencil

    def test_explicit_box_too_small(self):
        spec = LocalHamiltonianSpec(hbar=0.1, g=coupling_ion_chain(), omega0=9.0, eps_tilde=0.2)
        with pytest.raises(ConfigurationError):
            grid_local_solver(spec, 4, box=0.05, points=800)
