"""Quench protocol on tiny instances: limits, ledgers, determinism."""

import numpy as np
import pytest

from phi4kz.dmrg import DmrgSettings
from phi4kz.local_solver import LocalHamiltonianSpec, site_operators, solve_local
from phi4kz.model import (
    LatticeSpec,
    ModelParams,
    assemble,
    coupling_ion_chain,
    critical_field_shift,
    schedule,
)
from phi4kz.mps import TruncationPolicy
from phi4kz.oracle import DenseState, dense_evolve, dense_expectation, dense_ground
from phi4kz.quench import (
    QuenchRun,
    average_curves,
    final_ground_reference,
    run,
    sweep,
    with_shared_references,
)

G_REF = coupling_ion_chain()
EPS_C = critical_field_shift(0.1, G_REF, 9.0)


def tiny_run(tau_q, dt, d=4, length=4, seed=3, m_max=16, weight_tol=1e-14,
             checkpoints=(), omega0=9.0):
    eps_c = critical_field_shift(0.1, G_REF, omega0)
    lattice = LatticeSpec(length, ModelParams(0.1, G_REF, omega0))
    return QuenchRun(
        lattice=lattice,
        schedule=schedule(tau_q, dt, eps_tilde_c=eps_c),
        d=d,
        trunc=TruncationPolicy(m_max, weight_tol),
        seed=seed,
        checkpoints=checkpoints,
        dmrg=DmrgSettings(energy_tol=1e-11, local_tol=1e-10,
                          trunc=TruncationPolicy(m_max, weight_tol), seed=seed),
        label=f"tau{tau_q:g}",
    )


class TestAdiabaticLimit:
    def test_slow_quench_tracks_ground_state(self):
        res = run(tiny_run(200.0, 0.1), keep_states=True)
        fid = abs(res.final_state.overlap(res.ground_state_final))
        assert fid >= 0.99
        assert res.e_exc < 5e-4
        assert res.e_exc >= -1e-9

    def test_excitation_decreases_with_tau(self):
        results = [run(tiny_run(tau, 0.05)) for tau in (5.0, 20.0, 80.0)]
        e = [r.e_exc for r in results]
        assert e[0] > e[1] > e[2] > 0


class TestSuddenLimit:
    def test_single_step_matches_dense_sudden_quench(self):
        # tau_q = 2*dt collapses the ramp to three plateaus; the dominant
        # effect is a sudden Hamiltonian change, compare E_exc with the
        # dense sudden-quench value <psi0|H_f|psi0> - E_G
        qr = tiny_run(0.2, 0.1)
        res = run(qr)
        eps_tilde_in = EPS_C + 0.5
        eps_tilde_out = EPS_C - 0.5
        ops_in = site_operators(solve_local(
            LocalHamiltonianSpec(0.1, G_REF, 9.0, eps_tilde_in), 4))
        lattice = LatticeSpec(4, ModelParams(0.1, G_REF, 9.0))
        h_in = assemble(lattice, ops_in, eps_tilde_in)
        e0, psi0 = dense_ground(h_in)
        # express the initial dense ground state in the final local basis
        eig_in = solve_local(LocalHamiltonianSpec(0.1, G_REF, 9.0, eps_tilde_in, 64), 4,
                             check_convergence=False)
        eig_out = solve_local(LocalHamiltonianSpec(0.1, G_REF, 9.0, eps_tilde_out, 64), 4,
                              check_convergence=False)
        u1 = eig_out.vectors.T @ eig_in.vectors
        u = u1
        for _ in range(3):
            u = np.kron(u, u1)
        v_out = u @ psi0.vector
        v_out /= np.linalg.norm(v_out)
        ops_out = site_operators(eig_out)
        h_out = assemble(lattice, ops_out, eps_tilde_out)
        e_g, _ = dense_ground(h_out)
        e_sudden = dense_expectation(DenseState(v_out, 4, 4), h_out) - e_g
        assert res.e_exc == pytest.approx(e_sudden, rel=0.05)


class TestLedgers:
    def test_complete_basis_has_no_norm_loss(self):
        # d = n_rep makes every basis change exactly unitary
        eps_c = critical_field_shift(0.1, G_REF, 9.0)
        lattice = LatticeSpec(4, ModelParams(0.1, G_REF, 9.0))
        qr = QuenchRun(
            lattice=lattice,
            schedule=schedule(1.0, 0.05, eps_tilde_c=eps_c),
            d=8, n_rep=32,
            trunc=TruncationPolicy(64, 1e-14),
            seed=3,
            dmrg=DmrgSettings(energy_tol=1e-10, local_tol=1e-9,
                              trunc=TruncationPolicy(64, 1e-14), seed=3),
        )
        res = run(qr)
        assert res.norm_loss_total < 1e-12

    def test_norm_loss_positive_and_gated(self):
        res = run(tiny_run(1.0, 0.05, d=4))
        assert 0 <= res.norm_loss_total < 1
        assert ("norm-loss" in res.flags) == (res.norm_loss_total > 1e-6)

    def test_checkpoint_records(self, tmp_path):
        qr = tiny_run(1.0, 0.05, checkpoints=(-0.5, 0.0, 0.5))
        res = run(qr, workdir=tmp_path)
        assert [c["eps"] for c in res.checkpoint_records] == [-0.5, 0.0, 0.5]
        files = list(tmp_path.glob("*.mps"))
        assert len(files) == 3
        from phi4kz.mps import load_checkpoint

        state, extra = load_checkpoint(sorted(files)[0])
        assert state.length == 4
        assert "checkpoint" in extra


class TestDeterminism:
    def test_identical_runs_bit_identical_records(self):
        a = run(tiny_run(0.6, 0.05)).record()
        b = run(tiny_run(0.6, 0.05)).record()
        assert a == b

    def test_shared_reference_matches_inline(self):
        qr = tiny_run(0.4, 0.05)
        inline = run(qr).record()
        stamped, = with_shared_references([qr])
        shared = run(stamped).record()
        assert shared["e_exc"] == pytest.approx(inline["e_exc"], abs=1e-9)
        assert shared["ground_energy_final"] == pytest.approx(
            inline["ground_energy_final"], abs=1e-9)


class TestSweep:
    def test_grid_and_averaging(self):
        runs = []
        for length in (8, 12):
            for tau in (0.5, 1.0):
                eps_c = critical_field_shift(0.1, G_REF, 9.0)
                lattice = LatticeSpec(length, ModelParams(0.1, G_REF, 9.0))
                runs.append(QuenchRun(
                    lattice=lattice, schedule=schedule(tau, 0.05, eps_tilde_c=eps_c),
                    d=6, trunc=TruncationPolicy(12, 1e-10), seed=5,
                    dmrg=DmrgSettings(energy_tol=1e-9, local_tol=1e-9,
                                      trunc=TruncationPolicy(12, 1e-10), seed=5),
                    label=f"L{length}_tau{tau:g}"))
        results, failures = sweep(runs, workers=1)
        assert not failures
        assert len(results) == 4
        curves = average_curves(results)
        assert len(curves) == 2  # one per tau_q
        for c in curves:
            assert c["n_runs"] == 2
            assert c["lengths"] == [8, 12]
            members = [r.xi for r in results
                       if r.schedule_echo["tau_q"] == c["tau_q"]]
            assert c["xi_mean"] == pytest.approx(np.mean(members))

    def test_partial_failure_recorded(self):
        good = tiny_run(0.5, 0.05, length=8, d=6, m_max=12, weight_tol=1e-10)
        bad = tiny_run(0.5, 0.05, length=4, d=6, m_max=12, weight_tol=1e-10)
        # L=4 has no correlator window -> still succeeds; force a real
        # failure via an absurd representation that cannot converge
        from dataclasses import replace

        bad = replace(bad, n_rep=24, d=6, label="doomed")
        results, failures = sweep([good, bad], workers=1, share_references=False)
        assert len(results) == 1
        assert len(failures) == 1
        assert failures[0]["label"] == "doomed"


def test_final_ground_reference_matches_direct():
    qr = tiny_run(0.4, 0.05)
    ref = final_ground_reference(qr)
    res = run(qr)
    assert ref == pytest.approx(res.ground_energy_final, abs=1e-8)
