"""The full quench protocol: ground state, evolve, rebase, measure.

A run starts from the variational ground state at the first ramp plateau,
then alternates fixed-field fourth-order evolution over each plateau
interval (halved at both ends) with per-site quasi-unitary basis changes to
the next plateau's local eigenbasis.  Local eigensystems are solved
streaming along the ramp in one gauge-aligned chain; representation
convergence is validated at sampled plateaus.

Loss accounting: singular-value truncation feeds
``discarded_weight_total`` while the norm lost to the quasi-unitary basis
changes alone is reported as ``norm_loss_total`` (one minus the retained
probability), matching the quantity quoted for the method's fidelity.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .dmrg import DmrgSettings, ground_state
from .errors import ConfigurationError, ConvergenceError
from .local_solver import (
    LocalHamiltonianSpec,
    align_eigensystem,
    basis_change_matrix,
    chain_n_rep,
    site_operators,
    solve_local,
)
from .mps import MatrixProductState, TruncationPolicy, save_checkpoint
from .model import LatticeSpec, QuenchSchedule, assemble
from .observables import (
    correlation_length,
    correlator_profile,
    excitation_energy,
    global_parity,
)
from .tebd import GateSet, evolve_fixed

#: run-validity gates: records beyond these are flagged and excluded from fits
NORM_LOSS_GATE = 1e-6
DISCARDED_WEIGHT_GATE = 1e-4
#: a norm loss beyond this marks the run as numerically meaningless
NORM_LOSS_FATAL = 1e-3


@dataclass(frozen=True)
class QuenchRun:
    """Everything needed to reproduce one quench trajectory."""

    lattice: LatticeSpec
    schedule: QuenchSchedule
    d: int = 20
    trunc: TruncationPolicy = field(default_factory=TruncationPolicy)
    n_rep: int | None = None
    omega_ref: float = 1.0
    seed: int = 0
    checkpoints: tuple = ()
    dmrg: DmrgSettings | None = None
    label: str = ""
    #: precomputed ground energy of the final Hamiltonian (shared across the
    #: tau_q grid by ``sweep``; computed in-run when absent)
    e_ground_final: float | None = None
    #: disable the sampled representation-convergence checks (needed for the
    #: completeness limit d == n_rep, where the raw spectrum never converges)
    check_local_convergence: bool = True

    def local_spec(self, eps_tilde: float) -> LocalHamiltonianSpec:
        m = self.lattice.model
        return LocalHamiltonianSpec(m.hbar, m.g, m.omega0, eps_tilde,
                                    self.n_rep, self.omega_ref)

    def default_checkpoints(self) -> tuple:
        return (-0.5, 0.0, 0.5)


@dataclass
class QuenchResult:
    """Observables and bookkeeping of one completed run."""

    xi: float | None
    e_exc: float
    correlator_l: np.ndarray | None
    correlator_c: np.ndarray | None
    correlator_spread: np.ndarray | None
    bulk_window: tuple | None
    norm_loss_total: float
    discarded_weight_total: float
    wall_time: float
    schedule_echo: dict
    flags: list
    valid: bool
    final_energy: float
    ground_energy_final: float
    final_parity: float
    max_bond_dimension: int
    checkpoint_records: list
    label: str = ""
    final_state: MatrixProductState | None = None
    ground_state_final: MatrixProductState | None = None

    def record(self) -> dict:
        """Deterministic observable record (no timings)."""
        return {
            "label": self.label,
            "schedule": self.schedule_echo,
            "xi": self.xi,
            "e_exc": self.e_exc,
            "correlator": {
                "l": None if self.correlator_l is None else [int(x) for x in self.correlator_l],
                "c": None if self.correlator_c is None else list(map(float, self.correlator_c)),
                "spread": None if self.correlator_spread is None
                          else list(map(float, self.correlator_spread)),
                "bulk_window": self.bulk_window,
            },
            "norm_loss_total": self.norm_loss_total,
            "discarded_weight_total": self.discarded_weight_total,
            "final_energy": self.final_energy,
            "ground_energy_final": self.ground_energy_final,
            "final_parity": self.final_parity,
            "max_bond_dimension": self.max_bond_dimension,
            "checkpoints": self.checkpoint_records,
            "flags": sorted(self.flags),
            "valid": self.valid,
        }


def run(qrun: QuenchRun, *, workdir=None, keep_states: bool = False,
        checkpoint_every: int | None = None, progress=None) -> QuenchResult:
    """Execute one quench trajectory end to end.

    ``checkpoint_every`` additionally snapshots the state to ``workdir``
    every that many plateaus (requires ``workdir``).
    """
    t_start = time.perf_counter()
    sched = qrun.schedule
    lattice = qrun.lattice
    eps_tilde_values = sched.eps_tilde_values()
    eps_values = sched.eps_values()
    intervals = sched.intervals()
    n_plateaus = len(eps_tilde_values)

    base = qrun.local_spec(eps_tilde_values[0])
    n_rep = qrun.n_rep or chain_n_rep(base, qrun.d, eps_tilde_values)
    check_set = ({0, n_plateaus // 2, n_plateaus - 1}
                 if qrun.check_local_convergence else set())

    def solve_at(k, prev=None):
        spec = LocalHamiltonianSpec(
            lattice.model.hbar, lattice.model.g, lattice.model.omega0,
            eps_tilde_values[k], n_rep, qrun.omega_ref)
        eig = solve_local(spec, qrun.d,
                          check_convergence=(k in check_set), adapt=False)
        if prev is not None:
            eig = align_eigensystem(prev, eig)
        return eig

    dmrg_settings = qrun.dmrg or DmrgSettings(trunc=qrun.trunc, seed=qrun.seed)
    flags = []
    checkpoint_records = []
    checkpoints = sorted(qrun.checkpoints) if qrun.checkpoints else []
    pending_checkpoints = list(checkpoints)

    eig = solve_at(0)
    ops = site_operators(eig)
    h = assemble(lattice, ops, eps_tilde_values[0])
    ground0 = ground_state(h, dmrg_settings)
    if not ground0.converged:
        raise ConvergenceError(
            "initial ground-state search did not converge; cannot start quench")
    psi = ground0.psi
    psi.trunc = qrun.trunc
    psi.eps_tag = eps_tilde_values[0]

    basis_keep_prob = 1.0  # retained probability through all basis changes
    max_bond = max(psi.bond_dimensions, default=1)
    t_now = -sched.tau_q / 2.0

    for k in range(n_plateaus):
        gates = GateSet(h, intervals[k])
        evolve_fixed(psi, h, intervals[k], gates=gates)
        t_now += intervals[k]
        max_bond = max(max_bond, max(psi.bond_dimensions, default=1))

        while pending_checkpoints and eps_values[k] >= pending_checkpoints[0] - 1e-12:
            cp_eps = pending_checkpoints.pop(0)
            rec = {
                "eps": float(cp_eps),
                "eps_tilde": float(eps_tilde_values[k]),
                "t": float(t_now),
                "norm_loss_so_far": float(1.0 - basis_keep_prob),
                "discarded_so_far": float(psi.discarded_weight_ledger),
                "max_bond_dimension": int(max_bond),
            }
            if workdir is not None:
                path = os.path.join(
                    str(workdir), f"{qrun.label or 'run'}_eps{cp_eps:+.4f}.mps")
                save_checkpoint(psi, path, extra={"checkpoint": rec})
                rec["state_file"] = os.path.basename(path)
            checkpoint_records.append(rec)

        if checkpoint_every and workdir is not None and k % checkpoint_every == 0:
            path = os.path.join(str(workdir), f"{qrun.label or 'run'}_step{k:07d}.mps")
            save_checkpoint(psi, path, extra={"plateau": k, "t": float(t_now)})

        if k == n_plateaus - 1:
            break
        eig_next = solve_at(k + 1, prev=eig)
        u = basis_change_matrix(eig, eig_next)
        ledger_before = psi.norm_ledger
        psi.apply_site_uniform(u.u)
        step_factor = psi.norm_ledger / ledger_before
        basis_keep_prob *= float(step_factor) ** 2
        psi.eps_tag = eps_tilde_values[k + 1]
        eig = eig_next
        ops = site_operators(eig)
        h = assemble(lattice, ops, eps_tilde_values[k + 1])
        if progress is not None and k % max(1, n_plateaus // 20) == 0:
            progress(k, n_plateaus)

    norm_loss_total = float(1.0 - basis_keep_prob)
    discarded_total = float(psi.discarded_weight_ledger)

    if norm_loss_total > NORM_LOSS_FATAL:
        flags.append("norm-loss-fatal")
    elif norm_loss_total > NORM_LOSS_GATE:
        flags.append("norm-loss")
    if discarded_total > DISCARDED_WEIGHT_GATE:
        flags.append("discarded-weight")

    ground_f = None
    if qrun.e_ground_final is not None:
        e_ground = qrun.e_ground_final
    else:
        ground_f = ground_state(h, dmrg_settings)
        if not ground_f.converged:
            flags.append("final-ground-unconverged")
        e_ground = ground_f.energy
    final_energy = float(
        np.real(sum(psi.expect_one(term, j) for j, term in enumerate(h.site_terms)))
        - sum(psi.expect_two(h.ops.y_mat, b, h.ops.y_mat, b + 1).real
              for b in range(h.length - 1)))
    e_exc = final_energy - e_ground
    if e_exc < -10.0 * dmrg_settings.energy_tol:
        flags.append("negative-excitation")

    xi = None
    profile = None
    if lattice.length >= 8:
        profile = correlator_profile(psi, ops, lattice)
        if profile.has_negative_weights:
            flags.append("negative-correlators")
        xi = correlation_length(profile)
    else:
        flags.append("no-correlator-window")

    parity = global_parity(psi, ops)
    valid = not any(f in ("norm-loss", "norm-loss-fatal", "discarded-weight",
                          "final-ground-unconverged", "negative-excitation")
                    for f in flags)

    result = QuenchResult(
        xi=xi,
        e_exc=float(e_exc),
        correlator_l=None if profile is None else np.arange(1, profile.l_max + 1),
        correlator_c=None if profile is None else profile.values,
        correlator_spread=None if profile is None else profile.spread,
        bulk_window=None if profile is None else (profile.bulk_lo, profile.bulk_hi),
        norm_loss_total=norm_loss_total,
        discarded_weight_total=discarded_total,
        wall_time=time.perf_counter() - t_start,
        schedule_echo={
            "tau_q": sched.tau_q,
            "dt": sched.dt,
            "steps": sched.steps,
            "eps_tilde_c": sched.eps_tilde_c,
            "length": lattice.length,
            "d": qrun.d,
            "n_rep": int(n_rep),
            "m_max": qrun.trunc.m_max,
            "weight_tol": qrun.trunc.weight_tol,
            "omega0": lattice.model.omega0,
            "hbar": lattice.model.hbar,
            "g": lattice.model.g,
            "seed": qrun.seed,
        },
        flags=flags,
        valid=valid,
        final_energy=final_energy,
        ground_energy_final=float(e_ground),
        final_parity=parity,
        max_bond_dimension=int(max_bond),
        checkpoint_records=checkpoint_records,
        label=qrun.label,
        final_state=psi if keep_states else None,
        ground_state_final=(ground_f.psi if (keep_states and ground_f is not None) else None),
    )
    return result


def _sweep_worker(qrun: QuenchRun) -> dict:
    try:
        return {"ok": True, "result": run(qrun)}
    except Exception as exc:  # partial failures recorded, sweep continues
        return {"ok": False, "label": qrun.label, "error": f"{type(exc).__name__}: {exc}"}


def _worker_init():
    # one BLAS thread per worker: runs are independent and cores are scarce
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


def final_ground_reference(qrun: QuenchRun) -> float:
    """Ground energy of the Hamiltonian at the end of the ramp."""
    eps_tilde_final = qrun.schedule.eps_tilde_values()[-1]
    base = qrun.local_spec(eps_tilde_final)
    n_rep = qrun.n_rep or chain_n_rep(base, qrun.d, [eps_tilde_final])
    spec = LocalHamiltonianSpec(
        qrun.lattice.model.hbar, qrun.lattice.model.g, qrun.lattice.model.omega0,
        eps_tilde_final, n_rep, qrun.omega_ref)
    eig = solve_local(spec, qrun.d, check_convergence=False)
    h = assemble(qrun.lattice, site_operators(eig), eps_tilde_final)
    settings = qrun.dmrg or DmrgSettings(trunc=qrun.trunc, seed=qrun.seed)
    res = ground_state(h, settings)
    if not res.converged:
        raise ConvergenceError("final-ground reference did not converge")
    return float(res.energy)


def _reference_key(qrun: QuenchRun):
    m = qrun.lattice.model
    return (qrun.lattice.length, qrun.d, qrun.n_rep, qrun.omega_ref,
            qrun.trunc.m_max, qrun.trunc.weight_tol,
            qrun.schedule.eps_tilde_c, m.hbar, m.g, m.omega0)


def with_shared_references(runs):
    """Stamp runs with the final-ground energy, one solve per unique setup."""
    from dataclasses import replace

    runs = list(runs)
    cache = {}
    stamped = []
    for r in runs:
        if r.e_ground_final is not None:
            stamped.append(r)
            continue
        key = _reference_key(r)
        if key not in cache:
            cache[key] = final_ground_reference(r)
        stamped.append(replace(r, e_ground_final=cache[key]))
    return stamped


def sweep(runs, workers: int = 1, share_references: bool = True):
    """Execute independent runs, one record per run; failures don't abort.

    Returns ``(results, failures)`` where results is a list of QuenchResult
    in the input order (failed entries omitted) and failures a list of
    ``{label, error}`` dicts.  With ``share_references`` the final-ground
    energy is solved once per unique (lattice, truncation, model) setup and
    shared across the whole tau_q grid.
    """
    runs = list(runs)
    if share_references:
        runs = with_shared_references(runs)
    if workers <= 1 or len(runs) <= 1:
        outs = [_sweep_worker(r) for r in runs]
    else:
        import multiprocessing as mp

        ctx = mp.get_context("spawn")
        with ctx.Pool(processes=min(workers, len(runs)),
                      initializer=_worker_init) as pool:
            outs = pool.map(_sweep_worker, runs)
    results = [o["result"] for o in outs if o["ok"]]
    failures = [{"label": o["label"], "error": o["error"]} for o in outs if not o["ok"]]
    return results, failures


def average_curves(results):
    """Arithmetic mean of xi over chain lengths at fixed (omega0, tau_q).

    Only valid records with a measured correlation length enter the average.
    """
    groups = {}
    for res in results:
        if not res.valid or res.xi is None:
            continue
        key = (res.schedule_echo["omega0"], res.schedule_echo["tau_q"])
        groups.setdefault(key, []).append(res)
    curves = []
    for (omega0, tau_q), members in sorted(groups.items()):
        curves.append({
            "omega0": omega0,
            "tau_q": tau_q,
            "xi_mean": float(np.mean([m.xi for m in members])),
            "e_exc_mean": float(np.mean([m.e_exc for m in members])),
            "lengths": sorted(m.schedule_echo["length"] for m in members),
            "n_runs": len(members),
        })
    return curves
