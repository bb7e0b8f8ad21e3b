"""Real-time evolution at fixed control field: fourth-order gate schedule.

One step of duration ``dt`` applies seven alternating layers of two-site
gates, ``exp(-i c h_bond dt / hbar)``, with the classic fourth-order
composition coefficients; the even-odd/odd-even bond split comes from
``model.bond_split``.  Bond matrices fall into at most three classes (left
edge, interior, right edge), so each step needs three eigendecompositions
from which all layer gates are assembled and cached.

Sign and scale convention: the physical propagator is the Schroedinger one,
``exp(-i H t / hbar)``, with the model's dimensionless ``hbar`` dividing the
phase; observables built from moduli are insensitive to the overall sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model import LatticeHamiltonian, bond_split
from .mps import MatrixProductState, TruncationPolicy


def st4_coefficients() -> dict:
    """Closed-form layer coefficients of the fourth-order composition."""
    w = 2.0 - 2.0 ** (1.0 / 3.0)
    return {
        "c1": 1.0 / (2.0 * w),
        "c2": (1.0 - 2.0 ** (1.0 / 3.0)) / (2.0 * w),
        "d1": 1.0 / w,
        "d2": -(2.0 ** (1.0 / 3.0)) / w,
    }


@dataclass(frozen=True)
class St4Schedule:
    """Seven-layer gate pattern A,B,A,B,A,B,A with its coefficients."""

    layers: tuple
    dt: float

    def __post_init__(self):
        if len(self.layers) != 7:
            raise ConfigurationError("fourth-order schedule has exactly 7 layers")
        pattern = tuple(which for which, _ in self.layers)
        if pattern != ("A", "B", "A", "B", "A", "B", "A"):
            raise ConfigurationError("layer pattern must alternate A,B,...,A")
        a_sum = sum(c for which, c in self.layers if which == "A")
        b_sum = sum(c for which, c in self.layers if which == "B")
        if abs(a_sum - 1.0) > 1e-14 or abs(b_sum - 1.0) > 1e-14:
            raise ConfigurationError("layer coefficients must each sum to 1")


def st4_schedule(dt: float) -> St4Schedule:
    c = st4_coefficients()
    layers = (
        ("A", c["c1"]), ("B", c["d1"]), ("A", c["c2"]), ("B", c["d2"]),
        ("A", c["c2"]), ("B", c["d1"]), ("A", c["c1"]),
    )
    return St4Schedule(layers=layers, dt=float(dt))


class GateSet:
    """Exponentiated bond gates for one (Hamiltonian, dt) pair.

    The three distinct bond classes are eigendecomposed once; a gate for any
    layer coefficient is then one reconstruction, cached per (class, coef).
    """

    def __init__(self, h: LatticeHamiltonian, dt: float):
        self.dt = float(dt)
        self.hbar = h.lattice.model.hbar
        self.d = h.d
        split = bond_split(h)
        self.a_bonds = [b for b, _ in split.a_bonds]
        self.b_bonds = [b for b, _ in split.b_bonds]
        self._class_of = {}
        self._eigs = {}
        for b, mat in split.a_bonds + split.b_bonds:
            key = "left" if b == 0 else ("right" if b == h.length - 2 else "mid")
            self._class_of[b] = key
            if key not in self._eigs:
                herm_dev = np.abs(mat - mat.conj().T).max()
                if herm_dev > 1e-12:
                    raise ConfigurationError(f"bond matrix not Hermitian ({herm_dev:.2e})")
                self._eigs[key] = np.linalg.eigh(mat)
        self._gates = {}

    def gate(self, bond: int, coef: float) -> np.ndarray:
        key = (self._class_of[bond], coef)
        cached = self._gates.get(key)
        if cached is None:
            vals, vecs = self._eigs[key[0]]
            phases = np.exp(-1j * coef * self.dt * vals / self.hbar)
            cached = (vecs * phases) @ vecs.conj().T
            self._gates[key] = cached
        return cached


def evolve_fixed(psi: MatrixProductState, h: LatticeHamiltonian, dt: float,
                 policy: TruncationPolicy | None = None,
                 gates: GateSet | None = None) -> MatrixProductState:
    """One fourth-order step of duration ``dt`` at fixed control field.

    Layers alternate sweep direction so the orthogonality centre snakes
    across the chain; gates within a layer act on disjoint bonds and commute
    exactly.  Pass a prebuilt ``GateSet`` to reuse gate exponentials.
    """
    if psi.d != h.d or psi.length != h.length:
        raise ConfigurationError("state and Hamiltonian disagree on geometry")
    if policy is not None:
        psi.trunc = policy
    if gates is None:
        gates = GateSet(h, dt)
    elif gates.dt != dt or gates.d != h.d:
        raise ConfigurationError("gate cache was built for different step or dimension")
    if dt == 0.0:
        return psi
    schedule = st4_schedule(dt)
    for layer_idx, (which, coef) in enumerate(schedule.layers):
        bonds = gates.a_bonds if which == "A" else gates.b_bonds
        rightward = layer_idx % 2 == 0
        ordered = bonds if rightward else list(reversed(bonds))
        for bond in ordered:
            psi.apply_two_site_gate(gates.gate(bond, coef), bond,
                                    fold_left=not rightward)
    return psi


def evolve_total(psi: MatrixProductState, h: LatticeHamiltonian, t_total: float,
                 dt: float, policy: TruncationPolicy | None = None) -> MatrixProductState:
    """Repeat fixed-field steps to cover ``t_total`` (last step may be short)."""
    n_full, remainder = divmod(abs(t_total), dt)
    sign = 1.0 if t_total >= 0 else -1.0
    gates = GateSet(h, sign * dt)
    for _ in range(int(round(n_full))):
        evolve_fixed(psi, h, sign * dt, policy, gates)
    if remainder > 1e-15 * max(1.0, abs(t_total)):
        evolve_fixed(psi, h, sign * remainder, policy)
    return psi
