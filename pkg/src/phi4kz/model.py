"""Lattice Hamiltonian assembly and the linear-ramp quench schedule.

The chain Hamiltonian is ``H = sum_j [pi_j^2 + omega0*eps_tilde*y_j^2 +
2g*y_j^4]/2 + sum_<j,j+1> (y_j - y_{j+1})^2 / 2`` on an open chain of L
sites.  Expanding the coupling term distributes ``y^2/2`` onto each bond
endpoint, so in the truncated local basis the model becomes a sum of
single-site terms ``Q_j + c_j W_j`` (with edge coefficient ``c_j = 1/2``)
and bond terms ``-Y_j Y_{j+1}``.

Control-field conventions: the ramped parameter is ``eps = eps_tilde_c -
eps_tilde``, run linearly from -1/2 to +1/2 over the window
``[-tau_q/2, +tau_q/2]`` and discretized into plateaus of width ``dt``
(halved at both ends).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError, ConfigurationError, ScheduleError
from .local_solver import SiteOperators

#: non-universal constant in the critical-field shift law
C_PRIME = 2.63


def coupling_ion_chain() -> float:
    """Quartic coupling 93*zeta(5)/(16*ln 2) of the ion-chain mapping."""
    zeta5 = float(np.sum(1.0 / np.arange(1, 200001, dtype=float) ** 5))
    return 93.0 * zeta5 / (16.0 * math.log(2.0))


def critical_field_shift(hbar: float, g: float, omega0: float, c_prime: float = C_PRIME) -> float:
    """Signed shift of the critical control field, ``3*g*hbar*(ln hbar + c')/(pi*omega0)``.

    Quantum fluctuations move the transition away from the classical value
    ``eps_tilde = 0``.  The expression is a small-``hbar`` asymptotic; its
    magnitude doubles as the quantum-critical width estimate (see
    ``analysis.ginzburg_width_rg``).
    """
    return 3.0 * g * hbar * (math.log(hbar) + c_prime) / (math.pi * omega0)


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless couplings of the chain."""

    hbar: float
    g: float
    omega0: float

    def __post_init__(self):
        for name in ("hbar", "g", "omega0"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class LatticeSpec:
    """Chain geometry: open boundaries, even length >= 4."""

    length: int
    model: ModelParams
    boundary: str = "open"

    def __post_init__(self):
        if self.length < 4:
            raise ConfigurationError("lattice length must be at least 4")
        if self.length % 2 != 0:
            raise ConfigurationError("lattice length must be even (even-odd gate splitting)")
        if self.boundary != "open":
            raise ConfigurationError("only open boundaries are supported")


def edge_weight(site: int, length: int) -> float:
    """Coefficient of W at a site: 1/2 at the chain ends, 1 in the bulk."""
    return 0.5 if site in (0, length - 1) else 1.0


@dataclass(frozen=True)
class LatticeHamiltonian:
    """Assembled chain Hamiltonian in the truncated local basis.

    ``site_terms[j] = diag(Q) + c_j * W`` and ``bond_terms[b]`` is the dense
    two-site matrix ``-Y (x) Y`` for bond ``(b, b+1)``.
    """

    site_terms: list
    bond_terms: list
    eps_tilde: float
    lattice: LatticeSpec
    ops: SiteOperators

    @property
    def length(self) -> int:
        return self.lattice.length

    @property
    def d(self) -> int:
        return self.ops.d


def assemble(lattice: LatticeSpec, ops: SiteOperators, eps_tilde: float) -> LatticeHamiltonian:
    """Build site and bond terms of the open chain at one control value."""
    if abs(ops.eps_tilde - eps_tilde) > 1e-12:
        raise AssemblyError(
            f"site operators tagged eps_tilde={ops.eps_tilde:g} but assembly "
            f"requested {eps_tilde:g}"
        )
    length = lattice.length
    d = ops.d
    q = np.diag(ops.q_diag)
    site_terms = []
    for j in range(length):
        term = q + edge_weight(j, length) * ops.w_mat
        term.flags.writeable = False
        site_terms.append(term)
    yy = -np.kron(ops.y_mat, ops.y_mat)
    yy.flags.writeable = False
    bond_terms = [yy] * (length - 1)
    if site_terms[0].shape != (d, d):
        raise AssemblyError("operator dimension mismatch")
    return LatticeHamiltonian(
        site_terms=site_terms, bond_terms=bond_terms,
        eps_tilde=float(eps_tilde), lattice=lattice, ops=ops,
    )


@dataclass(frozen=True)
class HamiltonianSplit:
    """Even-odd / odd-even bond partition with folded single-site terms.

    ``a_bonds`` holds bonds whose left site index is even (0-based), and
    ``b_bonds`` the rest; each entry is ``(bond_index, dense d^2 x d^2
    matrix)``.  Single-site terms are folded half into each adjacent bond,
    with full weight into the single adjacent bond at the chain edges, so
    the two groups sum exactly to the assembled Hamiltonian.
    """

    a_bonds: list
    b_bonds: list
    d: int


def bond_split(h: LatticeHamiltonian) -> HamiltonianSplit:
    """Partition the Hamiltonian into the two gate groups used by the integrator."""
    length = h.length
    d = h.d
    eye = np.eye(d)
    a_bonds, b_bonds = [], []
    for b in range(length - 1):
        left_w = 1.0 if b == 0 else 0.5
        right_w = 1.0 if b + 1 == length - 1 else 0.5
        mat = (
            h.bond_terms[b]
            + left_w * np.kron(h.site_terms[b], eye)
            + right_w * np.kron(eye, h.site_terms[b + 1])
        )
        mat.flags.writeable = False
        (a_bonds if b % 2 == 0 else b_bonds).append((b, mat))
    return HamiltonianSplit(a_bonds=a_bonds, b_bonds=b_bonds, d=d)


@dataclass(frozen=True)
class QuenchSchedule:
    """Piecewise-flat discretization of the linear ramp.

    The ramp ``eps(t) = t/tau_q`` on ``[-tau_q/2, +tau_q/2]`` is rounded to
    the nearest multiple of ``dt`` (ties round half to even), producing
    ``steps + 1`` plateaus whose control values jump by the constant
    ``-dt/tau_q`` in ``eps_tilde``.  The first and last evolution intervals
    are halved; the intervals sum to ``tau_q`` exactly.

    ``dt`` is the effective timestep after snapping ``steps`` to an even
    integer, so the plateau at ``t = 0`` sits exactly at ``eps = 0``.
    """

    tau_q: float
    dt: float
    eps_tilde_c: float
    steps: int
    eps_start: float = -0.5
    eps_end: float = 0.5

    @property
    def n_plateaus(self) -> int:
        return self.steps + 1

    @property
    def delta_eps_tilde(self) -> float:
        """Constant jump of the control field between plateaus."""
        return -self.dt / self.tau_q

    def eps_values(self) -> np.ndarray:
        """Plateau values of the ramp parameter eps, from -1/2 to +1/2."""
        k = np.arange(-(self.steps // 2), self.steps // 2 + 1)
        return k / float(self.steps)

    def eps_tilde_values(self) -> np.ndarray:
        return self.eps_tilde_c - self.eps_values()

    def intervals(self) -> np.ndarray:
        out = np.full(self.n_plateaus, self.dt)
        out[0] *= 0.5
        out[-1] *= 0.5
        return out

    def plateaus(self):
        """Ordered (eps_tilde, evolution interval) pairs covering the ramp."""
        return list(zip(self.eps_tilde_values(), self.intervals()))

    def eps_tilde_at(self, t: float) -> float:
        """Point evaluation of the piecewise-flat control field."""
        k = _round_half_even(t / self.dt)
        k = max(-(self.steps // 2), min(self.steps // 2, k))
        return self.eps_tilde_c - k / float(self.steps)


def _round_half_even(x: float) -> int:
    lo = math.floor(x)
    frac = x - lo
    if frac > 0.5:
        return lo + 1
    if frac < 0.5:
        return lo
    return lo if lo % 2 == 0 else lo + 1


def schedule(tau_q: float, dt: float, eps_tilde_c: float = 0.0) -> QuenchSchedule:
    """Discretize a linear ramp of total duration ``tau_q`` with timestep ``dt``.

    The step count is snapped to the nearest even integer so the plateau grid
    is symmetric about the critical point; the effective ``dt`` of the
    returned schedule reflects the snap.
    """
    if not tau_q > 0:
        raise ScheduleError("tau_q must be positive")
    if not 0 < dt < tau_q:
        raise ScheduleError(f"need 0 < dt < tau_q, got dt={dt:g}, tau_q={tau_q:g}")
    steps = 2 * int(round(tau_q / (2.0 * dt)))
    steps = max(steps, 2)
    return QuenchSchedule(
        tau_q=float(tau_q), dt=tau_q / steps, eps_tilde_c=float(eps_tilde_c), steps=steps
    )


def default_dt(tau_q_max: float, target_ratio: float = 1e5, dt_min: float = 1e-5) -> float:
    """Timestep policy tying the step count to the slowest ramp of a sweep."""
    return max(tau_q_max / target_ratio, dt_min)
