"""Measured quantities: correlator profiles, correlation length, excess energy.

Correlators are bulk-averaged displacement correlators <Y_j Y_{j+l}> with a
quarter of the chain discarded at each edge and both endpoints required to
sit inside the retained window.  The correlation length is the square root
of the (|l|-1)^2-weighted normalized sum over the symmetrized profile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError, ConfigurationError, NumericalConsistencyError
from .local_solver import SiteOperators
from .model import LatticeHamiltonian, LatticeSpec
from .mps import MatrixProductState

#: correlator magnitudes below this floor count as zero for sign policy
NEGATIVE_NOISE_FLOOR = 1e-12


def bulk_window(length: int) -> tuple[int, int]:
    """Half-open site range retained after discarding L/4 sites per edge."""
    cut = length // 4
    return cut, length - cut


def _check_tags(psi: MatrixProductState, ops: SiteOperators):
    if psi.eps_tag is not None and abs(ops.eps_tilde - psi.eps_tag) > 1e-10:
        raise AssemblyError(
            f"state basis tag eps_tilde={psi.eps_tag:g} does not match "
            f"operators at {ops.eps_tilde:g}"
        )


@dataclass(frozen=True)
class CorrelatorProfile:
    """Bulk-averaged symmetric correlator C_l for l = 1..l_max.

    ``values[l-1]`` is the average over all bulk pairs at distance l and
    ``spread[l-1]`` the corresponding site-to-site standard deviation;
    ``c(l)`` exposes the symmetrized map with C_{-l} = C_l.
    """

    values: np.ndarray
    spread: np.ndarray
    bulk_lo: int
    bulk_hi: int
    eps_tag: float | None = None

    @property
    def l_max(self) -> int:
        return len(self.values)

    def c(self, l: int) -> float:
        if l == 0 or abs(l) > self.l_max:
            raise ConfigurationError(f"distance {l} outside profile range")
        return float(self.values[abs(l) - 1])

    @property
    def has_negative_weights(self) -> bool:
        floor = NEGATIVE_NOISE_FLOOR * max(1.0, np.abs(self.values).max())
        return bool(np.any(self.values < -floor))


def correlator_profile(psi: MatrixProductState, ops: SiteOperators,
                       lattice: LatticeSpec) -> CorrelatorProfile:
    """Bulk average of <Y_j Y_{j+l}> with both sites inside the window."""
    _check_tags(psi, ops)
    length = lattice.length
    if psi.length != length:
        raise ConfigurationError("state length does not match lattice")
    if length < 8:
        raise ConfigurationError(f"bulk window empty for L={length}; need L >= 8")
    lo, hi = bulk_window(length)
    pair = psi.two_point_matrix(ops.y_mat, range(lo, hi))
    l_max = hi - lo - 1
    values = np.empty(l_max)
    spread = np.empty(l_max)
    for l in range(1, l_max + 1):
        samples = np.array([pair[j, j + l] for j in range(lo, hi - l)])
        values[l - 1] = samples.mean()
        spread[l - 1] = samples.std()
    return CorrelatorProfile(values=values, spread=spread, bulk_lo=lo, bulk_hi=hi,
                             eps_tag=psi.eps_tag)


def correlation_length(profile: CorrelatorProfile) -> float:
    """Second-moment length of the symmetrized profile.

    Uses the raw correlators; if any entry is negative beyond the noise
    floor (possible on truncated runs) the magnitudes are used instead so
    the radicand stays meaningful -- callers can flag such records via
    ``profile.has_negative_weights``.
    """
    c = profile.values
    if profile.has_negative_weights:
        c = np.abs(c)
    l = np.arange(1, profile.l_max + 1, dtype=float)
    denom = 2.0 * c.sum()
    if not abs(denom) > 0:
        raise NumericalConsistencyError("degenerate correlator profile: zero weight sum")
    num = 2.0 * ((l - 1.0) ** 2 * c).sum()
    ratio = num / denom
    if ratio < 0:
        raise NumericalConsistencyError("negative second moment in correlation length")
    return float(np.sqrt(ratio))


def energy_expectation(psi: MatrixProductState, h: LatticeHamiltonian) -> float:
    """<psi|H|psi> summed over site and bond terms (one sweep)."""
    total = 0.0
    for j, term in enumerate(h.site_terms):
        total += psi.expect_one(term, j).real
    y = h.ops.y_mat
    for b in range(h.length - 1):
        total -= psi.expect_two(y, b, y, b + 1).real
    return float(total)


def excitation_energy(psi_final: MatrixProductState, h_final: LatticeHamiltonian,
                      e_ground: float, *, tol: float = 1e-9) -> float:
    """Excess energy over the final ground state, <H>_f - E_G.

    A value below ``-10*tol`` flags an inconsistent reference energy.
    """
    _check_tags(psi_final, h_final.ops)
    e_exc = energy_expectation(psi_final, h_final) - e_ground
    if e_exc < -10.0 * tol:
        raise NumericalConsistencyError(
            f"negative excitation energy {e_exc:.3e}: ground reference inconsistent")
    return float(e_exc)


def deviation_map(psi_final: MatrixProductState, ground_final: MatrixProductState,
                  ops: SiteOperators, lattice: LatticeSpec) -> np.ndarray:
    """Per-bond |<Y_j Y_{j+1}>_f - <Y_j Y_{j+1}>_G| across the whole chain."""
    _check_tags(psi_final, ops)
    _check_tags(ground_final, ops)
    length = lattice.length
    out = np.empty(length - 1)
    for j in range(length - 1):
        cf = psi_final.expect_two(ops.y_mat, j, ops.y_mat, j + 1).real
        cg = ground_final.expect_two(ops.y_mat, j, ops.y_mat, j + 1).real
        out[j] = abs(cf - cg)
    return out


def global_parity(psi: MatrixProductState, ops: SiteOperators) -> float:
    """Expectation of the product of single-site parity operators."""
    p = np.diag(ops.parities)
    return float(psi.expect_site_product([p] * psi.length).real)
