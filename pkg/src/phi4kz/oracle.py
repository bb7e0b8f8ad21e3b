"""Brute-force reference implementations for validation.

Everything here is deliberately independent of the production code paths:
the lattice tools work on the full ``d**L`` product space, and the
single-site reference solver discretizes the oscillator on a real-space
grid instead of the ladder-operator basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import ConfigurationError, NumericalConsistencyError
from .local_solver import LocalHamiltonianSpec, SiteOperators
from .model import LatticeHamiltonian

#: largest allowed product-space dimension d**L
DIM_CAP = 2 ** 20

#: above this dimension Hamiltonians are built sparse instead of dense
DENSE_CAP = 4096


@dataclass
class DenseState:
    """State vector on the full product space, site-major ordering.

    Index convention: site 0 is the slowest index, i.e.
    ``index = sum_j q_j * d**(L-1-j)``.
    """

    vector: np.ndarray
    length: int
    d: int

    def __post_init__(self):
        if self.d ** self.length > DIM_CAP:
            raise ConfigurationError(f"product dimension d^L exceeds cap {DIM_CAP}")
        if self.vector.shape != (self.d ** self.length,):
            raise ConfigurationError("vector length does not match d^L")

    def normalized(self) -> "DenseState":
        return DenseState(self.vector / np.linalg.norm(self.vector), self.length, self.d)


def _check_cap(d: int, length: int):
    if d ** length > DIM_CAP:
        raise ConfigurationError(
            f"product dimension {d}^{length} exceeds oracle cap {DIM_CAP}"
        )


def dense_hamiltonian(h: LatticeHamiltonian):
    """Full-space matrix of the assembled chain Hamiltonian.

    Returns a dense array for small problems and a sparse CSR matrix above
    ``DENSE_CAP``; both support ``@`` on state vectors.
    """
    d, length = h.d, h.length
    _check_cap(d, length)
    dim = d ** length
    sparse = dim > DENSE_CAP
    kron = scipy.sparse.kron if sparse else np.kron

    def embed(mat, first_site, n_sites):
        left = first_site
        right = length - first_site - n_sites
        out = mat if not sparse else scipy.sparse.csr_matrix(mat)
        if left:
            out = kron(np.eye(d ** left) if not sparse else scipy.sparse.identity(d ** left), out)
        if right:
            out = kron(out, np.eye(d ** right) if not sparse else scipy.sparse.identity(d ** right))
        return out

    total = None
    for j, term in enumerate(h.site_terms):
        piece = embed(term, j, 1)
        total = piece if total is None else total + piece
    for b, term in enumerate(h.bond_terms):
        total = total + embed(term, b, 2)
    if sparse:
        total = scipy.sparse.csr_matrix(total)
        herm_dev = abs(total - total.conj().T).max()
    else:
        herm_dev = np.abs(total - total.conj().T).max()
    if herm_dev > 1e-12:
        raise NumericalConsistencyError(f"assembled dense Hamiltonian not Hermitian ({herm_dev:.2e})")
    return total


def dense_ground(h: LatticeHamiltonian):
    """Lowest eigenpair of the full-space Hamiltonian."""
    mat = dense_hamiltonian(h)
    if scipy.sparse.issparse(mat):
        vals, vecs = scipy.sparse.linalg.eigsh(mat, k=1, which="SA", tol=1e-12, maxiter=20000)
        energy, vec = float(vals[0]), vecs[:, 0]
    else:
        vals, vecs = np.linalg.eigh(mat)
        energy, vec = float(vals[0]), vecs[:, 0]
    state = DenseState(vec.astype(np.complex128), h.length, h.d).normalized()
    return energy, state


def dense_spectrum(h: LatticeHamiltonian, k: int = 2):
    """Lowest ``k`` eigenvalues (dense problems only)."""
    mat = dense_hamiltonian(h)
    if scipy.sparse.issparse(mat):
        vals = scipy.sparse.linalg.eigsh(mat, k=k, which="SA", tol=1e-12,
                                         maxiter=20000, return_eigenvectors=False)
        return np.sort(vals)
    return np.linalg.eigvalsh(mat)[:k]


def dense_evolve(state: DenseState, h: LatticeHamiltonian, t_total: float,
                 method: str = "exact") -> DenseState:
    """Propagate a full-space state: ``exp(-i H t / hbar) psi``.

    ``exact`` uses an eigendecomposition (dense problems); ``stepping``
    uses scipy's Krylov ``expm_multiply`` and also works on sparse input.
    """
    hbar = h.lattice.model.hbar
    mat = dense_hamiltonian(h)
    if method == "exact":
        if scipy.sparse.issparse(mat):
            raise ConfigurationError("exact dense evolution needs a dense matrix; use method='stepping'")
        vals, vecs = np.linalg.eigh(mat)
        phases = np.exp(-1j * vals * t_total / hbar)
        out = vecs @ (phases * (vecs.conj().T @ state.vector))
    elif method == "stepping":
        op = mat * (-1j * t_total / hbar)
        out = scipy.sparse.linalg.expm_multiply(op, state.vector)
    else:
        raise ConfigurationError(f"unknown evolution method {method!r}")
    return DenseState(out, state.length, state.d)


def dense_expectation(state: DenseState, h: LatticeHamiltonian) -> float:
    mat = dense_hamiltonian(h)
    return float(np.real(np.vdot(state.vector, mat @ state.vector)))


def dense_correlator(state: DenseState, ops: SiteOperators, j: int, l: int) -> float:
    """<Y_j Y_{j+l}> by direct contraction of the full-space vector."""
    length, d = state.length, state.d
    k = j + l
    if not (0 <= j < length and 0 <= k < length):
        raise ConfigurationError("correlator sites out of range")
    psi = state.vector.reshape((d,) * length)
    if l == 0:
        op = ops.y_mat @ ops.y_mat
        out = np.tensordot(op, psi, axes=([1], [j]))
        out = np.moveaxis(out, 0, j)
    else:
        out = np.tensordot(ops.y_mat, psi, axes=([1], [j]))
        out = np.moveaxis(out, 0, j)
        out = np.tensordot(ops.y_mat, out, axes=([1], [k]))
        out = np.moveaxis(out, 0, k)
    val = np.vdot(psi, out)
    return float(np.real(val))


def grid_local_solver(
    spec: LocalHamiltonianSpec,
    d: int,
    box: float | None = None,
    points: int = 6000,
    *,
    richardson: bool = True,
) -> np.ndarray:
    """Reference single-site spectrum from a real-space finite-difference grid.

    Second-order central differences on ``[-box, box]`` with Dirichlet walls,
    optionally Richardson-extrapolated against a half-resolution grid for an
    effectively fourth-order estimate.  The box is grown automatically until
    the boundary density of every retained state drops below 1e-12.
    """
    energies, _, _ = grid_local_eigensystem(spec, d, box, points, richardson=richardson)
    return energies


def grid_local_eigensystem(
    spec: LocalHamiltonianSpec,
    d: int,
    box: float | None = None,
    points: int = 6000,
    *,
    richardson: bool = True,
):
    """Like ``grid_local_solver`` but also returns grid eigenvectors and nodes."""
    auto_box = box is None
    if box is None:
        box = _suggest_box(spec, d)
    for _ in range(8):
        energies, vectors, grid = _fd_solve(spec, d, box, points)
        boundary = np.abs(vectors[[0, -1], :]).max() ** 2
        if boundary < 1e-12:
            break
        if not auto_box:
            raise ConfigurationError(
                f"grid box {box:g} too small: boundary density {boundary:.2e}"
            )
        box *= 1.5
    else:
        raise ConfigurationError("failed to find a large enough grid box")
    if richardson:
        coarse, _, _ = _fd_solve(spec, d, box, points // 2)
        energies = (4.0 * energies - coarse) / 3.0
    return energies, vectors, grid


def _suggest_box(spec: LocalHamiltonianSpec, d: int) -> float:
    # classical turning point of a generous top-energy estimate for the
    # combined potential c*y^2/2 + g*y^4 (valid in both the harmonic- and
    # quartic-dominated limits; the boundary check grows the box if short)
    c = spec.omega0 * spec.eps_tilde
    g = spec.g
    e_top = spec.hbar * (d + 3) * (np.sqrt(abs(c)) + 1.0)
    e_top += spec.hbar ** (4.0 / 3.0) * (2.0 * g) ** (1.0 / 3.0) * (d + 3) ** (4.0 / 3.0)
    if c < 0:
        e_top += c * c / (16.0 * g)  # clear the double-well barrier
    y2_turn = (-0.5 * c + np.sqrt(0.25 * c * c + 4.0 * g * e_top)) / (2.0 * g)
    return float(1.6 * np.sqrt(y2_turn))


def _fd_solve(spec: LocalHamiltonianSpec, d: int, box: float, points: int):
    grid = np.linspace(-box, box, points)
    dx = grid[1] - grid[0]
    v = 0.5 * (spec.omega0 * spec.eps_tilde) * grid ** 2 + spec.g * grid ** 4
    kin = spec.hbar ** 2 / (2.0 * dx ** 2)
    diag = 2.0 * kin + v
    off = np.full(points - 1, -kin)
    energies, vectors = scipy.linalg.eigh_tridiagonal(
        diag, off, select="i", select_range=(0, d - 1)
    )
    vectors = vectors / np.sqrt(dx)  # continuum normalization
    return energies, vectors, grid


def grid_expectation_y2(spec: LocalHamiltonianSpec, d: int, q: int,
                        box: float | None = None, points: int = 12000) -> float:
    """<y^2> of grid eigenstate ``q``; reference for the squared-position operator."""
    _, vectors, grid = grid_local_eigensystem(spec, d, box, points, richardson=False)
    dx = grid[1] - grid[0]
    psi = vectors[:, q]
    return float(np.sum(psi ** 2 * grid ** 2) * dx)
