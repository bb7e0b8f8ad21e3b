"""Single-site quartic-oscillator solver and truncated-basis machinery.

The per-site problem is ``H_loc = (pi^2 + omega0*eps_tilde*y^2 + 2*g*y^4)/2``
with conjugate variables obeying ``[y, pi] = i*hbar``.  Its lowest ``d``
eigenstates form the computational basis of the lattice simulation; this
module produces those eigenbases, the site operators expressed in them, and
the quasi-unitary overlap matrices that translate a state between the bases
of two nearby control-field values.

All eigenvectors are kept real with a deterministic sign gauge so that
overlap matrices between neighbouring control values stay close to the
identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, ConvergenceError, GaugeError, NumericalConsistencyError

#: tolerance under which two local energies count as degenerate when sorting
DEGENERACY_TOL = 1e-12

#: default local truncation (number of retained orbitals per site)
DEFAULT_D = 20


def default_n_rep(d: int) -> int:
    """Representation size used when none is requested explicitly."""
    return max(8 * d, 64)


@dataclass(frozen=True)
class LocalHamiltonianSpec:
    """Parameters of the single-site quartic-oscillator problem.

    ``n_rep`` is the size of the fixed harmonic-oscillator number basis (at
    reference frequency ``omega_ref``) in which the problem is represented;
    ``None`` defers the choice to ``default_n_rep`` at solve time.
    """

    hbar: float
    g: float
    omega0: float
    eps_tilde: float
    n_rep: int | None = None
    omega_ref: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "g", "omega0", "omega_ref"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be strictly positive")
        if self.n_rep is not None and self.n_rep < 8:
            raise ConfigurationError("n_rep must be at least 8")

    def with_eps(self, eps_tilde: float) -> "LocalHamiltonianSpec":
        return LocalHamiltonianSpec(
            self.hbar, self.g, self.omega0, float(eps_tilde), self.n_rep, self.omega_ref
        )


@dataclass(frozen=True)
class Representation:
    """Ladder-operator matrices of the fixed number basis."""

    y: np.ndarray
    pi: np.ndarray
    y2: np.ndarray
    y4: np.ndarray
    hbar: float
    omega_ref: float
    n: int


@lru_cache(maxsize=32)
def _ladder_matrices(hbar: float, omega_ref: float, n: int):
    # y = sqrt(hbar/2w)(a + a+), pi = i sqrt(hbar w/2)(a+ - a)
    rt = np.sqrt(np.arange(1.0, n))
    a = np.zeros((n, n))
    a[np.arange(n - 1), np.arange(1, n)] = rt
    y = np.sqrt(hbar / (2.0 * omega_ref)) * (a + a.T)
    k = np.sqrt(hbar * omega_ref / 2.0) * (a.T - a)  # pi = i*k with k real
    y2 = y @ y
    y4 = y2 @ y2
    pi2 = -(k @ k)
    for m in (y, k, y2, y4, pi2):
        m.flags.writeable = False
    return y, k, y2, y4, pi2


def build_representation(spec: LocalHamiltonianSpec, n: int | None = None) -> Representation:
    """Matrices of y, pi, y^2 and y^4 in the number basis of size ``n``.

    ``y2`` and ``y4`` are the squares computed inside the truncated
    representation, not truncations of the exact operators; this keeps every
    downstream overlap and matrix element internally consistent.
    """
    if n is None:
        n = spec.n_rep
    if n is None:
        raise ConfigurationError("representation size not set (spec.n_rep is None)")
    y, k, y2, y4, _ = _ladder_matrices(spec.hbar, spec.omega_ref, int(n))
    return Representation(y=y, pi=1j * k, y2=y2, y4=y4, hbar=spec.hbar,
                          omega_ref=spec.omega_ref, n=int(n))


def _local_hamiltonian_matrix(spec: LocalHamiltonianSpec, n: int) -> np.ndarray:
    _, _, y2, y4, pi2 = _ladder_matrices(spec.hbar, spec.omega_ref, n)
    return 0.5 * (pi2 + (spec.omega0 * spec.eps_tilde) * y2 + 2.0 * spec.g * y4)


@dataclass(frozen=True)
class LocalEigensystem:
    """The ``d`` lowest eigenpairs of the single-site problem.

    ``vectors`` holds one unit-norm real column per retained state, expressed
    in the fixed number basis; ``parities`` is +1 (even) or -1 (odd) per
    state.  Arrays are frozen; treat instances as immutable values.
    """

    eps_tilde: float
    energies: np.ndarray      # (d,)
    vectors: np.ndarray       # (n, d)
    parities: np.ndarray      # (d,) entries +-1
    residuals: np.ndarray     # (d,)
    spec: LocalHamiltonianSpec
    n: int

    @property
    def d(self) -> int:
        return self.energies.shape[0]

    def compatible_with(self, other: "LocalEigensystem") -> bool:
        s, o = self.spec, other.spec
        return (
            self.d == other.d
            and self.n == other.n
            and s.hbar == o.hbar
            and s.g == o.g
            and s.omega0 == o.omega0
            and s.omega_ref == o.omega_ref
        )


def _freeze(*arrays):
    for a in arrays:
        a.flags.writeable = False


def _gauge_fix_columns(vectors: np.ndarray) -> np.ndarray:
    """Sign gauge: largest-magnitude coefficient of each column positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _degeneracy_sort(energies, vectors, parities):
    """Order by energy; inside degenerate clusters put even parity first."""
    order = list(range(len(energies)))
    i = 0
    while i < len(order) - 1:
        j = i + 1
        while j < len(order) and energies[order[j]] - energies[order[i]] < DEGENERACY_TOL:
            j += 1
        if j - i > 1:
            order[i:j] = sorted(order[i:j], key=lambda q: (-parities[q], energies[q]))
        i = j
    order = np.asarray(order)
    return energies[order], vectors[:, order], parities[order]


def _solve_at(spec: LocalHamiltonianSpec, d: int, n: int):
    # H_loc couples only equal-parity number states, so diagonalize the two
    # sectors separately; embedded eigenvectors then carry exact zeros on the
    # opposite-parity support, making every parity selection rule exact.
    h = _local_hamiltonian_matrix(spec, n)
    energies_all = []
    vectors_all = []
    parities_all = []
    for par, idx in ((1.0, np.arange(0, n, 2)), (-1.0, np.arange(1, n, 2))):
        block = h[np.ix_(idx, idx)]
        evals, evecs = np.linalg.eigh(block)
        take = min(d, len(idx))
        embedded = np.zeros((n, take))
        embedded[idx, :] = evecs[:, :take]
        energies_all.append(evals[:take])
        vectors_all.append(embedded)
        parities_all.append(np.full(take, par))
    energies = np.concatenate(energies_all)
    vectors = np.hstack(vectors_all)
    parities = np.concatenate(parities_all)
    order = np.lexsort((-parities, energies))[:d]
    energies = energies[order].copy()
    vectors = np.ascontiguousarray(vectors[:, order])
    parities = parities[order].copy()
    energies, vectors, parities = _degeneracy_sort(energies, vectors, parities)
    vectors = _gauge_fix_columns(vectors)
    residuals = np.linalg.norm(h @ vectors - vectors * energies, axis=0)
    return energies, vectors, parities, residuals


def solve_local(
    spec: LocalHamiltonianSpec,
    d: int = DEFAULT_D,
    *,
    check_convergence: bool = True,
    convergence_tol: float = 1e-8,
    adapt: bool = True,
    max_doublings: int = 4,
) -> LocalEigensystem:
    """Solve for the ``d`` lowest eigenpairs of the single-site problem.

    With ``check_convergence`` the solve is repeated in a doubled
    representation and the retained energies must agree to
    ``convergence_tol``; when ``adapt`` is set the representation is doubled
    until the check passes (up to ``max_doublings``), otherwise a failure
    raises ``ConvergenceError`` immediately.  Inner loops that have already
    validated a representation size at sampled control values may disable
    the check.
    """
    if d < 2:
        raise ConfigurationError("local truncation d must be at least 2")
    n = spec.n_rep if spec.n_rep is not None else default_n_rep(d)
    # d == n is the completeness limit (basis changes exactly unitary);
    # anything between d and 4d is too small for converged truncation
    if n < 4 * d and n != d:
        raise ConfigurationError(f"representation size {n} too small for d={d} (need >= {4 * d})")

    energies, vectors, parities, residuals = _solve_at(spec, d, n)
    if check_convergence:
        attempts = max_doublings if adapt else 1
        for attempt in range(attempts):
            energies2, vectors2, parities2, residuals2 = _solve_at(spec, d, 2 * n)
            drift = np.max(np.abs(energies - energies2))
            if drift < convergence_tol:
                break
            if attempt == attempts - 1:
                raise ConvergenceError(
                    f"local spectrum not converged at n_rep={n}: doubling moved "
                    f"energies by {drift:.3e} (eps_tilde={spec.eps_tilde:g}); raise n_rep"
                )
            n *= 2
            energies, vectors, parities, residuals = energies2, vectors2, parities2, residuals2
    _freeze(energies, vectors, parities, residuals)
    return LocalEigensystem(
        eps_tilde=spec.eps_tilde,
        energies=energies,
        vectors=vectors,
        parities=parities,
        residuals=residuals,
        spec=spec,
        n=n,
    )


def align_eigensystem(reference: LocalEigensystem, eig: LocalEigensystem) -> LocalEigensystem:
    """Flip eigenvector signs of ``eig`` so overlaps with ``reference`` are >= 0.

    Keeps the gauge continuous along a monotone sequence of control values;
    the base largest-coefficient gauge alone can flip when two coefficients
    trade places in magnitude.
    """
    if not reference.compatible_with(eig):
        raise ConfigurationError("eigensystems are not from the same representation")
    diag = np.einsum("nq,nq->q", reference.vectors, eig.vectors)
    signs = np.where(diag < 0, -1.0, 1.0)
    if np.all(signs == 1.0):
        return eig
    vectors = eig.vectors * signs
    _freeze(vectors)
    return LocalEigensystem(
        eps_tilde=eig.eps_tilde,
        energies=eig.energies,
        vectors=vectors,
        parities=eig.parities,
        residuals=eig.residuals,
        spec=eig.spec,
        n=eig.n,
    )


@dataclass(frozen=True)
class SiteOperators:
    """Site operators in the truncated eigenbasis.

    ``q_diag`` are the local energies, ``y_mat`` the position operator and
    ``w_mat`` the squared-position operator.  Parity makes ``y_mat`` purely
    parity-odd and ``w_mat`` parity-even.
    """

    q_diag: np.ndarray   # (d,)
    y_mat: np.ndarray    # (d, d)
    w_mat: np.ndarray    # (d, d)
    parities: np.ndarray
    eps_tilde: float

    @property
    def d(self) -> int:
        return self.q_diag.shape[0]


def site_operators(eig: LocalEigensystem) -> SiteOperators:
    """Project y and y^2 onto the retained eigenstates."""
    rep = build_representation(eig.spec, eig.n)
    v = eig.vectors
    y_mat = v.T @ rep.y @ v
    w_mat = v.T @ rep.y2 @ v
    y_mat = 0.5 * (y_mat + y_mat.T)
    w_mat = 0.5 * (w_mat + w_mat.T)
    q_diag = eig.energies.copy()
    _freeze(q_diag, y_mat, w_mat)
    return SiteOperators(
        q_diag=q_diag, y_mat=y_mat, w_mat=w_mat,
        parities=eig.parities, eps_tilde=eig.eps_tilde,
    )


@dataclass(frozen=True)
class BasisChangeMatrix:
    """Overlap block between the eigenbases at two control values.

    A d x d block of an overlap between two orthonormal families: every
    singular value is <= 1, so applying it can only lose norm (quasi-unitary
    contraction).  ``norm_bound`` is the largest singular value.
    """

    u: np.ndarray
    eps_in: float
    eps_out: float
    norm_bound: float

    @property
    def d(self) -> int:
        return self.u.shape[0]

    @property
    def min_singular_value(self) -> float:
        return float(np.linalg.svd(self.u, compute_uv=False)[-1])


#: slack allowed above 1 for the contraction bound (pure roundoff)
CONTRACTION_SLACK = 1e-10


def basis_change_matrix(eig_in: LocalEigensystem, eig_out: LocalEigensystem) -> BasisChangeMatrix:
    """Overlap matrix u[q, q'] = <psi_q(out)|psi_q'(in)>.

    Applying ``u`` to per-site coefficient vectors re-expresses a state in
    the eigenbasis of ``eig_out``.  Inputs must share the representation and
    the sign gauge (align with ``align_eigensystem`` first when in doubt).
    """
    if not eig_in.compatible_with(eig_out):
        raise ConfigurationError("eigensystems are not from the same representation")
    u = eig_out.vectors.T @ eig_in.vectors
    norm_bound = float(np.linalg.norm(u, 2))
    if norm_bound > 1.0 + CONTRACTION_SLACK:
        raise NumericalConsistencyError(
            f"basis-change block has singular value {norm_bound - 1.0:.3e} above 1"
        )
    norm_bound = min(norm_bound, 1.0)  # exact bound; excess is pure roundoff
    diag = np.diag(u)
    if np.any(diag < 0):
        worst = int(np.argmin(diag))
        raise GaugeError(
            f"negative diagonal overlap {diag[worst]:.3e} at orbital {worst}; "
            "eigensystems are not gauge-aligned"
        )
    u = u.copy()
    _freeze(u)
    return BasisChangeMatrix(
        u=u, eps_in=eig_in.eps_tilde, eps_out=eig_out.eps_tilde, norm_bound=norm_bound
    )


def chain_n_rep(
    base: LocalHamiltonianSpec,
    d: int,
    eps_values,
    *,
    convergence_tol: float = 1e-8,
) -> int:
    """Representation size adequate for every control value of a ramp.

    Probes the two extremes and the midpoint with the adaptive doubling
    check and returns the largest size needed.  Overlap matrices between
    chain members are exact only when all members share one representation,
    so the size must be fixed up front.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    probes = {0, len(eps_values) // 2, len(eps_values) - 1}
    n = base.n_rep if base.n_rep is not None else default_n_rep(d)
    for i in sorted(probes):
        eig = solve_local(base.with_eps(eps_values[i]), d,
                          check_convergence=True, convergence_tol=convergence_tol)
        n = max(n, eig.n)
    return n


def solve_chain(
    base: LocalHamiltonianSpec,
    d: int,
    eps_values,
    *,
    n_rep: int | None = None,
    check_at: tuple[int, ...] | None = None,
    convergence_tol: float = 1e-8,
):
    """Yield gauge-aligned eigensystems along a sequence of control values.

    The chain is anchored at the first element: each eigensystem is aligned
    to its predecessor.  All members share one representation size (found by
    ``chain_n_rep`` unless given); convergence is re-verified only at the
    sampled indices in ``check_at`` (default: first, middle, last), which
    keeps long ramps affordable.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    n_vals = len(eps_values)
    if n_vals == 0:
        return
    if n_rep is None:
        n_rep = chain_n_rep(base, d, eps_values, convergence_tol=convergence_tol)
    fixed = LocalHamiltonianSpec(
        base.hbar, base.g, base.omega0, base.eps_tilde, n_rep, base.omega_ref
    )
    if check_at is None:
        check_at = (0, n_vals // 2, n_vals - 1)
    check_set = {i % n_vals for i in check_at}
    prev = None
    for i, eps in enumerate(eps_values):
        eig = solve_local(
            fixed.with_eps(eps), d,
            check_convergence=(i in check_set),
            convergence_tol=convergence_tol,
            adapt=False,
        )
        if prev is not None:
            eig = align_eigensystem(prev, eig)
        prev = eig
        yield eig
