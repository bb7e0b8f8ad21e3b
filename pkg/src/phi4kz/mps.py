"""Finite matrix-product states with canonical forms and loss ledgers.

States are kept unit-normalized: every operation that would change the norm
(singular-value truncation, quasi-unitary contractions) renormalizes and
records what it removed.  ``norm_ledger`` accumulates the multiplicative
amplitude factor over all such renormalizations, so replaying the same
operations without renormalizing would end at ``norm_ledger`` times the
initial norm.  ``discarded_weight_ledger`` separately accumulates the
relative singular-value weight dropped by truncations.

Tensor convention: one rank-3 complex array per site with legs
``(left bond, physical, right bond)``; boundary bonds have dimension 1.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import kernels
from .errors import ConfigurationError, NumericalConsistencyError

CHECKPOINT_MAGIC = b"P4KZMPS1"


@dataclass(frozen=True)
class TruncationPolicy:
    """Bond-dimension cap and per-truncation discarded-weight threshold."""

    m_max: int = 50
    weight_tol: float = 1e-10

    def __post_init__(self):
        if self.m_max < 2:
            raise ConfigurationError("m_max must be at least 2")
        if not 0 < self.weight_tol <= 1e-4:
            raise ConfigurationError("weight_tol must lie in (0, 1e-4]")


class MatrixProductState:
    """Chain of rank-3 tensors with an orthogonality centre and loss ledgers."""

    def __init__(self, tensors, trunc: TruncationPolicy | None = None,
                 ortho_center: int | None = None, eps_tag: float | None = None):
        if any(t.ndim != 3 for t in tensors):
            raise ConfigurationError("MPS tensors must have three legs")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise ConfigurationError("boundary bonds must have dimension 1")
        self.tensors = [np.ascontiguousarray(t, dtype=np.complex128) for t in tensors]
        self.trunc = trunc if trunc is not None else TruncationPolicy()
        self.ortho_center = ortho_center
        self.norm_ledger = 1.0
        self.discarded_weight_ledger = 0.0
        self.eps_tag = eps_tag

    # -- constructors -----------------------------------------------------

    @classmethod
    def product_state(cls, length: int, d: int, local_index=0,
                      trunc: TruncationPolicy | None = None) -> "MatrixProductState":
        """Bond-dimension-1 basis product state |q_0 q_1 ... >."""
        if np.isscalar(local_index):
            local_index = [int(local_index)] * length
        if len(local_index) != length:
            raise ConfigurationError("need one local index per site")
        tensors = []
        for q in local_index:
            if not 0 <= q < d:
                raise ConfigurationError(f"local index {q} out of range for d={d}")
            t = np.zeros((1, d, 1), dtype=np.complex128)
            t[0, q, 0] = 1.0
            tensors.append(t)
        psi = cls(tensors, trunc=trunc, ortho_center=0)
        return psi

    @classmethod
    def product_with_noise(cls, length: int, d: int, chi: int, seed: int,
                           local_index: int = 0, amplitude: float = 1e-2,
                           trunc: TruncationPolicy | None = None) -> "MatrixProductState":
        """Basis product state dressed with seeded noise on ``chi``-wide bonds.

        A good variational starting point: dominated by the chosen local
        orbital but with enough randomness to open every bond and break
        symmetries the optimizer must be able to leave.
        """
        rng = np.random.default_rng(seed)
        tensors = []
        left = 1
        for j in range(length):
            right = min(chi, d ** (j + 1), d ** (length - j - 1))
            t = amplitude * (rng.standard_normal((left, d, right))
                             + 1j * rng.standard_normal((left, d, right)))
            t[0, local_index, 0] += 1.0
            tensors.append(t)
            left = right
        psi = cls(tensors, trunc=trunc)
        psi.canonicalize(0)
        psi.normalize(record=False)
        return psi

    @classmethod
    def random(cls, length: int, d: int, chi: int, seed: int,
               trunc: TruncationPolicy | None = None) -> "MatrixProductState":
        """Seeded random state, canonicalized and normalized."""
        rng = np.random.default_rng(seed)
        tensors = []
        left = 1
        for j in range(length):
            right = min(chi, d ** (j + 1), d ** (length - j - 1))
            t = rng.standard_normal((left, d, right)) + 1j * rng.standard_normal((left, d, right))
            tensors.append(t)
            left = right
        psi = cls(tensors, trunc=trunc)
        psi.canonicalize(0)
        psi.normalize(record=False)
        return psi

    # -- basic properties --------------------------------------------------

    @property
    def length(self) -> int:
        return len(self.tensors)

    @property
    def d(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dimensions(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> "MatrixProductState":
        other = MatrixProductState([t.copy() for t in self.tensors], trunc=self.trunc,
                                   ortho_center=self.ortho_center, eps_tag=self.eps_tag)
        other.norm_ledger = self.norm_ledger
        other.discarded_weight_ledger = self.discarded_weight_ledger
        return other

    # -- canonical form ----------------------------------------------------

    def _push_right(self, i: int):
        """Left-orthogonalize site i, absorbing the remainder into i+1."""
        a = self.tensors[i]
        chi_l, d, chi_r = a.shape
        q, r = np.linalg.qr(a.reshape(chi_l * d, chi_r))
        self.tensors[i] = np.ascontiguousarray(q.reshape(chi_l, d, q.shape[1]))
        self.tensors[i + 1] = np.tensordot(r, self.tensors[i + 1], axes=([1], [0]))

    def _push_left(self, i: int):
        """Right-orthogonalize site i, absorbing the remainder into i-1."""
        a = self.tensors[i]
        chi_l, d, chi_r = a.shape
        q, r = np.linalg.qr(a.reshape(chi_l, d * chi_r).conj().T)
        k = q.shape[1]
        self.tensors[i] = np.ascontiguousarray(q.conj().T.reshape(k, d, chi_r))
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], r.conj().T, axes=([2], [0]))

    def canonicalize(self, center: int):
        """Bring the state to mixed-canonical form with the centre at ``center``."""
        if not 0 <= center < self.length:
            raise ConfigurationError("orthogonality centre out of range")
        if self.ortho_center is None:
            for i in range(center):
                self._push_right(i)
            for i in range(self.length - 1, center, -1):
                self._push_left(i)
            self.ortho_center = center
        else:
            self.move_center(center)
        return self

    def move_center(self, target: int):
        if self.ortho_center is None:
            return self.canonicalize(target)
        while self.ortho_center < target:
            self._push_right(self.ortho_center)
            self.ortho_center += 1
        while self.ortho_center > target:
            self._push_left(self.ortho_center)
            self.ortho_center -= 1
        return self

    def norm(self) -> float:
        """Euclidean norm of the encoded state."""
        if self.ortho_center is not None:
            return float(np.linalg.norm(self.tensors[self.ortho_center]))
        t = np.ones((1, 1), dtype=np.complex128)
        for a in self.tensors:
            t = np.tensordot(t, a, axes=([1], [0]))
            t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 1]))
        return float(np.sqrt(abs(t[0, 0])))

    def normalize(self, record: bool = True):
        """Rescale to unit norm; by default the factor is recorded in the ledger."""
        n = self.norm()
        if not n > 0:
            raise NumericalConsistencyError("cannot normalize a zero state")
        c = self.ortho_center if self.ortho_center is not None else 0
        self.tensors[c] = self.tensors[c] / n
        if record:
            self.norm_ledger *= n
        return self

    def check_canonical(self, tol: float = 1e-10) -> float:
        """Largest isometry violation left/right of the centre."""
        if self.ortho_center is None:
            raise ConfigurationError("state has no orthogonality centre")
        worst = 0.0
        for i, a in enumerate(self.tensors):
            chi_l, d, chi_r = a.shape
            if i < self.ortho_center:
                m = a.reshape(chi_l * d, chi_r)
                dev = np.abs(m.conj().T @ m - np.eye(chi_r)).max()
            elif i > self.ortho_center:
                m = a.reshape(chi_l, d * chi_r)
                dev = np.abs(m @ m.conj().T - np.eye(chi_l)).max()
            else:
                continue
            worst = max(worst, float(dev))
        if worst > tol:
            raise NumericalConsistencyError(f"canonical form violated by {worst:.3e}")
        return worst

    # -- gates ---------------------------------------------------------------

    def apply_two_site_gate(self, gate: np.ndarray, bond: int, fold_left: bool = False):
        """Apply a d^2 x d^2 gate on sites (bond, bond+1) with SVD truncation.

        The discarded relative weight goes to ``discarded_weight_ledger`` and
        the kept amplitude fraction multiplies ``norm_ledger``; the state is
        renormalized.  The centre ends on the left site when ``fold_left``.
        """
        if not 0 <= bond < self.length - 1:
            raise ConfigurationError("bond index out of range")
        d = self.d
        if gate.shape != (d * d, d * d):
            raise ConfigurationError(f"gate must be {d * d} x {d * d}")
        if self.ortho_center is None or not bond <= self.ortho_center <= bond + 1:
            self.canonicalize(bond)
        a1n, a2n, factor, discarded = kernels.apply_bond_gate(
            self.tensors[bond], self.tensors[bond + 1], gate,
            self.trunc.m_max, self.trunc.weight_tol, fold_left,
        )
        self.tensors[bond] = a1n
        self.tensors[bond + 1] = a2n
        self.ortho_center = bond if fold_left else bond + 1
        self.norm_ledger *= factor
        self.discarded_weight_ledger += discarded
        return self

    def apply_single_site(self, mat: np.ndarray, site: int):
        """Contract a d x d matrix into one physical leg.

        No truncation is needed; a non-unitary matrix shrinks the norm and
        the removed amplitude is recorded.
        """
        d = self.d
        if mat.shape != (d, d):
            raise ConfigurationError(f"matrix must be {d} x {d}")
        self.canonicalize(site) if self.ortho_center is None else self.move_center(site)
        a = self.tensors[site]
        pre = np.linalg.norm(a)
        a = np.einsum("ij,ajb->aib", mat, a)
        post = np.linalg.norm(a)
        if not post > 0:
            raise NumericalConsistencyError("single-site operator annihilated the state")
        self.tensors[site] = np.ascontiguousarray(a / post)
        self.norm_ledger *= float(post / pre)
        return self

    def apply_site_uniform(self, mat: np.ndarray):
        """Contract the same d x d matrix into every site in one sweep.

        Exactly one renormalization is recorded, so the ledger entry equals
        the amplitude kept by the full product operator.
        """
        d = self.d
        if mat.shape != (d, d):
            raise ConfigurationError(f"matrix must be {d} x {d}")
        if self.ortho_center is None:
            self.canonicalize(0)
        else:
            self.move_center(0)
        pre = np.linalg.norm(self.tensors[0])
        for i in range(self.length):
            self.tensors[i] = np.ascontiguousarray(
                np.einsum("ij,ajb->aib", mat, self.tensors[i]))
            if i < self.length - 1:
                self._push_right(i)
        self.ortho_center = self.length - 1
        post = np.linalg.norm(self.tensors[-1])
        if not post > 0:
            raise NumericalConsistencyError("product operator annihilated the state")
        self.tensors[-1] = self.tensors[-1] / post
        self.norm_ledger *= float(post / pre)
        return self

    # -- expectation values ----------------------------------------------------

    def expect_one(self, mat: np.ndarray, site: int) -> complex:
        """<psi| M_site |psi> by exact contraction."""
        self.move_center(site) if self.ortho_center is not None else self.canonicalize(site)
        a = self.tensors[site]
        return complex(np.einsum("aib,ij,ajb->", a.conj(), mat, a))

    def expect_two(self, mat_a: np.ndarray, site_a: int, mat_b: np.ndarray, site_b: int) -> complex:
        """<psi| M_a M_b |psi> for operators on two (possibly equal) sites."""
        if site_a == site_b:
            return self.expect_one(mat_a @ mat_b, site_a)
        if site_a > site_b:
            site_a, site_b, mat_a, mat_b = site_b, site_a, mat_b, mat_a
        self.move_center(site_a) if self.ortho_center is not None else self.canonicalize(site_a)
        a = self.tensors[site_a]
        t = np.einsum("aib,ij,ajc->bc", a.conj(), mat_a, a)
        for k in range(site_a + 1, site_b):
            ak = self.tensors[k]
            t = np.einsum("bc,bid,cie->de", t, ak.conj(), ak)
        ab = self.tensors[site_b]
        return complex(np.einsum("bc,bid,ij,cjd->", t, ab.conj(), mat_b, ab))

    def two_point_matrix(self, mat: np.ndarray, sites) -> np.ndarray:
        """All pair correlators <M_j M_k> for j < k in ``sites`` (one sweep per j)."""
        sites = sorted(sites)
        out = np.full((self.length, self.length), np.nan)
        for idx, j in enumerate(sites):
            targets = [k for k in sites if k > j]
            if not targets:
                continue
            self.move_center(j) if self.ortho_center is not None else self.canonicalize(j)
            a = self.tensors[j]
            t = np.einsum("aib,ij,ajc->bc", a.conj(), mat, a)
            for k in range(j + 1, max(targets) + 1):
                ak = self.tensors[k]
                if k in targets:
                    out[j, k] = np.real(
                        np.einsum("bc,bid,ij,cjd->", t, ak.conj(), mat, ak))
                t = np.einsum("bc,bid,cie->de", t, ak.conj(), ak)
        return out

    def overlap(self, other: "MatrixProductState") -> complex:
        """<self|other>."""
        if other.length != self.length or other.d != self.d:
            raise ConfigurationError("overlap requires matching length and local dimension")
        t = np.ones((1, 1), dtype=np.complex128)
        for a, b in zip(self.tensors, other.tensors):
            t = np.tensordot(t, b, axes=([1], [0]))
            t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 1]))
        return complex(t[0, 0])

    def expect_site_product(self, mats) -> complex:
        """Expectation of a product operator with one d x d factor per site."""
        t = np.ones((1, 1), dtype=np.complex128)
        for a, m in zip(self.tensors, mats):
            am = np.einsum("ij,ajb->aib", m, a)
            t = np.tensordot(t, am, axes=([1], [0]))
            t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 1]))
        return complex(t[0, 0])

    def to_statevector(self) -> np.ndarray:
        """Dense state vector (site 0 slowest index); tiny systems only."""
        dim = self.d ** self.length
        if dim > 2 ** 20:
            raise ConfigurationError("state too large to densify")
        v = np.ones((1, 1), dtype=np.complex128)
        for a in self.tensors:
            v = np.tensordot(v, a, axes=([v.ndim - 1], [0]))
        return np.ascontiguousarray(v.reshape(dim))


# -- checkpoint format ---------------------------------------------------------


def save_checkpoint(psi: MatrixProductState, path, extra: dict | None = None):
    """Versioned binary snapshot; round-trips bit-exactly."""
    header = {
        "version": 1,
        "length": psi.length,
        "d": psi.d,
        "shapes": [list(t.shape) for t in psi.tensors],
        "ortho_center": psi.ortho_center,
        "norm_ledger": psi.norm_ledger,
        "discarded_weight_ledger": psi.discarded_weight_ledger,
        "eps_tag": psi.eps_tag,
        "m_max": psi.trunc.m_max,
        "weight_tol": psi.trunc.weight_tol,
        "extra": extra or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for t in psi.tensors:
            fh.write(np.ascontiguousarray(t).tobytes())


def load_checkpoint(path):
    """Restore a state saved by ``save_checkpoint``; returns (state, extra)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ConfigurationError(f"not a checkpoint file: {path}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["version"] != 1:
            raise ConfigurationError(f"unsupported checkpoint version {header['version']}")
        tensors = []
        for shape in header["shapes"]:
            count = int(np.prod(shape))
            buf = fh.read(count * 16)
            tensors.append(np.frombuffer(buf, dtype=np.complex128).reshape(shape).copy())
    psi = MatrixProductState(
        tensors,
        trunc=TruncationPolicy(header["m_max"], header["weight_tol"]),
        ortho_center=header["ortho_center"],
        eps_tag=header["eps_tag"],
    )
    psi.norm_ledger = header["norm_ledger"]
    psi.discarded_weight_ledger = header["discarded_weight_ledger"]
    return psi, header["extra"]
