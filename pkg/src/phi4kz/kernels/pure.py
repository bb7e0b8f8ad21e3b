"""Pure-numpy twin of the compiled two-site gate kernel.

Serves as the import-time fallback and as the reference the compiled
extension is tested against.  Both implementations share the calling
convention:

``apply_bond_gate(a1, a2, gate, m_max, weight_tol, fold_left)`` returns
``(a1_new, a2_new, factor, discarded)`` where ``factor`` is the kept
amplitude fraction (norm after gate and truncation over norm before) and
``discarded`` the relative singular-value weight dropped.  The returned
pair is unit-normalized with the orthogonality centre on the left tensor
when ``fold_left`` else on the right one.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..errors import NumericalConsistencyError

NAME = "pure"


def truncation_rank(s: np.ndarray, m_max: int, weight_tol: float):
    """Number of singular values to keep and the relative weight discarded.

    Keeps the smallest count whose discarded weight stays within
    ``weight_tol`` (relative to the total), then applies the hard cap
    ``m_max``; at least one value is always kept.
    """
    w = s * s
    total = float(w.sum())
    if not total > 0.0:
        raise NumericalConsistencyError("two-site block has zero norm")
    tail = np.cumsum(w[::-1])[::-1]
    below = np.nonzero(tail <= weight_tol * total)[0]
    keep = int(below[0]) if below.size else len(s)
    keep = max(1, min(keep, int(m_max), len(s)))
    discarded = float(tail[keep] / total) if keep < len(s) else 0.0
    return keep, discarded


def _svd(mat: np.ndarray):
    try:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def apply_bond_gate(a1, a2, gate, m_max, weight_tol, fold_left=False):
    chi_l, d, chi_m = a1.shape
    chi_r = a2.shape[2]
    theta = a1.reshape(chi_l * d, chi_m) @ a2.reshape(chi_m, d * chi_r)
    pre_norm = np.linalg.norm(theta)
    if not pre_norm > 0.0:
        raise NumericalConsistencyError("two-site block has zero norm")
    th = theta.reshape(chi_l, d, d, chi_r).transpose(1, 2, 0, 3).reshape(d * d, chi_l * chi_r)
    th = gate @ th
    th = th.reshape(d, d, chi_l, chi_r).transpose(2, 0, 1, 3).reshape(chi_l * d, d * chi_r)
    u, s, vh = _svd(th)
    keep, discarded = truncation_rank(s, m_max, weight_tol)
    kept_amp = float(np.linalg.norm(s[:keep]))
    factor = kept_amp / pre_norm
    s_n = s[:keep] / kept_amp
    if fold_left:
        a1n = (u[:, :keep] * s_n).reshape(chi_l, d, keep)
        a2n = np.ascontiguousarray(vh[:keep].reshape(keep, d, chi_r))
    else:
        a1n = u[:, :keep].reshape(chi_l, d, keep)
        a2n = np.ascontiguousarray((s_n[:, None] * vh[:keep]).reshape(keep, d, chi_r))
    return np.ascontiguousarray(a1n), a2n, factor, discarded
