"""Crossover bookkeeping: critical widths, freeze-out, power-law fits.

Width conventions: both quantum-critical width estimates are returned as
magnitudes; physically the crossover sits on the disordered side of the
transition (negative ramp parameter), so the classical region is
``eps < -|eps_cross|`` and the quantum critical one ``-|eps_cross| < eps < 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .model import C_PRIME

QUANTUM = "quantum"
CLASSICAL = "classical"


@dataclass(frozen=True)
class CriticalExponents:
    """Equilibrium exponents governing one side of the crossover."""

    nu: float
    z: float
    regime: str

    def __post_init__(self):
        if self.regime not in (QUANTUM, CLASSICAL):
            raise ConfigurationError("regime must be 'quantum' or 'classical'")
        if not (self.nu > 0 and self.z > 0):
            raise ConfigurationError("exponents must be positive")

    @property
    def znu(self) -> float:
        return self.z * self.nu


def quantum_exponents() -> CriticalExponents:
    """Ising universality in 1+1 dimensions: nu = z = 1."""
    return CriticalExponents(nu=1.0, z=1.0, regime=QUANTUM)


def classical_exponents() -> CriticalExponents:
    """Mean-field (Landau-Ginzburg) exponents: nu = 1/2, z = 1."""
    return CriticalExponents(nu=0.5, z=1.0, regime=CLASSICAL)


@dataclass(frozen=True)
class GapLaw:
    """Fitted gap prefactor: gap = phi * |eps|^znu near criticality."""

    phi: float
    znu: float
    fit_window: tuple
    residual: float

    def __post_init__(self):
        if not self.phi > 0:
            raise ConfigurationError("gap prefactor must be positive")


def ginzburg_width_rg(hbar: float, g: float, omega0: float,
                      c_prime: float = C_PRIME) -> float:
    """Quantum-critical width from the renormalization shift law (magnitude).

    ``3*g*hbar*|ln hbar + c'| / (pi*omega0)``; vanishes identically at
    ``hbar = exp(-c')`` where the asymptotic expression changes sign.
    """
    return 3.0 * g * hbar * abs(math.log(hbar) + c_prime) / (math.pi * omega0)


def ginzburg_width_criterion(hbar: float, g: float, omega0: float,
                             dims: int = 2) -> float:
    """Quantum-critical width from the fluctuation criterion (magnitude).

    ``(2*g*hbar)^(2/(4-D)) / omega0`` for total dimension D < 4.
    """
    if dims >= 4:
        raise ConfigurationError("criterion width requires total dimension below 4")
    return (2.0 * g * hbar) ** (2.0 / (4.0 - dims)) / omega0


def ginzburg_number(omega0: float, eps_tilde: float, eps_tilde_c: float,
                    hbar: float, g: float, dims: int = 2) -> float:
    """Ratio of order-parameter magnitude to its fluctuations.

    Above 1 the classical (mean-field) description holds, below 1 quantum
    fluctuations dominate; exactly 1 on the crossover line.
    """
    if dims >= 4:
        raise ConfigurationError("criterion requires total dimension below 4")
    return omega0 * abs(eps_tilde - eps_tilde_c) / (2.0 * g * hbar) ** (2.0 / (4.0 - dims))


def crossover_amplitude_threshold(g: float, hbar: float) -> float:
    """Smallest ramp amplitude whose start lies in the classical region.

    The symmetric ramp starts at eps = -1/2; it sits outside the quantum
    critical region exactly when ``|eps_cross| < 1/2``, i.e.
    ``omega0 > 4*g*hbar``.
    """
    return 4.0 * g * hbar


def crossover_time(exponents: CriticalExponents, hbar: float, eps_cross: float,
                   phi: float) -> float:
    """Quench time separating classical from quantum defect scaling.

    ``znu * hbar * |eps_cross|^(-1-znu) / phi`` with the quantum exponents.
    """
    if not phi > 0:
        raise ConfigurationError("gap prefactor must be positive")
    znu = exponents.znu
    return znu * hbar * abs(eps_cross) ** (-1.0 - znu) / phi


def predict_exponents(exponents: CriticalExponents) -> dict:
    """KZ predictions: healing-length and freeze-out exponents."""
    znu = exponents.znu
    return {
        "w_xi": exponents.nu / (1.0 + znu),
        "p": znu / (1.0 + znu),
    }


def freeze_out(tau_q: float, gap_law: GapLaw, exponents: CriticalExponents,
               hbar: float, eps_cross: float | None = None) -> dict:
    """Freeze-out point of a linear ramp.

    Equates the relaxation time ``hbar / (phi |eps|^znu)`` with the local
    quench timescale ``|eps| tau_q``; the closed-form solution is
    ``eps_hat = (hbar / (phi tau_q))^(1/(1+znu))``.  When ``eps_cross`` is
    given, the point is classified by which side of the crossover it lands
    on (larger ``eps_hat`` means earlier freezing, deeper in the classical
    region).
    """
    znu = exponents.znu
    eps_hat = (hbar / (gap_law.phi * tau_q)) ** (1.0 / (1.0 + znu))
    out = {"eps_hat": float(eps_hat), "t_hat": float(eps_hat * tau_q)}
    if eps_cross is not None:
        out["regime"] = CLASSICAL if eps_hat > abs(eps_cross) else QUANTUM
    return out


def fit_gap_prefactor(eps_values, gaps, znu: float = 1.0,
                      window: tuple | None = None) -> GapLaw:
    """Least-squares prefactor of ``gap = phi |eps|^znu`` at fixed exponent."""
    eps_values = np.abs(np.asarray(eps_values, dtype=float))
    gaps = np.asarray(gaps, dtype=float)
    if window is not None:
        lo, hi = min(window), max(window)
        mask = (eps_values >= lo) & (eps_values <= hi)
        eps_values, gaps = eps_values[mask], gaps[mask]
    if len(eps_values) < 2:
        raise ConfigurationError("need at least two gap points to fit the prefactor")
    if np.any(gaps <= 0):
        raise ConfigurationError("gap values must be positive")
    logphi = np.log(gaps) - znu * np.log(eps_values)
    phi = float(np.exp(logphi.mean()))
    residual = float(np.sqrt(np.mean((logphi - logphi.mean()) ** 2)))
    return GapLaw(phi=phi, znu=znu,
                  fit_window=(float(eps_values.min()), float(eps_values.max())),
                  residual=residual)


@dataclass(frozen=True)
class FitResult:
    """Power-law fit output; crossover fits fill the breakpoint fields."""

    exponent: float
    uncertainty: float
    prefactor: float
    window: tuple
    residual: float
    n_points: int
    exponent_fast: float | None = None
    exponent_slow: float | None = None
    breakpoint: float | None = None
    breakpoint_uncertainty: float | None = None
    fallback_single: bool = False


def _clean_points(points, window):
    pts = np.asarray(sorted((float(x), float(y)) for x, y in points))
    if window is not None:
        lo, hi = min(window), max(window)
        pts = pts[(pts[:, 0] >= lo) & (pts[:, 0] <= hi)]
    if np.any(pts <= 0):
        raise ConfigurationError("power-law fits need strictly positive data")
    return pts


def fit_powerlaw(points, window: tuple | None = None) -> FitResult:
    """Least squares on log-log data: value = prefactor * x^exponent.

    Uncertainty is the covariance-based standard error of the slope scaled
    by the residual variance.
    """
    pts = _clean_points(points, window)
    if len(pts) < 4:
        raise ConfigurationError("need at least four points for a power-law fit")
    x = np.log(pts[:, 0])
    y = np.log(pts[:, 1])
    n = len(x)
    design = np.column_stack([np.ones(n), x])
    coef, res_arr, _, _ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ coef
    sse = float(np.sum((y - fitted) ** 2))
    dof = max(n - 2, 1)
    sigma2 = sse / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return FitResult(
        exponent=float(coef[1]),
        uncertainty=float(max(np.sqrt(cov[1, 1]), 1e-30)),
        prefactor=float(np.exp(coef[0])),
        window=(float(pts[0, 0]), float(pts[-1, 0])),
        residual=float(np.sqrt(sse / n)),
        n_points=n,
    )


#: minimum relative improvement of the kinked fit before it is preferred
_KINK_F_THRESHOLD = 4.0


def fit_crossover(points, init_break: float | None = None,
                  window: tuple | None = None) -> FitResult:
    """Continuous two-segment power law in log-log coordinates.

    Grid search over candidate breakpoints (quantiles of the data interior,
    refined locally) with a linear hinge fit at each; deterministic.  If the
    kink does not improve on a single power law the single fit is returned
    with ``fallback_single`` set.
    """
    pts = _clean_points(points, window)
    if len(pts) < 8:
        raise ConfigurationError("need at least eight points spanning both regimes")
    x = np.log(pts[:, 0])
    y = np.log(pts[:, 1])
    n = len(x)
    single = fit_powerlaw(pts)

    def hinge_fit(xb):
        design = np.column_stack([np.ones(n), x, np.maximum(x - xb, 0.0)])
        coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        sse = float(np.sum((design @ coef - y) ** 2))
        return sse, coef, design

    lo, hi = x[2], x[-3]
    if init_break is not None and lo < math.log(init_break) < hi:
        candidates = np.concatenate([
            np.linspace(lo, hi, 101), [math.log(init_break)]])
    else:
        candidates = np.linspace(lo, hi, 101)
    sses = np.array([hinge_fit(xb)[0] for xb in candidates])
    best = int(np.argmin(sses))
    fine = np.linspace(candidates[max(best - 1, 0)],
                       candidates[min(best + 1, len(candidates) - 1)], 41)
    sses_fine = np.array([hinge_fit(xb)[0] for xb in fine])
    best_fine = int(np.argmin(sses_fine))
    xb = float(fine[best_fine])
    sse, coef, design = hinge_fit(xb)

    dof = max(n - 4, 1)
    sigma2 = sse / dof
    single_sse = single.residual ** 2 * n
    f_stat = (single_sse - sse) / 2.0 / max(sigma2, 1e-300)
    w_fast = float(coef[1])
    w_slow = float(coef[1] + coef[2])
    if f_stat < _KINK_F_THRESHOLD or not (lo <= xb <= hi):
        return FitResult(
            exponent=single.exponent, uncertainty=single.uncertainty,
            prefactor=single.prefactor, window=single.window,
            residual=single.residual, n_points=n, fallback_single=True,
        )
    cov = sigma2 * np.linalg.inv(design.T @ design)
    # breakpoint uncertainty from the curvature of the SSE profile
    span = 0.35 * (hi - lo)
    prof = np.linspace(xb - span, xb + span, 41)
    prof_sse = np.array([hinge_fit(b)[0] for b in prof])
    curv = np.polyfit(prof - xb, prof_sse, 2)[0]
    xb_sigma = float(np.sqrt(max(sigma2 / max(curv, 1e-300), 0.0)))
    return FitResult(
        exponent=w_slow,
        uncertainty=float(np.sqrt(cov[1, 1] + cov[2, 2] + 2 * cov[1, 2])),
        prefactor=float(np.exp(coef[0])),
        window=(float(pts[0, 0]), float(pts[-1, 0])),
        residual=float(np.sqrt(sse / n)),
        n_points=n,
        exponent_fast=w_fast,
        exponent_slow=w_slow,
        breakpoint=float(np.exp(xb)),
        breakpoint_uncertainty=float(np.exp(xb) * xb_sigma),
        fallback_single=False,
    )
