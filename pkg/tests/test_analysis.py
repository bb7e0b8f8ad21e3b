"""Scaling formulas, freeze-out identities, and the fit machinery."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phi4kz.analysis import (
    GapLaw,
    classical_exponents,
    crossover_amplitude_threshold,
    crossover_time,
    fit_crossover,
    fit_gap_prefactor,
    fit_powerlaw,
    freeze_out,
    ginzburg_number,
    ginzburg_width_criterion,
    ginzburg_width_rg,
    predict_exponents,
    quantum_exponents,
)
from phi4kz.errors import ConfigurationError
from phi4kz.model import coupling_ion_chain


class TestWidths:
    def test_rg_width_reference_point(self):
        val = ginzburg_width_rg(0.1, coupling_ion_chain(), 9.0)
        assert val == pytest.approx(0.0302, abs=2e-4)

    def test_rg_width_zero_crossing(self):
        assert ginzburg_width_rg(np.exp(-2.63), 1.0, 1.0) == pytest.approx(0.0, abs=1e-12)

    def test_rg_width_scaling_structure(self):
        base = ginzburg_width_rg(0.1, 2.0, 3.0)
        assert ginzburg_width_rg(0.1, 4.0, 3.0) == pytest.approx(2 * base)
        assert ginzburg_width_rg(0.1, 2.0, 6.0) == pytest.approx(base / 2)

    def test_criterion_width_reference_point(self):
        val = ginzburg_width_criterion(0.1, coupling_ion_chain(), 9.0)
        assert val == pytest.approx(0.1932, abs=2e-4)

    def test_criterion_width_dimension_guard(self):
        with pytest.raises(ConfigurationError):
            ginzburg_width_criterion(0.1, 1.0, 1.0, dims=4)

    def test_widths_within_order_of_magnitude_per_decade(self):
        g = coupling_ion_chain()
        for hbar in (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0):
            rg = ginzburg_width_rg(hbar, g, 9.0)
            crit = ginzburg_width_criterion(hbar, g, 9.0)
            ratio = rg / crit
            assert 0.1 <= ratio <= 10.0

    def test_amplitude_threshold(self):
        g = coupling_ion_chain()
        thr = crossover_amplitude_threshold(g, 0.1)
        assert thr == pytest.approx(3.478, abs=2e-3)
        # |eps_cross| < 1/2 exactly when omega0 exceeds the threshold
        for omega0 in (3.0, 3.478, 4.0, 9.0):
            width = ginzburg_width_criterion(0.1, g, omega0)
            assert (width < 0.5) == (omega0 > thr) or omega0 == pytest.approx(thr, abs=1e-3)


class TestGinzburgNumber:
    def test_unity_on_crossover_line(self):
        g = coupling_ion_chain()
        width = ginzburg_width_criterion(0.1, g, 9.0)
        val = ginzburg_number(9.0, width, 0.0, 0.1, g)
        assert val == pytest.approx(1.0, rel=1e-12)

    def test_deep_disordered_point(self):
        g = coupling_ion_chain()
        assert ginzburg_number(9.0, 0.5, 0.0, 0.1, g) > 1.0

    def test_vanishes_at_critical_point(self):
        assert ginzburg_number(9.0, 0.03, 0.03, 0.1, 8.7) == 0.0


class TestCrossoverTime:
    def test_unit_inputs(self):
        assert crossover_time(quantum_exponents(), 1.0, 1.0, 1.0) == pytest.approx(1.0)

    def test_linear_in_hbar(self):
        t1 = crossover_time(quantum_exponents(), 0.1, 0.03, 15.0)
        t2 = crossover_time(quantum_exponents(), 0.2, 0.03, 15.0)
        assert t2 == pytest.approx(2 * t1)

    def test_reference_arithmetic(self):
        # tau = hbar |eps|^-2 / phi at quantum exponents
        val = crossover_time(quantum_exponents(), 0.1, 0.0302, 1.0)
        assert val == pytest.approx(0.1 * 0.0302 ** -2, rel=1e-12)

    def test_phi_guard(self):
        with pytest.raises(ConfigurationError):
            crossover_time(quantum_exponents(), 0.1, 0.03, 0.0)


class TestPredictions:
    def test_quantum_preset(self):
        out = predict_exponents(quantum_exponents())
        assert out["w_xi"] == pytest.approx(0.5)
        assert out["p"] == pytest.approx(0.5)

    def test_classical_preset(self):
        out = predict_exponents(classical_exponents())
        assert out["w_xi"] == pytest.approx(1.0 / 3.0)

    @given(nu=st.floats(0.25, 2.0), z=st.floats(0.5, 3.0))
    @settings(max_examples=40, deadline=None)
    def test_symbolic_form(self, nu, z):
        from phi4kz.analysis import CriticalExponents

        exps = CriticalExponents(nu=nu, z=z, regime="quantum")
        out = predict_exponents(exps)
        assert out["w_xi"] == pytest.approx(nu / (1 + z * nu))


class TestFreezeOut:
    def test_closed_form_solve(self):
        law = GapLaw(phi=1.0, znu=1.0, fit_window=(0.01, 0.1), residual=0.0)
        out = freeze_out(100.0, law, quantum_exponents(), hbar=1.0)
        assert out["eps_hat"] == pytest.approx(0.1)
        assert out["t_hat"] == pytest.approx(10.0)

    def test_scaling_slope_half(self):
        law = GapLaw(phi=2.3, znu=1.0, fit_window=(0.01, 0.1), residual=0.0)
        taus = np.logspace(0, 3, 12)
        ts = [freeze_out(t, law, quantum_exponents(), hbar=0.1)["t_hat"] for t in taus]
        slope = np.polyfit(np.log(taus), np.log(ts), 1)[0]
        assert slope == pytest.approx(0.5, abs=1e-6)

    def test_crossover_time_closes_loop(self):
        # feeding the crossover time back into the freeze-out solve returns
        # exactly the crossover width (quantum exponents)
        law = GapLaw(phi=15.66, znu=1.0, fit_window=(0.01, 0.04), residual=0.0)
        eps_cross = 0.0302
        tau_x = crossover_time(quantum_exponents(), 0.1, eps_cross, law.phi)
        out = freeze_out(tau_x, law, quantum_exponents(), hbar=0.1, eps_cross=eps_cross)
        assert out["eps_hat"] == pytest.approx(eps_cross, rel=1e-12)

    def test_regime_classifier(self):
        law = GapLaw(phi=15.66, znu=1.0, fit_window=(0.01, 0.04), residual=0.0)
        fast = freeze_out(0.1, law, quantum_exponents(), hbar=0.1, eps_cross=0.0302)
        slow = freeze_out(1000.0, law, quantum_exponents(), hbar=0.1, eps_cross=0.0302)
        assert fast["regime"] == "classical"
        assert slow["regime"] == "quantum"


class TestGapPrefactor:
    def test_exact_recovery(self):
        eps = np.linspace(0.01, 0.03, 6)
        gaps = 15.66 * eps
        law = fit_gap_prefactor(eps, gaps)
        assert law.phi == pytest.approx(15.66, rel=1e-12)
        assert law.residual < 1e-12

    def test_window_applied(self):
        eps = np.array([0.005, 0.01, 0.02, 0.03, 0.2])
        gaps = 10.0 * eps
        gaps[-1] *= 3.0  # out-of-window outlier
        law = fit_gap_prefactor(eps, gaps, window=(0.008, 0.05))
        assert law.phi == pytest.approx(10.0, rel=1e-10)


class TestFitPowerlaw:
    def test_exact_power_law(self):
        taus = np.logspace(0, 2, 9)
        pts = [(t, 3.0 * t ** 0.5) for t in taus]
        fit = fit_powerlaw(pts)
        assert fit.exponent == pytest.approx(0.5, abs=1e-10)
        assert fit.prefactor == pytest.approx(3.0, rel=1e-10)
        assert fit.residual < 1e-12

    def test_noisy_power_law(self):
        rng = np.random.default_rng(2024)
        taus = np.logspace(0, 2, 10)
        pts = [(t, 3.0 * t ** 0.5 * np.exp(rng.normal(0, 0.05))) for t in taus]
        fit = fit_powerlaw(pts)
        assert fit.exponent == pytest.approx(0.5, abs=0.05)
        assert fit.uncertainty < 0.05

    def test_scale_equivariance(self):
        taus = np.logspace(0, 2, 8)
        rng = np.random.default_rng(7)
        vals = 2.0 * taus ** 0.4 * np.exp(rng.normal(0, 0.02, len(taus)))
        f1 = fit_powerlaw(list(zip(taus, vals)))
        f2 = fit_powerlaw(list(zip(taus, 10.0 * vals)))
        assert f1.exponent == pytest.approx(f2.exponent, abs=1e-12)
        assert f2.prefactor == pytest.approx(10 * f1.prefactor, rel=1e-10)

    def test_guards(self):
        with pytest.raises(ConfigurationError):
            fit_powerlaw([(1.0, 1.0), (2.0, 2.0)])
        with pytest.raises(ConfigurationError):
            fit_powerlaw([(1.0, 1.0), (2.0, -2.0), (3.0, 1.0), (4.0, 1.0)])


class TestFitCrossover:
    @staticmethod
    def synthetic_kink(break_at=7.0, w_fast=1 / 3, w_slow=0.5, noise=0.01, n=14, seed=11):
        rng = np.random.default_rng(seed)
        taus = np.logspace(np.log10(0.3), np.log10(200.0), n)
        amp = 1.0
        vals = []
        for t in taus:
            if t <= break_at:
                v = amp * t ** w_fast
            else:
                v = amp * break_at ** (w_fast - w_slow) * t ** w_slow
            vals.append(v * np.exp(rng.normal(0, noise)))
        return list(zip(taus, vals))

    def test_recovers_breakpoint(self):
        fit = fit_crossover(self.synthetic_kink())
        assert not fit.fallback_single
        assert fit.breakpoint == pytest.approx(7.0, rel=0.05)
        assert fit.exponent_fast == pytest.approx(1 / 3, abs=0.04)
        assert fit.exponent_slow == pytest.approx(0.5, abs=0.04)
        assert fit.exponent_fast < fit.exponent_slow

    def test_pure_power_law_falls_back(self):
        taus = np.logspace(-0.5, 2.3, 12)
        pts = [(t, 2.0 * t ** 0.5) for t in taus]
        fit = fit_crossover(pts)
        assert fit.fallback_single

    def test_scale_equivariance_in_tau(self):
        pts = self.synthetic_kink()
        fit1 = fit_crossover(pts)
        fit2 = fit_crossover([(10 * t, v) for t, v in pts])
        assert fit2.breakpoint == pytest.approx(10 * fit1.breakpoint, rel=1e-6)
        assert fit2.exponent_fast == pytest.approx(fit1.exponent_fast, abs=1e-9)
        assert fit2.exponent_slow == pytest.approx(fit1.exponent_slow, abs=1e-9)

    def test_needs_enough_points(self):
        with pytest.raises(ConfigurationError):
            fit_crossover([(1.0, 1.0)] * 5)
