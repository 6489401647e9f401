import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.optimize import curve_fit

from rbsim import clifford
from rbsim import flicker as F

X = np.array([[0, 1], [1, 0]], complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0 + 0j, -1.0])

# A' giving a mean Clifford error of about 1e-3 when the cutoff is set by a
# 92140-step experiment (see amplitude_for_error_rate)
A_MID = 3.06e-5
CUTOFF_MID = 92140


class TestTelegraph:
    def test_mean_gap(self):
        rate = 0.1
        sig = F.sample_rtn(rate, 1e5, seed=3)
        gaps = np.diff(np.concatenate([[0.0], sig.switch_times]))
        assert np.all(gaps > 0)
        assert abs(gaps.mean() - 1 / rate) < 3 * (1 / rate) / math.sqrt(len(gaps))

    def test_value_flips(self):
        sig = F.RtnSignal(1.0, np.array([1.0, 2.5]), -1)
        assert list(sig.value([0.5, 1.5, 3.0])) == [-1, 1, -1]

    def test_zero_amplitude(self):
        assert np.array_equal(F.sample_flicker(0.0, n_steps=500, seed=1).xi(), np.zeros(500))

    @settings(max_examples=10)
    @given(st.integers(0, 2**31), st.integers(10, 3000))
    def test_rates_within_cutoffs(self, seed, n):
        p = F.sample_flicker(1.0, 1.0, n, seed=seed)
        f_min, f_max = F.cutoffs(n)
        assert (f_min, f_max) == (p.f_min, p.f_max) == (1 / (10 * n), 0.5)
        assert np.all((p.rates >= f_min) & (p.rates <= f_max)) and len(p.signals) == 50

    def test_xi_is_midpoint_sum(self):
        p = F.sample_flicker(0.3, 0.5, 800, seed=7)
        mid = (np.arange(800) + 0.5) * 0.5
        direct = 0.3 * sum(s.value(mid) for s in p.signals)
        assert np.array_equal(p.xi(), direct)

    def test_n_steps_validation(self):
        with pytest.raises(ValueError):
            F.sample_flicker(1.0, n_steps=0)


class TestSpectrum:
    def test_single_signal_lorentzian(self):
        rate, n = 0.05, 4096
        mid = np.arange(n) + 0.5
        x = np.array([F.sample_rtn(rate, n, seed=i).value(mid) for i in range(1000)])
        f, s = F.estimate_psd(x)
        sel = f < 0.2
        (a, fc), _ = curve_fit(lambda f, a, fc: a / (1 + (f / fc) ** 2), f[sel], s[sel], p0=[s[0], 0.01])
        assert fc == pytest.approx(rate / math.pi, rel=0.1)
        assert a == pytest.approx(F.rtn_psd(0.0, rate), rel=0.1)

    def test_one_over_f_slope(self):
        n = 2 ** 14
        x = np.array([F.sample_flicker(1.0, 1.0, n, seed=i).xi() for i in range(50)])
        f, s = F.estimate_psd(x)
        sel = (f > 1e-3) & (f < 3e-2)
        slope = np.polyfit(np.log(f[sel]), np.log(s[sel]), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.1)

    def test_analytic_shape_slope(self):
        f = np.geomspace(1e-3, 1e-2, 20)
        s = F.flicker_psd_shape(f, 1e-7, 0.5)
        assert np.polyfit(np.log(f), np.log(s), 1)[0] == pytest.approx(-1.0, abs=0.05)

    def test_power_scales_with_amplitude_squared(self):
        n = 4096
        power = {}
        for k in (1, 2, 4):
            x = np.array([F.sample_flicker(k * 0.1, 1.0, n, seed=[k, i]).xi() for i in range(300)])
            f, s = F.estimate_psd(x)
            power[k] = np.sum(s) * (f[1] - f[0])
        assert power[2] / power[1] == pytest.approx(4, rel=0.1)
        assert power[4] / power[1] == pytest.approx(16, rel=0.1)

    def test_csv(self):
        assert F.psd_to_csv([0.1, 0.2], [1.0, 2.0]).splitlines() == ["f,S", "0.1,1.0", "0.2,2.0"]


class TestRamsey:
    def test_basic_invariants(self):
        c = F.ramsey(1e-3, 400, ensemble=50, seed=1)
        assert c.sigma[0] == pytest.approx(1.0)
        assert np.all((c.sigma >= 0) & (c.sigma <= 1 + 1e-12))
        assert c.gate_fidelity(20) == pytest.approx((2 + c.sigma[20]) / 3)
        assert c.to_csv().startswith("t,sigma\n0.0,1.0")

    def test_lower_bound_when_no_decay(self):
        c = F.ramsey(1e-7, 200, ensemble=10, seed=1)
        assert c.crossing_is_lower_bound and c.t2_crossing == 200

    def test_zero_noise(self):
        c = F.ramsey(0.0, 100, ensemble=5, seed=0)
        assert np.allclose(c.sigma, 1.0) and c.gate_fidelity() == pytest.approx(1.0)

    @pytest.mark.slow
    def test_mid_power_coherence_time(self):
        c = F.ramsey(A_MID, 3000, ensemble=2000, seed=0, cutoff_steps=CUTOFF_MID)
        assert c.t2_crossing / F.PULSE_STEPS == pytest.approx(30, rel=0.2)
        assert c.rms_gaussian < c.rms_exponential


class TestPulses:
    def test_envelope(self):
        g = F.gaussian_envelope()
        assert len(g) == 20 and g.sum() == pytest.approx(1.0) and np.allclose(g, g[::-1])
        # samples at midpoints -0.475 t_g ... 0.475 t_g with sigma = t_g / 4
        assert g[0] / g[9] == pytest.approx(math.exp(-0.5 * ((0.475 / 0.25) ** 2 - (0.025 / 0.25) ** 2)), rel=1e-12)

    @pytest.mark.parametrize("name", ["X90", "Xm90", "Y90", "Ym90", "X", "Y", "I"])
    def test_noiseless_generator_is_exact(self, name):
        ox, oy = F.generator_waveform(name)
        u = F._ordered_product(F.step_unitaries(ox, oy, np.zeros(len(ox)))[None])[0]
        axis, theta = clifford.GENERATOR_ANGLES[name]
        target = np.eye(2) if axis is None else expm(-0.5j * theta * (X if axis == "X" else Y))
        assert abs(abs(np.trace(target.conj().T @ u)) - 2) < 1e-12

    def test_step_unitaries_match_expm(self, rng):
        ox, oy, xi = rng.normal(0, 0.1, (3, 30))
        us = F.step_unitaries(ox, oy, xi, dt=0.7)
        for k in range(30):
            h = ox[k] * X / 2 + oy[k] * Y / 2 + xi[k] * Z
            assert np.allclose(us[k], expm(-2j * math.pi * 0.7 * h), atol=1e-13)
            assert np.allclose(us[k] @ us[k].conj().T, np.eye(2), atol=1e-13)

    def test_ordered_product(self, rng):
        blocks = F.step_unitaries(*rng.normal(0, 0.3, (3, 7)))
        ref = np.eye(2)
        for b in blocks:
            ref = b @ ref
        assert np.allclose(F._ordered_product(blocks[None])[0], ref, atol=1e-14)

    def test_noiseless_self_inversion(self, rng):
        seq = rng.integers(0, 24, size=300)
        run = F.evolve_pulsed_sequence(F.rb_layout(seq, [1, 10, 100, 300]), 0.0, seed=0)
        assert min(run.survival.values()) >= 1 - 1e-6
        assert run.clifford_error_rates.max() < 1e-12

    def test_layout(self):
        lay = F.rb_layout(np.array([3, 5, 7, 9]), [1, 4])
        assert [m for m, _ in lay] == [1, 4]
        assert list(lay[1][1][:4]) == [3, 5, 7, 9] and len(lay[1][1]) == 5
        assert F.identity_layout([2])[0][1].tolist() == [0, 0]

    def test_expected_steps(self):
        # pi rotations occupy two pulse slots
        slots = sum(2 if g in ("X", "Y") else 1 for e in clifford.build_group().elements for g in e.generators)
        assert F.expected_experiment_steps([1, 2]) == round(slots / 24 * 20 * 5)

    def test_process_validation(self):
        lay = F.rb_layout(np.array([1, 2]), [2])
        short = F.sample_flicker(1e-3, 1.0, 10, seed=0)
        with pytest.raises(ValueError):
            F.evolve_pulsed_sequence(lay, 1e-3, process=short)
        other_dt = F.sample_flicker(1e-3, 0.5, 10_000, seed=0)
        with pytest.raises(ValueError):
            F.evolve_pulsed_sequence(lay, 1e-3, process=other_dt)


class TestFlickerRb:
    def test_ordering_matters_but_reruns_are_identical(self):
        grid = [1, 8, 32]
        a = F.run_flicker_rb(3e-4, 3, grid, seed=5)
        b = F.run_flicker_rb(3e-4, 3, grid, seed=5)
        c = F.run_flicker_rb(3e-4, 3, grid, seed=5, order=[2, 1, 0])
        assert np.array_equal(a.series.mean, b.series.mean) and a.true_r == b.true_r
        assert not np.allclose(a.series.mean, c.series.mean, rtol=0, atol=1e-12)

    def test_noiseless(self):
        res = F.run_flicker_rb(0.0, 2, [1, 4], seed=0)
        assert np.allclose(res.series.mean, 1.0, atol=1e-6) and res.true_r < 1e-12

    def test_identity_run_decays(self):
        res = F.run_flicker_rb(1e-5, 40, [1, 16, 64], seed=1, identity=True)
        assert np.all(np.diff(res.series.mean) < 0) and res.series.mean[-1] > 0.5 and res.series.metadata["identity"]

    def test_fit_attaches(self):
        res = F.run_flicker_rb(3e-4, 4, [1, 2, 4, 8, 16, 32], seed=1)
        f = F.fit_flicker(res)
        assert res.fit is f and f.true_r == res.true_r

    def test_clifford_error_rate_grows_quadratically(self):
        r1 = F.clifford_error_rate(1e-5, 300, seed=2, cutoff_steps=20000)
        r2 = F.clifford_error_rate(2e-5, 300, seed=2, cutoff_steps=20000)
        assert r2 / r1 == pytest.approx(4, rel=0.01)


class TestCorrelatedDepolarizing:
    def test_closed_forms(self):
        assert F.correlated_depolarizing_alpha(0.0) == 1.0
        assert F.correlated_depolarizing_alpha(0.25) == pytest.approx(-1 / 3)
        assert F.correlated_depolarizing_alpha(0.125) == pytest.approx(1 / 3)

    def test_matches_twirl_of_z_rotation(self):
        from rbsim import ptm
        g = clifford.build_group()
        phi = 0.037
        e = ptm.ptm_from_unitary(np.diag([np.exp(-2j * math.pi * phi), np.exp(2j * math.pi * phi)]))
        a = (np.trace(clifford.twirl(e, g.ptms).entries) - 1) / 3
        assert a == pytest.approx(F.correlated_depolarizing_alpha(phi), abs=1e-12)

    def test_product_model_vs_direct_average(self, rng):
        phis = rng.normal(0, 0.05, 9)
        n = 20000
        direct = F.instantaneous_gate_average(phis, n, seed=3)
        model = F.product_model_survival(phis[:-1])
        assert abs(direct - model) < 3 * math.sqrt(model * (1 - model) / n)
