import math

import numpy as np
import pytest

import oracles as O
from spinnoise.core import Spectrum
from spinnoise.exceptions import DomainError, FitError, IndeterminateError, UsageError
from spinnoise.mors import (
    M_LEVELS,
    ZeemanLadder,
    ZeemanPopulations,
    classify_mass,
    fit_mors,
    mors_response,
    mors_spectrum,
    polarization,
    project_to_simplex,
    sign_partner,
    thermal_occupancy,
    transition_frequencies,
    transition_weights,
)

TP = 2 * math.pi
LADDER = ZeemanLadder(TP * 960e3, TP * 1e3, TP * 150.0)
INIT = ZeemanLadder(TP * 960.05e3, TP * 1.02e3, TP * 170.0)
GRID = np.linspace(950.5e3, 969.5e3, 2000)


def pops_from(mapping):
    p = np.zeros(9)
    for m, v in mapping.items():
        p[m + 4] = v
    return ZeemanPopulations(tuple(p))


P098 = pops_from({4: 0.92, 3: 0.08})


def single_difference(d):
    """p_-4 .. p_3 equal, p_4 apart, so only p_3 - p_4 = d is non-zero."""
    b = (1 - 8 * d) / 9
    return ZeemanPopulations(tuple([(1 - b) / 8] * 8 + [b]))


class TestLadder:
    def test_no_splitting(self):
        f = transition_frequencies(ZeemanLadder(5.0, 0.0, 1.0))
        assert f.shape == (8,) and np.all(f == 5.0)

    def test_end_transitions(self):
        f = transition_frequencies(ZeemanLadder(1000.0, 3.0, 1.0))
        assert f[0] == 1000.0 - 21.0 and f[-1] == 1000.0 + 21.0

    def test_affine_exact(self):
        f = transition_frequencies(ZeemanLadder(TP * 960e3, 1024.0, 1.0))
        assert np.all(np.diff(f) == 2048.0)

    def test_weights(self):
        np.testing.assert_array_equal(transition_weights(), [8, 14, 18, 20, 20, 18, 14, 8])


class TestSpectrum:
    @pytest.mark.parametrize("m,k", [(4, 3), (-4, -4)])
    def test_stretched_state_single_line(self, m, k):
        s = mors_spectrum(LADDER, ZeemanPopulations.stretched(m), np.linspace(950e3, 970e3, 20001))
        peak = s.freqs[np.argmax(s.values)]
        assert peak == pytest.approx(960e3 + 1e3 * (2 * k + 1), abs=1.0)
        far = np.abs(s.freqs - peak) > 3e3
        assert s.values[far].max() < 0.01 * s.values.max()

    def test_uniform_is_null(self):
        s = mors_spectrum(LADDER, ZeemanPopulations.uniform(), GRID)
        assert np.max(s.values) < 1e-25

    def test_response_linear_in_differences(self):
        w = TP * GRID
        a = pops_from({4: 0.6, 3: 0.4})
        b = pops_from({0: 0.5, 1: 0.5})
        mix = 0.3 * a.array + 0.7 * b.array
        np.testing.assert_allclose(
            mors_response(LADDER, mix, w),
            0.3 * mors_response(LADDER, a, w) + 0.7 * mors_response(LADDER, b, w),
            rtol=1e-12, atol=1e-15)

    def test_isolated_line_power_quadratic(self):
        f = np.linspace(900e3, 1020e3, 240001)
        areas = []
        for d in (-0.02, -0.04, -0.08):
            p = single_difference(d)
            areas.append(np.trapezoid(mors_spectrum(LADDER, p, f).values, f))
        assert areas[1] / areas[0] == pytest.approx(4.0, rel=1e-12)
        assert areas[2] / areas[1] == pytest.approx(4.0, rel=1e-12)

    @pytest.mark.xfail(strict=True, reason="power spectrum is quadratic in each difference")
    def test_power_integral_linear_in_difference(self):
        f = np.linspace(900e3, 1020e3, 240001)
        a = np.trapezoid(mors_spectrum(LADDER, single_difference(-0.04), f).values, f)
        b = np.trapezoid(mors_spectrum(LADDER, single_difference(-0.08), f).values, f)
        assert b / a == pytest.approx(2.0, rel=1e-6)


class TestPolarizationAndOccupancy:
    def test_values(self):
        assert polarization(ZeemanPopulations.stretched(4)) == 1.0
        assert polarization(P098) == pytest.approx(O.P_092_008, abs=1e-15)
        assert polarization(ZeemanPopulations.uniform()) == pytest.approx(0.0, abs=1e-15)

    def test_occupancy(self):
        assert thermal_occupancy(ZeemanPopulations.stretched(4), "negative") == 0.0
        assert thermal_occupancy(P098, "negative") == pytest.approx(O.N_S_092_008, abs=1e-15)
        assert thermal_occupancy(ZeemanPopulations.uniform(), "negative") == pytest.approx(O.N_S_UNIFORM)
        assert thermal_occupancy(P098.mirrored(), "positive") == pytest.approx(O.N_S_092_008)

    def test_rejects_unnormalized(self):
        with pytest.raises(DomainError):
            polarization(2 * P098.array)
        with pytest.raises(DomainError):
            thermal_occupancy(0.5 * P098.array, "negative")
        with pytest.raises(DomainError):
            thermal_occupancy(P098, "sideways")

    def test_classify(self):
        assert classify_mass(ZeemanPopulations.stretched(4)) == "negative"
        assert classify_mass(ZeemanPopulations.stretched(-4)) == "positive"
        with pytest.raises(IndeterminateError):
            classify_mass(ZeemanPopulations.uniform())

    def test_classify_flips_under_mirror(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            p = ZeemanPopulations(tuple(rng.dirichlet(np.ones(9))))
            try:
                a = classify_mass(p)
            except IndeterminateError:
                continue
            assert classify_mass(p.mirrored()) != a

    def test_spin_temperature(self):
        for pol in (-0.89, 0.3, 0.98):
            assert polarization(ZeemanPopulations.spin_temperature(pol)) == pytest.approx(pol, abs=1e-12)

    def test_simplex_projection(self):
        p = project_to_simplex(np.array([0.5, -0.2, 0.9]))
        assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)
        np.testing.assert_allclose(project_to_simplex(np.array([0.2, 0.3, 0.5])), [0.2, 0.3, 0.5])


class TestSignPartner:
    def test_partner_has_same_spectrum_opposite_polarization(self):
        p = ZeemanPopulations(tuple(np.full(9, 1 / 9) + 0.01 * np.linspace(-1, 1, 9)))
        q = sign_partner(p)
        assert q is not None
        np.testing.assert_allclose(mors_spectrum(LADDER, q, GRID).values,
                                   mors_spectrum(LADDER, p, GRID).values, rtol=1e-10)
        assert polarization(q) == pytest.approx(-polarization(p), abs=1e-12)

    def test_strongly_polarized_has_no_partner(self):
        assert sign_partner(P098) is None


class TestFit:
    def test_round_trip_p098(self):
        s = mors_spectrum(LADDER, P098, GRID)
        r = fit_mors(s, INIT)
        assert abs(polarization(r.populations) - 0.98) <= 0.005
        assert not r.sign_ambiguous
        assert classify_mass(r.populations) == "negative"

    def test_round_trip_p089(self):
        truth = ZeemanPopulations.spin_temperature(-0.89)
        r = fit_mors(mors_spectrum(LADDER, truth, GRID), INIT)
        assert abs(polarization(r.populations) + 0.89) <= 0.01
        n_true = thermal_occupancy(truth, "positive")
        assert abs(thermal_occupancy(r.populations, "positive") - n_true) <= 0.05

    def test_ladder_recovered(self):
        r = fit_mors(mors_spectrum(LADDER, P098, GRID), INIT)
        assert r.ladder.omega_s == pytest.approx(LADDER.omega_s, rel=1e-9)
        assert r.ladder.omega_qzs == pytest.approx(LADDER.omega_qzs, rel=1e-6)
        assert r.ladder.linewidth == pytest.approx(LADDER.linewidth, rel=1e-6)

    def test_null_spectrum(self):
        with pytest.raises(FitError):
            fit_mors(Spectrum(GRID, np.zeros_like(GRID)), INIT)

    def test_grid_must_cover_lines(self):
        narrow = np.linspace(959e3, 961e3, 200)
        with pytest.raises(UsageError):
            fit_mors(mors_spectrum(LADDER, P098, narrow), INIT)

    def test_deterministic(self):
        s = mors_spectrum(LADDER, ZeemanPopulations.spin_temperature(0.6), GRID)
        a, b = fit_mors(s, INIT), fit_mors(s, INIT)
        assert a.populations == b.populations and a.residual == b.residual


def _random_round_trips(noise, n, seed0=0):
    for seed in range(seed0, seed0 + n):
        rng = np.random.default_rng(seed)
        truth = ZeemanPopulations(tuple(rng.dirichlet(np.ones(9))))
        clean = mors_spectrum(LADDER, truth, GRID).values
        data = clean + noise * clean.max() * rng.standard_normal(GRID.size)
        yield truth, fit_mors(Spectrum(GRID, data), INIT)


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore:fitting data that contains negative")
@pytest.mark.xfail(strict=True,
                   reason="1% additive noise: quadratic sensitivity and the global sign symmetry "
                          "put about half of the random vectors outside +-0.01")
def test_random_populations_one_percent_noise():
    for truth, r in _random_round_trips(0.01, 100):
        assert abs(polarization(r.populations) - polarization(truth)) <= 0.01


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore:fitting data that contains negative")
def test_random_populations_low_noise_up_to_sign():
    # |P| is always recovered; P itself whenever the data fix the sign
    for truth, r in _random_round_trips(1e-4, 40):
        p_fit, p_true = polarization(r.populations), polarization(truth)
        assert abs(abs(p_fit) - abs(p_true)) <= 0.01
        if sign_partner(truth) is None:
            assert abs(p_fit - p_true) <= 0.01
        elif abs(p_fit - p_true) > 0.01:
            assert r.sign_ambiguous
