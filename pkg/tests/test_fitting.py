import math

import numpy as np
import pytest
from scipy.optimize import least_squares

from conftest import rel_noise
from spinnoise.core import OscillatorParams, ProbeConfig, Spectrum, psd_total
from spinnoise.exceptions import RankDeficiencyError, UsageError
from spinnoise.fitting import (
    EQ1_PARAMS,
    FitProblem,
    fit_spectrum,
    levenberg_marquardt,
    model_parameters,
    model_psd,
)
from spinnoise.squeeze import optimize_squeezing

TP = 2 * math.pi
GRID = np.linspace(1e3, 35e3, 4000)
TRUTH = dict(omega_s=TP * 18e3, gamma_s=TP * 1e3, readout_rate=TP * 3.8e3, n_s=3.5, eta=0.92,
             phi=0.0, s_bb=0.0)
START = dict(TRUTH, readout_rate=TP * 3e3, gamma_s=TP * 1.3e3, n_s=2.0)
FREE = ("readout_rate", "gamma_s", "n_s")


def synth(phi=0.0, params=TRUTH, grid=GRID):
    p = OscillatorParams(params["omega_s"], params["gamma_s"], 0.0, params["readout_rate"],
                         params["n_s"])
    return psd_total(p, ProbeConfig(phi=phi, eta=params["eta"]), s_bb=params["s_bb"],
                     freq_grid=grid)


def phi_opt():
    p = OscillatorParams(TRUTH["omega_s"], TRUTH["gamma_s"], 0.0, TRUTH["readout_rate"],
                         TRUTH["n_s"])
    return optimize_squeezing(p, ProbeConfig(eta=TRUTH["eta"])).phi_opt


def joint_problem(noise, seed, free=FREE):
    po = phi_opt()
    specs = []
    for k, ph in enumerate((0.0, po)):
        s = synth(ph)
        specs.append(Spectrum(s.freqs, rel_noise(s.values, noise, seed * 2 + k)) if noise else s)
    return FitProblem(data=specs, free=free, init=START, phases=(0.0, po))


def rel_errors(rep):
    return np.array([abs(rep.params[k] / TRUTH[k] - 1) for k in FREE])


class TestEngine:
    def test_matches_reference_solver(self):
        t = np.linspace(0, 3, 50)
        y = 2.5 * np.exp(-1.3 * t) + 0.4 + 0.01 * np.sin(17 * t)

        def fun(x):
            return x[0] * np.exp(-x[1] * t) + x[2] - y

        ours = levenberg_marquardt(fun, np.array([1.0, 1.0, 0.0]), np.full(3, -np.inf),
                                   np.full(3, np.inf))
        ref = least_squares(fun, [1.0, 1.0, 0.0], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        np.testing.assert_allclose(ours.x, ref.x, rtol=1e-6)
        assert ours.converged

    def test_bounds_projection_reported(self):
        t = np.linspace(0, 3, 50)
        y = 2.0 * np.exp(-1.0 * t) - 0.3

        def fun(x):
            return x[0] * np.exp(-x[1] * t) + x[2] - y

        r = levenberg_marquardt(fun, np.array([1.0, 2.0, 0.5]), np.array([0.0, 0.0, 0.0]),
                                np.full(3, np.inf), names=("a", "k", "c"))
        assert r.x[2] == 0.0
        assert "c" in r.projected

    def test_rank_deficiency_names_parameters(self):
        t = np.linspace(0, 1, 20)

        def fun(x):
            return (x[0] * x[1]) * t - 2 * t

        with pytest.raises(RankDeficiencyError) as info:
            levenberg_marquardt(fun, np.array([1.0, 1.0]), np.full(2, -np.inf), np.full(2, np.inf),
                                names=("p", "q"))
        assert set(info.value.parameters) == {"p", "q"}


class TestModels:
    def test_eq1_matches_core(self):
        s = synth(0.4)
        np.testing.assert_allclose(model_psd("eq1", TRUTH, s.omega, phi=0.4), s.values, rtol=1e-14)

    def test_parameter_lists(self):
        assert model_parameters("eq1") == EQ1_PARAMS
        assert "a2_over_a1" in model_parameters("eq1+dc")
        names = model_parameters("multi-lorentzian-bb", dict(bb_height_1=1, bb_width_1=1,
                                                             bb_height_2=1, bb_width_2=1))
        assert names[-4:] == ("bb_height_1", "bb_width_1", "bb_height_2", "bb_width_2")
        with pytest.raises(UsageError):
            model_parameters("eq9")

    def test_multi_lorentzian_floor(self):
        params = dict(TRUTH, readout_rate=0.0, bb_height_1=2.0, bb_width_1=TP * 500.0)
        v = model_psd("multi-lorentzian-bb", params, np.array([TRUTH["omega_s"]]), phi=0.0)
        assert v[0] == pytest.approx(1 + 0.92 * 2.0)


class TestFit:
    def test_zero_noise_exact(self):
        rep = fit_spectrum(joint_problem(0.0, 0))
        assert rep.residual_rss < 1e-12
        np.testing.assert_allclose(rel_errors(rep), 0, atol=1e-6)
        assert rep.converged

    def test_one_percent_noise_joint(self):
        for seed in range(5):
            rep = fit_spectrum(joint_problem(0.01, seed))
            assert np.all(rel_errors(rep) <= 0.02)
            sig = np.array([rep.uncertainties[k] / TRUTH[k] for k in FREE])
            assert np.all(sig > 0) and np.all(sig < 0.02)

    def test_single_phase_quadrature_is_degenerate(self):
        # at phi = 0 back-action and thermal noise share the |chi|**2 shape
        s = Spectrum(GRID, rel_noise(synth(0.0).values, 0.01, 1))
        with pytest.raises(RankDeficiencyError) as info:
            fit_spectrum(FitProblem(data=s, free=FREE, init=START))
        assert {"readout_rate", "n_s"} <= set(info.value.parameters)

    @pytest.mark.xfail(strict=True, raises=RankDeficiencyError,
                       reason="readout and occupancy are not separable at phi = 0 alone")
    def test_single_phase_quadrature_round_trip(self):
        s = Spectrum(GRID, rel_noise(synth(0.0).values, 0.01, 1))
        rep = fit_spectrum(FitProblem(data=s, free=FREE, init=START))
        assert np.all(rel_errors(rep) <= 0.02)

    def test_eta_readout_degenerate(self):
        with pytest.raises(RankDeficiencyError) as info:
            fit_spectrum(FitProblem(data=synth(0.0), free=("eta", "readout_rate"), init=START))
        assert set(info.value.parameters) == {"eta", "readout_rate"}

    def test_single_spectrum_off_quadrature(self):
        po = phi_opt()
        s = synth(po)
        rep = fit_spectrum(FitProblem(data=s, free=FREE, init=dict(START, phi=po)))
        np.testing.assert_allclose(rel_errors(rep), 0, atol=1e-6)

    def test_deterministic(self):
        a = fit_spectrum(joint_problem(0.01, 3))
        b = fit_spectrum(joint_problem(0.01, 3))
        assert a == b

    def test_error_shrinks_with_noise(self):
        means = []
        for level in (0.03, 0.01, 0.003):
            errs = [rel_errors(fit_spectrum(joint_problem(level, s))) for s in range(6)]
            means.append(np.mean(errs, axis=0))
        assert np.all(means[0] > means[1]) and np.all(means[1] > means[2])

    def test_relative_weighting_narrow_line(self):
        # narrow line, C_q = 3: uniform weights let the shot-noise wings dominate
        truth = dict(TRUTH, gamma_s=TP * 3.8e3 / 24)
        po = optimize_squeezing(OscillatorParams(truth["omega_s"], truth["gamma_s"], 0.0,
                                                 truth["readout_rate"], truth["n_s"]),
                                ProbeConfig(eta=truth["eta"])).phi_opt
        errs = {}
        for w in (None, "relative"):
            worst = 0.0
            for seed in range(4):
                specs = [Spectrum(GRID, rel_noise(synth(ph, truth).values, 0.01, 50 + 2 * seed + k))
                         for k, ph in enumerate((0.0, po))]
                rep = fit_spectrum(FitProblem(data=specs, free=FREE, init=dict(truth, n_s=2.0),
                                              phases=(0.0, po), weights=w))
                worst = max(worst, max(abs(rep.params[k] / truth[k] - 1) for k in FREE))
            errs[w] = worst
        assert errs["relative"] < 0.01
        assert errs["relative"] < errs[None]

    @pytest.mark.filterwarnings("ignore:fitting data that contains negative")
    @pytest.mark.parametrize("weights,match", [("inverse", "unknown weighting"),
                                               ("relative", "strictly positive")])
    def test_relative_weighting_errors(self, weights, match):
        s = synth(0.3)
        data = Spectrum(s.freqs, s.values - (weights == "relative") * 2.0)
        with pytest.raises(UsageError, match=match):
            fit_spectrum(FitProblem(data=data, free=FREE, init=dict(START, phi=0.3), weights=weights))

    def test_mask_and_weights(self):
        prob = joint_problem(0.0, 0)
        prob.mask = ((17e3, 19e3),)
        rep = fit_spectrum(prob)
        n_masked = 2 * int(np.sum((GRID >= 17e3) & (GRID <= 19e3)))
        assert rep.n_points == 2 * GRID.size - n_masked
        prob = joint_problem(0.0, 0)
        prob.weights = np.ones(2 * GRID.size)
        assert fit_spectrum(prob).residual_rss < 1e-12
        prob.weights = np.ones(3)
        with pytest.raises(UsageError):
            fit_spectrum(prob)

    def test_projection_at_zero_occupancy(self):
        truth = dict(TRUTH, n_s=0.0)
        po = phi_opt()
        specs = [synth(0.0, truth), Spectrum(GRID, synth(po, truth).values - 0.002)]
        rep = fit_spectrum(FitProblem(data=specs, free=FREE, init=START, phases=(0.0, po)))
        assert rep.params["n_s"] == 0.0
        assert "n_s" in rep.projected

    def test_negative_data_flag(self):
        s = synth(0.0)
        vals = s.values.copy()
        vals[0] = -0.1
        with pytest.warns(UserWarning, match="negative"):
            rep = fit_spectrum(FitProblem(data=[Spectrum(GRID, vals), synth(phi_opt())],
                                          free=FREE, init=START, phases=(0.0, phi_opt())))
        assert rep.negative_data

    @pytest.mark.parametrize("kw,match", [
        (dict(free=()), "free"),
        (dict(free=("bogus",)), "bogus"),
        (dict(init=dict(START, n_s=-1.0)), "bounds"),
        (dict(phases=(0.0,)), "phase"),
    ])
    def test_usage_errors(self, kw, match):
        base = dict(data=[synth(0.0), synth(0.3)], free=FREE, init=START, phases=(0.0, 0.3))
        base.update(kw)
        with pytest.raises(UsageError, match=match):
            fit_spectrum(FitProblem(**base))

    def test_dc_model_recovers_amplitude(self):
        init = dict(TRUTH, a2_over_a1=0.02, dc_halfwidth=TP * 3e3)
        s = model_psd("eq1+dc", init, TP * GRID, phi=0.0)
        start = dict(init, a2_over_a1=0.01, dc_halfwidth=TP * 5e3)
        rep = fit_spectrum(FitProblem(data=Spectrum(GRID, s), model="eq1+dc",
                                      free=("a2_over_a1", "dc_halfwidth"), init=start))
        assert rep.params["a2_over_a1"] == pytest.approx(0.02, rel=1e-6)
        assert rep.params["dc_halfwidth"] == pytest.approx(TP * 3e3, rel=1e-6)
