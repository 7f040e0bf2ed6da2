import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import rel_noise
from spinnoise.core import OscillatorParams, ProbeConfig, psd_total
from spinnoise.estimators import MorsCalibrator, SpinNoiseRegressor
from spinnoise.exceptions import UsageError
from spinnoise.mors import ZeemanLadder, ZeemanPopulations, mors_spectrum

TP = 2 * math.pi
GRID = np.linspace(1e3, 35e3, 2000)
OSC = OscillatorParams.from_hz(18e3, 1e3, 0.0, 3.8e3, 3.5)
PHI_OPT = -1.45


def stacked(noise=0.0):
    xs, ys = [], []
    for k, phi in enumerate((0.0, PHI_OPT)):
        y = psd_total(OSC, ProbeConfig(phi=phi, eta=0.92), freq_grid=GRID).values
        xs.append(np.column_stack([GRID, np.full(GRID.size, phi)]))
        ys.append(rel_noise(y, noise, k) if noise else y)
    return np.vstack(xs), np.concatenate(ys)


def make_regressor(**kw):
    base = dict(omega_s=TP * 18e3, gamma_s=TP * 1.3e3, readout_rate=TP * 3e3, n_s=2.0, eta=0.92)
    base.update(kw)
    return SpinNoiseRegressor(**base)


class TestRegressor:
    def test_params_round_trip(self):
        est = make_regressor(free=("readout_rate",))
        assert clone(est).get_params() == est.get_params()
        est.set_params(n_s=1.0)
        assert est.n_s == 1.0

    def test_fit_two_phases(self):
        X, y = stacked()
        est = make_regressor().fit(X, y)
        assert est.params_["readout_rate"] == pytest.approx(OSC.readout_rate, rel=1e-6)
        assert est.params_["gamma_s"] == pytest.approx(OSC.gamma_s, rel=1e-6)
        assert est.params_["n_s"] == pytest.approx(3.5, rel=1e-6)
        np.testing.assert_allclose(est.predict(X), y, rtol=1e-6)
        assert est.score(X, y) == pytest.approx(1.0, abs=1e-9)

    def test_shuffled_rows(self):
        X, y = stacked(0.01)
        order = np.random.default_rng(0).permutation(y.size)
        a = make_regressor().fit(X, y)
        b = make_regressor().fit(X[order], y[order])
        for k in ("readout_rate", "gamma_s", "n_s"):
            assert b.params_[k] == pytest.approx(a.params_[k], rel=1e-8)

    def test_sample_weight_shape(self):
        X, y = stacked()
        with pytest.raises(UsageError):
            make_regressor().fit(X, y, sample_weight=np.ones(3))
        est = make_regressor().fit(X, y, sample_weight=np.ones(y.size))
        assert est.report_.residual_rss < 1e-12

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            make_regressor().predict(GRID)

    def test_bad_input(self):
        with pytest.raises(UsageError):
            make_regressor().fit(np.ones((4, 3)), np.ones(4))
        with pytest.raises(UsageError):
            make_regressor().fit(GRID, np.ones(3))


class TestMorsCalibrator:
    ladder = ZeemanLadder(TP * 960e3, TP * 1e3, TP * 150.0)
    grid = np.linspace(950.5e3, 969.5e3, 2000)

    def test_fit(self):
        truth = ZeemanPopulations.spin_temperature(0.98)
        y = mors_spectrum(self.ladder, truth, self.grid).values
        est = MorsCalibrator(omega_s=TP * 960.05e3, omega_qzs=TP * 1.02e3,
                             linewidth=TP * 170.0).fit(self.grid, y)
        assert est.polarization_ == pytest.approx(0.98, abs=0.005)
        assert est.mass_sign_ == "negative"
        assert not est.sign_ambiguous_
        assert est.n_s_ == pytest.approx(0.08, abs=0.02)
        np.testing.assert_allclose(est.predict(self.grid), y, rtol=1e-4, atol=1e-8 * y.max())

    def test_ambiguous_leaves_mass_undetermined(self):
        p = np.full(9, 1 / 9) + 0.01 * np.linspace(-1, 1, 9)
        y = mors_spectrum(self.ladder, p, self.grid).values
        est = MorsCalibrator(n_refine=4).fit(self.grid, y)
        assert est.sign_ambiguous_
        assert est.mass_sign_ is None and est.n_s_ is None

    def test_rejects_phase_column(self):
        with pytest.raises(UsageError):
            MorsCalibrator().fit(np.ones((5, 2)), np.ones(5))

    def test_clone(self):
        est = MorsCalibrator(mass_threshold=0.1)
        assert clone(est).mass_threshold == 0.1
