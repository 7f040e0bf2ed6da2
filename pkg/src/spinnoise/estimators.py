"""Scikit-learn style wrappers around the spectral fits.

The physics lives in plain functions elsewhere in the package; these
classes only adapt them to ``fit`` / ``predict`` / ``get_params`` so they
can sit in pipelines, be cloned and be grid-searched over their
hyper-parameters.

``X`` is an array of frequencies in Hz, optionally with a second column
holding the homodyne phase (rad) of each sample.  ``y`` is the PSD in
shot-noise units.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .core import Spectrum
from .exceptions import IndeterminateError, UsageError
from .fitting import EQ1_PARAMS, FitProblem, fit_spectrum, model_psd
from .mors import (
    ZeemanLadder,
    classify_mass,
    fit_mors,
    mors_spectrum,
    polarization,
    thermal_occupancy,
)
from .validation import check_spectrum_xy, hz_to_angular

__all__ = ["SpinNoiseRegressor", "MorsCalibrator"]


def _split_by_phase(freqs, phases, y):
    """Group samples into one spectrum per distinct phase, in order of appearance."""
    if phases is None:
        return [Spectrum(freqs, y)], None
    spectra, phis = [], []
    for ph in dict.fromkeys(phases.tolist()):
        sel = phases == ph
        order = np.argsort(freqs[sel], kind="stable")
        spectra.append(Spectrum(freqs[sel][order], y[sel][order]))
        phis.append(ph)
    return spectra, phis


class SpinNoiseRegressor(RegressorMixin, BaseEstimator):
    """Least-squares fit of the homodyne noise model to measured spectra.

    Constructor arguments are the starting values (angular units) and the
    fit configuration; nothing is computed until :meth:`fit`.

    Parameters
    ----------
    omega_s, gamma_s, readout_rate : float
        Larmor frequency, damping and readout rate (rad/s).
    n_s, eta, phi, s_bb : float
        Occupancy, detection efficiency, homodyne phase used when ``X`` has
        no phase column, broadband floor.
    model : str
        ``"eq1"``, ``"eq1+dc"`` or ``"multi-lorentzian-bb"``.
    free : tuple of str
        Parameters to fit.
    extra : dict, optional
        Values of model parameters not listed above (DC or broadband terms).
    mask : tuple of (fmin_hz, fmax_hz)
        Windows excluded from the fit.

    Attributes
    ----------
    params_ : dict
        Every model parameter after the fit.
    uncertainties_ : dict
        One-sigma errors of the free parameters.
    report_ : FitReport
    """

    def __init__(self, omega_s=2 * math.pi * 18e3, gamma_s=2 * math.pi * 1e3,
                 readout_rate=2 * math.pi * 3.8e3, n_s=0.0, eta=1.0, phi=0.0, s_bb=0.0,
                 model="eq1", free=("readout_rate", "gamma_s", "n_s"), extra=None, mask=()):
        self.omega_s = omega_s
        self.gamma_s = gamma_s
        self.readout_rate = readout_rate
        self.n_s = n_s
        self.eta = eta
        self.phi = phi
        self.s_bb = s_bb
        self.model = model
        self.free = free
        self.extra = extra
        self.mask = mask

    def _init_params(self):
        init = {k: getattr(self, k) for k in EQ1_PARAMS}
        init.update(self.extra or {})
        return init

    def fit(self, X, y, sample_weight=None):
        freqs, phases, y = check_spectrum_xy(X, y)
        spectra, phis = _split_by_phase(freqs, phases, y)
        weights = None
        if sample_weight is not None:
            sw = np.asarray(sample_weight, dtype=float)
            if sw.shape != y.shape:
                raise UsageError("sample_weight must have one entry per sample")
            if phases is None:
                weights = sw
            else:
                weights = np.concatenate(
                    [sw[phases == ph][np.argsort(freqs[phases == ph], kind="stable")]
                     for ph in phis]
                )
        problem = FitProblem(
            data=spectra,
            model=self.model,
            free=tuple(self.free),
            init=self._init_params(),
            weights=weights,
            phases=phis,
            mask=tuple(self.mask),
        )
        self.report_ = fit_spectrum(problem)
        self.params_ = dict(self.report_.params)
        self.params_.pop("phases", None)
        self.uncertainties_ = dict(self.report_.uncertainties)
        self.n_features_in_ = 1 if phases is None else 2
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        freqs, phases, _ = check_spectrum_xy(X)
        phi = self.params_["phi"] if phases is None else phases
        return model_psd(self.model, self.params_, hz_to_angular(freqs), phi=phi)


class MorsCalibrator(BaseEstimator):
    """Sublevel populations and derived spin state from a MORS spectrum.

    Parameters
    ----------
    omega_s, omega_qzs, linewidth : float
        Starting ladder (rad/s).
    free_ladder : bool
    n_refine : int
        Extra sign-pattern starts, see :func:`fit_mors`.
    mass_threshold : float
        ``|P|`` below which the mass sign is left undefined.

    Attributes
    ----------
    ladder_, populations_ : fitted ladder and populations
    polarization_ : float
    mass_sign_ : str or None
        None when ``|P|`` is below ``mass_threshold`` or the fit is
        sign-ambiguous.
    n_s_ : float or None
        Thermal occupancy on the side given by ``mass_sign_``.
    sign_ambiguous_ : bool
    residual_ : float
    """

    def __init__(self, omega_s=2 * math.pi * 960e3, omega_qzs=2 * math.pi * 1e3,
                 linewidth=2 * math.pi * 150.0, free_ladder=True, n_refine=24,
                 mass_threshold=0.05):
        self.omega_s = omega_s
        self.omega_qzs = omega_qzs
        self.linewidth = linewidth
        self.free_ladder = free_ladder
        self.n_refine = n_refine
        self.mass_threshold = mass_threshold

    def fit(self, X, y):
        freqs, phases, y = check_spectrum_xy(X, y)
        if phases is not None:
            raise UsageError("MORS data take a single frequency column")
        ladder = ZeemanLadder(self.omega_s, self.omega_qzs, self.linewidth)
        res = fit_mors(Spectrum(freqs, y), ladder, free_ladder=self.free_ladder,
                       n_refine=self.n_refine)
        self.ladder_ = res.ladder
        self.populations_ = res.populations
        self.residual_ = res.residual
        self.sign_ambiguous_ = res.sign_ambiguous
        self.polarization_ = polarization(res.populations)
        try:
            sign = classify_mass(res.populations, self.mass_threshold)
        except IndeterminateError:
            sign = None
        self.mass_sign_ = None if res.sign_ambiguous else sign
        self.n_s_ = (None if self.mass_sign_ is None
                     else thermal_occupancy(res.populations, self.mass_sign_))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "populations_")
        freqs, _, _ = check_spectrum_xy(X)
        return mors_spectrum(self.ladder_, self.populations_, freqs).values
