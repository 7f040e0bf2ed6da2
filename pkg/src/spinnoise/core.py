"""Spin oscillator state, complex susceptibility and the homodyne noise budget.

All rates and frequencies are angular (rad/s) inside this module.  Grids that
cross the public boundary (:func:`psd_total`, :class:`Spectrum`) are in
ordinary Hz and converted with an explicit factor of 2*pi.

The sign of ``omega_s`` carries the sign of the effective mass; negative
values describe the inverted (negative-mass) spin population.
"""

from dataclasses import dataclass, field, replace
import math

import numpy as np

from .exceptions import DomainError, InstabilityError, UsageError
from .validation import (
    check_finite,
    check_grid,
    check_nonnegative,
    check_positive,
    check_unit_interval,
    hz_to_angular,
)

__all__ = [
    "OscillatorParams",
    "ProbeConfig",
    "TensorConfig",
    "NoiseBudget",
    "Spectrum",
    "susceptibility",
    "dc_susceptibility",
    "budget_terms",
    "psd_total",
    "tensor_coupling",
    "modified_damping",
    "tensor_damped",
]

DC_PHASE_WEIGHTS = ("cos", "sin")


@dataclass(frozen=True)
class OscillatorParams:
    """State of the spin oscillator.

    Parameters
    ----------
    omega_s : float
        Signed Larmor frequency in rad/s. Negative means negative mass.
    gamma_s0 : float
        Intrinsic damping rate (rad/s).
    gamma_s_pb : float
        Probe power-broadening contribution to the damping (rad/s).
    readout_rate : float
        Measurement (readout) rate in rad/s.
    n_s : float
        Thermal occupancy of the oscillator.
    """

    omega_s: float
    gamma_s0: float
    gamma_s_pb: float = 0.0
    readout_rate: float = 0.0
    n_s: float = 0.0

    def __post_init__(self):
        check_finite("omega_s", self.omega_s)
        check_nonnegative("gamma_s0", self.gamma_s0)
        check_nonnegative("gamma_s_pb", self.gamma_s_pb)
        check_nonnegative("readout_rate", self.readout_rate)
        check_nonnegative("n_s", self.n_s)
        if self.readout_rate > 0 and self.gamma_s <= 0:
            raise DomainError("gamma_s must be > 0 when readout_rate > 0")

    @property
    def gamma_s(self):
        """Total damping rate ``gamma_s0 + gamma_s_pb``."""
        return self.gamma_s0 + self.gamma_s_pb

    @property
    def mass_sign(self):
        return "negative" if self.omega_s < 0 else "positive"

    @classmethod
    def from_hz(cls, omega_s_hz, gamma_s0_hz, gamma_s_pb_hz=0.0, readout_hz=0.0, n_s=0.0):
        """Build from ordinary frequencies (value / 2*pi) in Hz."""
        tp = 2.0 * math.pi
        return cls(
            omega_s=tp * omega_s_hz,
            gamma_s0=tp * gamma_s0_hz,
            gamma_s_pb=tp * gamma_s_pb_hz,
            readout_rate=tp * readout_hz,
            n_s=n_s,
        )


@dataclass(frozen=True)
class ProbeConfig:
    """Homodyne measurement channel.

    ``phi = 0`` detects the phase quadrature, ``phi = pi/2`` the amplitude
    quadrature.  ``delta`` is the optical detuning in rad/s; it only matters
    to the detuning planner and may be left at its default elsewhere.
    """

    phi: float = 0.0
    eta: float = 1.0
    alpha: float = math.pi / 4
    delta: float = 2.0 * math.pi * 1.6e9

    def __post_init__(self):
        check_finite("phi", self.phi)
        check_unit_interval("eta", self.eta)
        check_finite("alpha", self.alpha)
        check_positive("delta", self.delta)


@dataclass(frozen=True)
class TensorConfig:
    """Tensor (alignment) coupling and the zero-frequency noise it produces.

    Parameters
    ----------
    a2_over_a1 : float
        Tensor to vector polarizability ratio at the working detuning.
    dc_weight : float
        Strength ``D`` of the detuning law ``S_DC = D / delta**r``.
    dc_exponent : float
        Exponent ``r`` of that law, in [4, 6].
    dc_halfwidth : float
        Half width (rad/s) of the zero-centred Lorentzian.
    dc_phase : {"cos", "sin"}
        Quadrature weighting of the DC term: ``cos(phi)**2`` (default) or
        ``sin(phi)**2``.  Which one describes the data is not settled; see
        the README.
    """

    a2_over_a1: float = 0.0
    dc_weight: float = 0.0
    dc_exponent: float = 5.0
    dc_halfwidth: float = 2.0 * math.pi * 5e3
    dc_phase: str = "cos"

    def __post_init__(self):
        check_finite("a2_over_a1", self.a2_over_a1)
        check_nonnegative("dc_weight", self.dc_weight)
        check_finite("dc_exponent", self.dc_exponent)
        if not 4.0 <= self.dc_exponent <= 6.0:
            raise DomainError(f"dc_exponent must lie in [4, 6], got {self.dc_exponent}")
        check_positive("dc_halfwidth", self.dc_halfwidth)
        if self.dc_phase not in DC_PHASE_WEIGHTS:
            raise DomainError(f"dc_phase must be one of {DC_PHASE_WEIGHTS}")


NO_TENSOR = TensorConfig()


@dataclass(frozen=True)
class NoiseBudget:
    """Per-frequency terms of the detected PSD in shot-noise units.

    Each field is a float or an array broadcast against the frequency grid.
    """

    sn: object
    qban: object
    corr: object
    tn: object
    bb: object
    dc: object

    @property
    def total(self):
        return self.sn + self.qban + self.corr + self.tn + self.bb + self.dc

    def as_dict(self):
        return {
            "sn": self.sn,
            "qban": self.qban,
            "corr": self.corr,
            "tn": self.tn,
            "bb": self.bb,
            "dc": self.dc,
            "total": self.total,
        }


@dataclass(frozen=True)
class Spectrum:
    """PSD samples on a strictly increasing grid of ordinary frequencies (Hz).

    Negative samples are tolerated (calibrated measurements can dip below
    zero after background subtraction) and flagged through
    :attr:`has_negative`.
    """

    freqs: np.ndarray
    values: np.ndarray
    has_negative: bool = field(init=False)

    def __post_init__(self):
        freqs = check_grid(self.freqs, "freqs")
        values = np.asarray(self.values, dtype=float)
        if values.shape != freqs.shape:
            raise UsageError(
                f"freqs and values differ in length ({freqs.size} vs {values.size})"
            )
        if not np.all(np.isfinite(values)):
            raise UsageError("spectrum values must be finite")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "has_negative", bool(np.any(values < 0)))

    @property
    def omega(self):
        return hz_to_angular(self.freqs)

    def __len__(self):
        return self.freqs.size


def _chi(omega_s, gamma_s, omega):
    return omega_s / ((0.5 * gamma_s - 1j * omega) ** 2 + omega_s**2)


def susceptibility(params, omega):
    """Complex spin susceptibility ``Omega_S / ((gamma_S/2 - i Omega)**2 + Omega_S**2)``.

    Parameters
    ----------
    params : OscillatorParams
    omega : float or array_like
        Angular Fourier frequency (rad/s); may be zero or negative.

    Returns
    -------
    complex or ndarray of complex, in 1/(rad/s).
    """
    check_finite("omega", omega)
    return _chi(params.omega_s, params.gamma_s, np.asarray(omega, dtype=float)[()])


def dc_susceptibility(tensor, omega):
    """Zero-centred Lorentzian response ``1 / (kappa - i Omega)``.

    ``kappa`` is the configured half width, so ``kappa * chi_dc`` has unit
    magnitude at zero frequency and ``|chi_dc|**2`` is a Lorentzian of half
    width ``kappa`` with the same 1/(rad/s) units as the spin susceptibility.
    """
    return 1.0 / (tensor.dc_halfwidth - 1j * np.asarray(omega, dtype=float)[()])


def budget_terms(params, probe, tensor=None, omega=0.0, s_bb=0.0):
    """Decompose the detected PSD into its noise contributions.

    Parameters
    ----------
    params : OscillatorParams
    probe : ProbeConfig
    tensor : TensorConfig, optional
        ``None`` switches the DC term off.
    omega : float or array_like
        Angular Fourier frequency (rad/s).
    s_bb : float or array_like
        Broadband spin-response floor in shot-noise units before the
        ``eta * cos(phi)**2`` weighting.

    Returns
    -------
    NoiseBudget
    """
    check_finite("omega", omega)
    check_finite("s_bb", s_bb)
    return _budget(params, probe.eta, probe.phi, tensor, omega, s_bb)


def _trig(phi):
    """``cos`` and ``sin`` of ``phi`` with rounding residue at the quadrature points set to 0."""
    c, s = np.cos(phi), np.sin(phi)
    tol = 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(phi))
    return np.where(np.abs(c) < tol, 0.0, c)[()], np.where(np.abs(s) < tol, 0.0, s)[()]


def _budget(params, eta, phi, tensor, omega, s_bb=0.0):
    # vectorized over phi and omega (broadcast together)
    if tensor is None:
        tensor = NO_TENSOR
    omega = np.asarray(omega, dtype=float)[()]
    phi = np.asarray(phi, dtype=float)[()]
    chi = _chi(params.omega_s, params.gamma_s, omega)
    abs2 = np.abs(chi) ** 2
    g = params.readout_rate
    c, s = _trig(phi)
    cos2 = c**2
    sin2phi = 2.0 * s * c

    qban = 4.0 * eta * g**2 * abs2 * cos2
    corr = 2.0 * eta * g * np.real(chi) * sin2phi
    tn = 4.0 * eta * 2.0 * params.gamma_s * g * abs2 * (params.n_s + 0.5) * cos2
    shape = np.ones_like(qban)
    bb = eta * np.asarray(s_bb, dtype=float) * cos2 * shape

    if tensor.a2_over_a1 != 0.0:
        weight = cos2 if tensor.dc_phase == "cos" else s**2
        chi_dc = dc_susceptibility(tensor, omega)
        dc = eta * tensor.a2_over_a1**2 * g**2 * np.abs(chi_dc) ** 2 * weight * shape
    else:
        dc = np.zeros_like(qban)

    return NoiseBudget(
        sn=shape[()], qban=qban[()], corr=(corr * shape)[()], tn=tn[()], bb=bb[()], dc=dc[()]
    )


def psd_total(params, probe, tensor=None, s_bb=0.0, freq_grid=None):
    """Detected PSD (shot-noise units) on a grid of ordinary frequencies in Hz."""
    if freq_grid is None:
        raise UsageError("freq_grid is required")
    freqs = check_grid(freq_grid)
    budget = budget_terms(params, probe, tensor, hz_to_angular(freqs), s_bb)
    return Spectrum(freqs, np.asarray(budget.total, dtype=float))


def tensor_coupling(alpha, a2_over_a1):
    """Strength of the alignment term that spoils the QND interaction.

    Returns ``-14 * a2_over_a1 * cos(2 * alpha)``; it vanishes at
    ``alpha = pi/4``.
    """
    check_finite("alpha", alpha)
    check_finite("a2_over_a1", a2_over_a1)
    return -14.0 * a2_over_a1 * np.cos(2.0 * np.asarray(alpha, dtype=float))[()]


def modified_damping(params, e_s):
    """Damping rate ``gamma_s + 2 * e_s * readout_rate`` under tensor coupling.

    Raises
    ------
    InstabilityError
        If the result is not positive; the oscillator would be amplified
        rather than damped.  The value is reported, never clamped.
    """
    check_finite("e_s", e_s)
    gamma_eff = params.gamma_s + 2.0 * e_s * params.readout_rate
    if gamma_eff <= 0:
        raise InstabilityError(
            f"modified damping {gamma_eff:.6g} rad/s is not positive "
            f"(self-oscillation regime, e_s={e_s:.6g})",
            gamma_eff=gamma_eff,
        )
    return gamma_eff


def tensor_damped(params, probe, tensor):
    """Copy of ``params`` whose probe broadening absorbs the tensor damping."""
    e_s = tensor_coupling(probe.alpha, tensor.a2_over_a1)
    gamma_eff = modified_damping(params, e_s)
    if gamma_eff >= params.gamma_s0:
        return replace(params, gamma_s_pb=gamma_eff - params.gamma_s0)
    # tensor cooling below the intrinsic rate
    return replace(params, gamma_s0=gamma_eff, gamma_s_pb=0.0)
