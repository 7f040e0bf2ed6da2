"""Quantum noise of a free-mass interferometer alone and read out jointly with a spin oscillator.

This is a simplified lossless model.  Every spectrum is normalized to the
standard quantum limit (SQL = 1 at all frequencies), the interferometer is a
free mass with coupling factor ``K_I = (omega_qi / omega)**2`` and squeezing
enters as an ideal broadband factor ``exp(-2 r)``.  Losses, filter cavities
and readout-quadrature optimization are not modelled.
"""

from dataclasses import dataclass
import math

import numpy as np

from .exceptions import DivergenceError, DomainError
from .squeeze import EffectiveOscillator
from .validation import check_finite, check_grid, check_nonnegative, check_positive, hz_to_angular

__all__ = [
    "GwdConfig",
    "DEFAULT_SPIN_HZ",
    "squeeze_factor",
    "k_interferometer",
    "k_spin",
    "interferometer_noise",
    "joint_noise",
    "projection_curves",
]

# bare spin frequency for mismatch studies (|Omega_S| / 2 pi, Hz)
DEFAULT_SPIN_HZ = 76.0


@dataclass(frozen=True)
class GwdConfig:
    """Interferometer and spin parameters of the joint projection.

    Parameters
    ----------
    omega_qi : float
        Interferometer coupling rate (rad/s), where ``K_I = 1``.
    squeeze_db : float
        Injected squeezing in dB (single-mode for the interferometer alone,
        two-mode for the joint readout).
    c_q : float
        Spin cooperativity at zero occupancy, ``readout_rate / gamma_s``.
        ``math.inf`` means no spin thermal noise at all.
    n_s : float
        Spin thermal occupancy; the effective cooperativity is
        ``c_q / (1 + 2 n_s)``.
    spin : EffectiveOscillator, optional
        Enables mismatch mode in :func:`joint_noise`.
    """

    omega_qi: float
    squeeze_db: float = 0.0
    c_q: float = math.inf
    n_s: float = 0.0
    spin: EffectiveOscillator = None

    def __post_init__(self):
        check_positive("omega_qi", self.omega_qi)
        check_nonnegative("squeeze_db", self.squeeze_db)
        if math.isnan(self.c_q) or self.c_q < 0:
            raise DomainError(f"c_q must be >= 0, got {self.c_q}")
        check_nonnegative("n_s", self.n_s)

    @property
    def c_q_eff(self):
        return self.c_q / (1.0 + 2.0 * self.n_s)


def squeeze_factor(squeeze_db):
    """``exp(-2 r) = 10**(-squeeze_db / 10)``."""
    return 10.0 ** (-squeeze_db / 10.0)


def _omega(omega):
    omega = np.asarray(omega, dtype=float)
    check_finite("omega", omega)
    if np.any(omega == 0):
        raise DivergenceError("free-mass response diverges at omega = 0")
    return omega


def k_interferometer(omega, omega_qi):
    """Free-mass coupling factor ``(omega_qi / omega)**2``."""
    omega = _omega(omega)
    check_positive("omega_qi", omega_qi)
    return ((omega_qi / omega) ** 2)[()]


def k_spin(omega, spin):
    """Coupling factor of the effective spin oscillator.

    ``readout_eff * |omega_s| / |omega_eff**2 - omega**2 - i gamma_s omega|``.
    """
    omega = _omega(omega)
    denom = np.abs(spin.omega_eff**2 - omega**2 - 1j * spin.gamma_s * omega)
    return (spin.readout_eff * abs(spin.omega_s) / denom)[()]


def interferometer_noise(omega, config):
    """SQL-normalized noise of the interferometer alone.

    ``0.5 * (e^{2r} K_I + e^{-2r} / K_I)`` with phase-squeezed input; the
    back-action branch is anti-squeezed.
    """
    k = k_interferometer(omega, config.omega_qi)
    s = squeeze_factor(config.squeeze_db)
    return 0.5 * (k / s + s / k)


def joint_noise(omega, config):
    """SQL-normalized noise of the joint interferometer and spin readout.

    Matched mode (``config.spin is None``): the spin cancels back-action
    exactly and

        ``0.5 * (K_I + 1/K_I) * (e^{-2r} + 1/C_q)``.

    Mismatch mode: with ``K_S`` from :func:`k_spin`,

        ``0.5 * [(K_I + 1/K_I) (e^{-2r} + 1/C_q) + cosh(2r) (sqrt(K_I) - sqrt(K_S))**2]``.

    The thermal penalty keeps the matched spectral shape in both modes, so
    mismatch mode with ``K_S == K_I`` gives the matched value.

    Raises
    ------
    DivergenceError
        ``omega == 0`` or an effective cooperativity of zero.
    """
    k = k_interferometer(omega, config.omega_qi)
    c_eff = config.c_q_eff
    if c_eff == 0:
        raise DivergenceError("thermal penalty 1/C_q diverges at C_q = 0")
    s = squeeze_factor(config.squeeze_db)
    base = (k + 1.0 / k) * (s + 1.0 / c_eff)
    if config.spin is None:
        return 0.5 * base
    cosh2r = 0.5 * (s + 1.0 / s)
    mismatch = cosh2r * (np.sqrt(k) - np.sqrt(k_spin(omega, config.spin))) ** 2
    return 0.5 * (base + mismatch)


def projection_curves(freq_grid, config, n_s_thermal=2.0):
    """The four curve families of the joint projection on a grid in Hz.

    Returns a dict of SQL-normalized arrays: ``qn`` (plain interferometer),
    ``squeezed`` (interferometer with ``config.squeeze_db``), ``joint``
    (matched joint readout at ``config.n_s``) and ``joint_thermal`` (the
    same at ``n_s_thermal``).
    """
    freqs = check_grid(freq_grid)
    omega = hz_to_angular(freqs)
    plain = GwdConfig(config.omega_qi)
    matched = GwdConfig(config.omega_qi, config.squeeze_db, config.c_q, config.n_s)
    thermal = GwdConfig(config.omega_qi, config.squeeze_db, config.c_q, n_s_thermal)
    return {
        "qn": interferometer_noise(omega, plain),
        "squeezed": interferometer_noise(omega, config),
        "joint": joint_noise(omega, matched),
        "joint_thermal": joint_noise(omega, thermal),
    }
