"""Ponderomotive squeezing and the virtual frequency shift.

Correlations between shot noise and back-action noise let a homodyne
detector at ``phi != 0, pi/2`` see less than shot noise, and make the
oscillator look softer (or stiffer) to forces read out in the light.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.ndimage import minimum_filter
from scipy.optimize import minimize

from .core import Spectrum, _budget, _chi
from .exceptions import DivergenceError, DomainError, OverSofteningError, UsageError
from .validation import check_finite, check_grid, check_unit_interval, hz_to_angular

__all__ = [
    "SqueezeResult",
    "EffectiveOscillator",
    "cooperativity",
    "max_squeezing",
    "to_db",
    "default_search_domain",
    "optimize_squeezing",
    "effective_oscillator",
    "effective_susceptibility",
    "force_normalized_spectrum",
]

# basins of the coarse scan that get a local polish
N_BASINS = 4


def to_db(value):
    """Power ratio in decibels."""
    return 10.0 * np.log10(value)


@dataclass(frozen=True)
class SqueezeResult:
    phi_opt: float
    omega_opt: float
    s_min: float
    analytic_bound: float

    @property
    def s_min_db(self):
        return float(to_db(self.s_min))

    @property
    def analytic_bound_db(self):
        return float(to_db(self.analytic_bound))


@dataclass(frozen=True)
class EffectiveOscillator:
    """Oscillator as seen through the light at a given homodyne phase.

    ``omega_s`` is the bare frequency, ``omega_eff`` the shifted one (same
    sign), ``readout_eff = readout_rate * cos(phi)**2``.
    """

    omega_s: float
    omega_eff: float
    gamma_s: float
    readout_eff: float

    @property
    def shift(self):
        """Change of the resonance magnitude; negative for a downshift."""
        return abs(self.omega_eff) - abs(self.omega_s)


def cooperativity(params):
    """Quantum cooperativity ``readout / (gamma_s * (1 + 2 n_s))``."""
    if params.gamma_s <= 0:
        raise DomainError("cooperativity needs gamma_s > 0")
    return params.readout_rate / (params.gamma_s * (1.0 + 2.0 * params.n_s))


def max_squeezing(c_q, eta):
    """Best squeezing ``1 - eta * C_q / (C_q + 1)`` in shot-noise units.

    Valid when damping is much smaller than both the readout rate and the
    Larmor frequency.  ``c_q = inf`` gives the ``1 - eta`` floor.
    """
    if np.isnan(c_q) or c_q < 0:
        raise DomainError(f"c_q must be >= 0, got {c_q}")
    check_unit_interval("eta", eta)
    if np.isinf(c_q):
        return 1.0 - eta
    return 1.0 - eta * c_q / (c_q + 1.0)


def default_search_domain(params):
    """Phase window (-pi/2, pi/2] and a frequency window around |Omega_S|."""
    center = abs(params.omega_s)
    half = max(2.0 * params.readout_rate, 10.0 * params.gamma_s, 0.05 * center)
    lo = max(center - half, 1e-3 * center)
    return (-math.pi / 2, math.pi / 2), (lo, center + half)


def optimize_squeezing(params, probe, tensor=None, s_bb=0.0, search_domain=None, grid=(201, 201),
                       tol=1e-12):
    """Find the homodyne phase and Fourier frequency of the deepest squeezing.

    A deterministic ``grid[0] x grid[1]`` scan over ``search_domain`` is
    followed by a Nelder-Mead polish, in coordinates scaled to the grid
    cell, of the lowest few local minima of the scan.  Near-degenerate
    optima at opposite phase signs are therefore both refined; ``tol`` is
    its function tolerance in shot-noise units.

    Parameters
    ----------
    params : OscillatorParams
    probe : ProbeConfig
        Only ``eta`` is used; ``phi`` is the variable being optimized.
    tensor : TensorConfig, optional
    s_bb : float
    search_domain : ((phi_lo, phi_hi), (omega_lo, omega_hi)), optional
        Angles in rad, frequencies in rad/s.  Defaults to
        :func:`default_search_domain`.
    grid : (int, int)
    tol : float

    Returns
    -------
    SqueezeResult
    """
    if search_domain is None:
        search_domain = default_search_domain(params)
    (phi_lo, phi_hi), (w_lo, w_hi) = search_domain
    for v in (phi_lo, phi_hi, w_lo, w_hi):
        check_finite("search_domain", v)
    if not (phi_hi > phi_lo and w_hi > w_lo):
        raise UsageError(f"empty search domain {search_domain!r}")
    n_phi, n_w = grid
    if n_phi < 2 or n_w < 2:
        raise UsageError("grid needs at least 2 points per axis")

    eta = probe.eta

    def total(phi, w):
        return _budget(params, eta, phi, tensor, w, s_bb).total

    phis = np.linspace(phi_lo, phi_hi, n_phi)
    ws = np.linspace(w_lo, w_hi, n_w)
    surface = total(phis[:, None], ws[None, :])
    dphi = phis[1] - phis[0]
    dw = ws[1] - ws[0]
    i, j = np.unravel_index(np.argmin(surface), surface.shape)
    phi, w, best = float(phis[i]), float(ws[j]), float(surface[i, j])

    if np.ptp(surface) > 0:
        # polish the lowest few basins of the scan in cell-scaled coordinates
        local = surface == minimum_filter(surface, size=3, mode="nearest")
        idx = np.flatnonzero(local)
        idx = idx[np.argsort(surface.flat[idx])][:N_BASINS]
        bounds = [(phi_lo / dphi, phi_hi / dphi), (w_lo / dw, w_hi / dw)]
        for k in idx:
            a, b = np.unravel_index(k, surface.shape)
            r = minimize(
                lambda x: float(total(x[0] * dphi, x[1] * dw)),
                x0=[phis[a] / dphi, ws[b] / dw],
                method="Nelder-Mead",
                bounds=bounds,
                options={"xatol": 1e-7, "fatol": tol, "maxiter": 4000},
            )
            if r.fun < best:
                phi, w, best = float(r.x[0] * dphi), float(r.x[1] * dw), float(r.fun)

    if params.gamma_s > 0:
        bound = max_squeezing(cooperativity(params), eta)
    else:
        bound = 1.0 if params.readout_rate == 0 else 1.0 - eta
    return SqueezeResult(float(phi), float(w), float(total(phi, w)), float(bound))


def effective_oscillator(params, phi):
    """Resonance and readout rate of the oscillator as seen at phase ``phi``.

    ``omega_eff = omega_s * sqrt(1 + readout * sin(2 phi) / omega_s)``; the
    resonance moves down whenever ``-pi/2 < phi * sign(omega_s) < 0``.

    Raises
    ------
    OverSofteningError
        When the radicand is negative.  ``critical_phi`` on the exception is
        the phase at which ``omega_eff`` reaches zero.
    """
    check_finite("phi", phi)
    if params.omega_s == 0:
        raise DomainError("omega_s must be non-zero")
    g = params.readout_rate
    s2 = math.sin(2.0 * phi)
    radicand = 1.0 + g * s2 / params.omega_s
    if abs(radicand) < 1e-12:
        radicand = 0.0
    if radicand < 0:
        critical = None
        if g > 0 and abs(params.omega_s) <= g:
            critical = 0.5 * math.asin(-params.omega_s / g)
        raise OverSofteningError(
            f"virtual shift over-softens the oscillator (1 + G sin2phi / Omega_S = {radicand:.6g})",
            critical_phi=critical,
        )
    return EffectiveOscillator(
        omega_s=params.omega_s,
        omega_eff=params.omega_s * math.sqrt(radicand),
        gamma_s=params.gamma_s,
        readout_eff=g * math.cos(phi) ** 2,
    )


def effective_susceptibility(params, phi, omega):
    """Susceptibility of the oscillator to forces, referred to the light.

    Inverse is ``(Omega_S**2 - Omega**2 - i gamma Omega) / Omega_S + G sin(2 phi)``.
    """
    omega = np.asarray(omega, dtype=float)[()]
    ws = params.omega_s
    inv = (ws**2 - omega**2 - 1j * params.gamma_s * omega) / ws
    return 1.0 / (inv + params.readout_rate * math.sin(2.0 * phi))


def force_normalized_spectrum(params, probe, quantum_only=True, freq_grid=None, tensor=None,
                              s_bb=0.0, referred_to_detector=False):
    """Light noise referred to a force acting on the spin oscillator.

    The PSD is divided pointwise by ``|N_TN|**2 = 2 G gamma |chi|**2 cos(phi)**2``,
    the transfer function of a thermal force into the output light.  The
    minimum then sits at ``|omega_eff|`` (minus a correction of order
    ``gamma**2 / omega_eff``).

    Parameters
    ----------
    quantum_only : bool
        Keep only shot noise, back-action and their correlation.
    referred_to_detector : bool
        By default the spectrum describes the light leaving the atoms
        (``eta = 1``).  When true the detection efficiency is applied and
        the result is further divided by ``eta``, so the uncorrelated vacuum
        admitted by the loss appears as extra imprecision.

    Returns
    -------
    Spectrum
        Arbitrary but fixed units: the phi = 0, shot-noise-only curve is
        ``1 / (2 G gamma |chi|**2)``.
    """
    if freq_grid is None:
        raise UsageError("freq_grid is required")
    freqs = check_grid(freq_grid)
    cos_phi = math.cos(probe.phi)
    if abs(cos_phi) < 1e-12:
        raise DivergenceError("force normalization diverges at phi = pi/2")
    g, gam = params.readout_rate, params.gamma_s
    if g <= 0 or gam <= 0:
        raise DivergenceError("force normalization needs readout_rate > 0 and gamma_s > 0")
    omega = hz_to_angular(freqs)
    eta = probe.eta if referred_to_detector else 1.0
    if eta <= 0:
        raise DivergenceError("force normalization diverges at eta = 0")
    b = _budget(params, eta, probe.phi, tensor, omega, s_bb)
    psd = b.sn + b.qban + b.corr
    if not quantum_only:
        psd = psd + b.tn + b.bb + b.dc
    chi = _chi(params.omega_s, gam, omega)
    n_tn2 = 2.0 * g * gam * np.abs(chi) ** 2 * cos_phi**2
    return Spectrum(freqs, psd / (eta * n_tn2))
