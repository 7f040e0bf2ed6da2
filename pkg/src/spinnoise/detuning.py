"""Probe-detuning trade-off between back-action, thermal and DC noise.

With ``G = A / delta**2`` and ``gamma = gamma_s0 + C / delta**2`` the
cooperativity falls as the detuning grows, while the tensor-induced DC noise
``D / delta**r`` falls faster.  The best squeezing sits in between.

Detunings are angular (rad/s).  The constants ``A``, ``C`` and ``D`` carry
whatever proportionality the underlying scaling laws leave open and are
meant to be fitted; only ratios and trends are physically anchored.
"""

from dataclasses import dataclass
import math

import numpy as np

from .exceptions import DomainError, UsageError
from .validation import check_finite, check_nonnegative, check_positive, check_unit_interval

__all__ = [
    "DetuningScaling",
    "readout_at",
    "damping_at",
    "cooperativity_at",
    "area_qban",
    "area_tn",
    "area_dc",
    "squeezing_vs_detuning",
    "optimal_detuning",
    "golden_section",
]

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class DetuningScaling:
    """Coefficients of the detuning laws.

    Parameters
    ----------
    a_coeff : float
        ``A`` in ``readout = A / delta**2`` (rad/s * (rad/s)**2).
    c_coeff : float
        ``C`` in ``gamma = gamma_s0 + C / delta**2`` ((rad/s)**3).
    gamma_s0 : float
        Intrinsic damping rate (rad/s).
    d_coeff : float
        ``D`` in ``S_DC = D / delta**r``.
    r_exp : float
        Exponent ``r`` in [4, 6].
    eta : float
        Detection efficiency.
    """

    a_coeff: float
    c_coeff: float
    gamma_s0: float
    d_coeff: float = 0.0
    r_exp: float = 5.0
    eta: float = 1.0

    def __post_init__(self):
        for name in ("a_coeff", "c_coeff", "gamma_s0", "d_coeff"):
            check_nonnegative(name, getattr(self, name))
        check_finite("r_exp", self.r_exp)
        if not 4.0 <= self.r_exp <= 6.0:
            raise DomainError(f"r_exp must lie in [4, 6], got {self.r_exp}")
        check_unit_interval("eta", self.eta)

    @classmethod
    def from_reference(cls, delta_ref, readout_ref, gamma_pb_ref, gamma_s0, dc_ref=0.0,
                       r_exp=5.0, eta=1.0):
        """Coefficients from rates observed at one reference detuning.

        ``readout_ref`` and ``gamma_pb_ref`` are the readout rate and probe
        broadening at ``delta_ref``; ``dc_ref`` is the DC noise there, in
        shot-noise units.
        """
        check_positive("delta_ref", delta_ref)
        d2 = delta_ref**2
        return cls(
            a_coeff=readout_ref * d2,
            c_coeff=gamma_pb_ref * d2,
            gamma_s0=gamma_s0,
            d_coeff=dc_ref * delta_ref**r_exp,
            r_exp=r_exp,
            eta=eta,
        )

    def scaled(self, k):
        """Same physics with every detuning multiplied by ``k``."""
        return DetuningScaling(
            a_coeff=self.a_coeff * k**2,
            c_coeff=self.c_coeff * k**2,
            gamma_s0=self.gamma_s0,
            d_coeff=self.d_coeff * k**self.r_exp,
            r_exp=self.r_exp,
            eta=self.eta,
        )


def _check_delta(delta):
    check_finite("delta", delta)
    delta = np.asarray(delta, dtype=float)
    if np.any(delta <= 0):
        raise DomainError("detuning must be > 0")
    return delta[()]


def readout_at(scaling, delta):
    delta = _check_delta(delta)
    return scaling.a_coeff / delta**2


def damping_at(scaling, delta):
    delta = _check_delta(delta)
    return scaling.gamma_s0 + scaling.c_coeff / delta**2


def cooperativity_at(scaling, delta):
    """``A / (C + gamma_s0 * delta**2)``, the readout-to-damping ratio."""
    delta = _check_delta(delta)
    return scaling.a_coeff / (scaling.c_coeff + scaling.gamma_s0 * delta**2)


def area_qban(scaling, delta):
    """Integrated back-action noise, ``A**2 / (delta**2 (gamma_s0 delta**2 + C))``."""
    delta = _check_delta(delta)
    return scaling.a_coeff**2 / (delta**2 * (scaling.gamma_s0 * delta**2 + scaling.c_coeff))


def area_tn(scaling, delta):
    """Integrated thermal noise, proportional to the readout rate ``A / delta**2``."""
    return readout_at(scaling, delta)


def area_dc(scaling, delta):
    """Integrated DC noise, ``D / (delta**4 (gamma_s0 delta**2 + C))``."""
    delta = _check_delta(delta)
    return scaling.d_coeff / (delta**4 * (scaling.gamma_s0 * delta**2 + scaling.c_coeff))


def squeezing_vs_detuning(scaling, delta):
    """``1 - eta C_q / (C_q + 1) + D / delta**r`` in shot-noise units."""
    delta = _check_delta(delta)
    cq = scaling.a_coeff / (scaling.c_coeff + scaling.gamma_s0 * delta**2)
    return 1.0 - scaling.eta * cq / (cq + 1.0) + scaling.d_coeff / delta**scaling.r_exp


def golden_section(f, lo, hi, rtol=1e-6):
    """Minimize a unimodal ``f`` on ``[lo, hi]`` by golden-section search.

    Stops once the bracket is narrower than ``rtol`` times its midpoint.
    Returns the abscissa of the best point evaluated (endpoints included).
    """
    a, b = float(lo), float(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > rtol * 0.5 * abs(a + b):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    candidates = [(f(lo), lo), (fc, c), (fd, d), (f(hi), hi)]
    return min(candidates)[1]


def optimal_detuning(scaling, delta_range, rtol=1e-6, n_bracket=64):
    """Detuning in ``delta_range`` that minimizes :func:`squeezing_vs_detuning`.

    A coarse log-spaced scan locates the basin, golden-section search then
    refines inside the two neighbouring cells.

    Returns
    -------
    (delta_opt, s_min)
    """
    try:
        lo, hi = (float(v) for v in delta_range)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"delta_range must be a pair, got {delta_range!r}") from exc
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo <= 0 or hi <= lo:
        raise UsageError(f"invalid detuning range ({lo}, {hi})")

    def f(x):
        return float(squeezing_vs_detuning(scaling, x))

    grid = np.geomspace(lo, hi, n_bracket)
    values = squeezing_vs_detuning(scaling, grid)
    k = int(np.argmin(values))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid.size - 1)]
    best = golden_section(f, a, b, rtol)
    return best, f(best)
