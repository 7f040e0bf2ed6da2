"""Zeeman-resolved magneto-optical resonance spectra of the F=4 manifold.

Quadratic Zeeman splitting separates the eight ``m -> m+1`` transitions by
``2 * omega_qzs``.  Each line's amplitude is proportional to the population
difference of the two sublevels, so a resolved spectrum can be inverted for
the sublevel populations, and from them the spin polarization, the thermal
occupancy of the oscillator and the sign of its effective mass.
"""

from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .core import Spectrum
from .exceptions import DomainError, FitError, IndeterminateError, UsageError
from .validation import check_finite, check_grid, check_positive, hz_to_angular

__all__ = [
    "F",
    "M_LEVELS",
    "M_TRANSITIONS",
    "ZeemanPopulations",
    "ZeemanLadder",
    "MorsFit",
    "transition_weights",
    "transition_frequencies",
    "mors_response",
    "mors_spectrum",
    "polarization",
    "thermal_occupancy",
    "classify_mass",
    "project_to_simplex",
    "sign_partner",
    "fit_mors",
]

F = 4
SCREEN_ITER = 15
N_POLISH = 2
M_LEVELS = np.arange(-F, F + 1)
M_TRANSITIONS = np.arange(-F, F)


def transition_weights(f=F):
    """Relative line strengths ``F(F+1) - m(m+1)`` for ``m = -F .. F-1``."""
    m = np.arange(-f, f)
    return (f * (f + 1) - m * (m + 1)).astype(float)


@dataclass(frozen=True)
class ZeemanPopulations:
    """Populations ``p[-4] .. p[+4]`` (index 0 is ``m = -4``)."""

    p: tuple

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (2 * F + 1,):
            raise DomainError(f"need {2 * F + 1} populations, got {p.size}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise DomainError("populations must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise DomainError(f"populations must sum to 1 (sum = {p.sum():.12g})")
        object.__setattr__(self, "p", tuple(float(v) for v in p))

    @property
    def array(self):
        return np.asarray(self.p)

    def __getitem__(self, m):
        return self.p[m + F]

    def mirrored(self):
        """Populations with ``m -> -m``."""
        return ZeemanPopulations(tuple(reversed(self.p)))

    @classmethod
    def stretched(cls, m=F):
        p = np.zeros(2 * F + 1)
        p[m + F] = 1.0
        return cls(tuple(p))

    @classmethod
    def uniform(cls):
        return cls(tuple(np.full(2 * F + 1, 1.0 / (2 * F + 1))))

    @classmethod
    def spin_temperature(cls, pol):
        """Distribution ``p_m ~ exp(beta m)`` with polarization ``pol``."""
        check_finite("pol", pol)
        if not -1.0 <= pol <= 1.0:
            raise DomainError("polarization must lie in [-1, 1]")
        if abs(pol) == 1.0:
            return cls.stretched(int(F * pol))
        if pol == 0.0:
            return cls.uniform()

        def p_of(beta):
            w = np.exp(beta * (M_LEVELS - F * np.sign(beta)))
            return w / w.sum()

        beta = brentq(lambda b: float(M_LEVELS @ p_of(b)) / F - pol, -60.0, 60.0, xtol=1e-14)
        p = p_of(beta)
        return cls(tuple(p / p.sum()))


@dataclass(frozen=True)
class ZeemanLadder:
    """Larmor frequency, quadratic splitting and line width (all rad/s)."""

    omega_s: float
    omega_qzs: float
    linewidth: float

    def __post_init__(self):
        check_finite("omega_s", self.omega_s)
        check_finite("omega_qzs", self.omega_qzs)
        check_positive("linewidth", self.linewidth)


def transition_frequencies(ladder):
    """``omega_s + omega_qzs * (2m + 1)`` for ``m = -4 .. 3``."""
    return ladder.omega_s + ladder.omega_qzs * (2 * M_TRANSITIONS + 1)


def _pops_array(pops):
    return pops.array if isinstance(pops, ZeemanPopulations) else np.asarray(pops, dtype=float)


def mors_response(ladder, pops, omega, weights=None):
    """Complex line sum ``sum_m w_m (p_m - p_{m+1}) L_m(omega)``.

    ``L_m`` is a unit-height complex Lorentzian of full width
    ``ladder.linewidth`` centred on transition ``m``.
    """
    p = _pops_array(pops)
    w = transition_weights() if weights is None else np.asarray(weights, dtype=float)
    amp = w * (p[:-1] - p[1:])
    centers = transition_frequencies(ladder)
    hw = 0.5 * ladder.linewidth
    omega = np.asarray(omega, dtype=float)
    lines = hw / (hw - 1j * (omega[..., None] - centers))
    return lines @ amp


def mors_spectrum(ladder, pops, freq_grid, weights=None):
    """Power spectrum ``|mors_response|**2`` on a grid of ordinary frequencies (Hz).

    The grid is compared against the signed transition frequencies, so use
    a positive ``omega_s`` for positive-frequency data.
    """
    freqs = check_grid(freq_grid)
    resp = mors_response(ladder, pops, hz_to_angular(freqs), weights)
    return Spectrum(freqs, np.abs(resp) ** 2)


def _valid(pops):
    return pops if isinstance(pops, ZeemanPopulations) else ZeemanPopulations(tuple(pops))


def polarization(pops):
    """Spin polarization ``sum(m p_m) / 4`` in [-1, 1]."""
    pops = _valid(pops)
    return float(M_LEVELS @ pops.array) / F


def thermal_occupancy(pops, mass_sign):
    """Mean number of excitations above the fully stretched state.

    For ``"negative"`` mass the majority sits in ``m = +4`` and
    ``n_s = sum((4 - m) p_m)``; for ``"positive"`` mass ``n_s = sum((4 + m) p_m)``.
    """
    pops = _valid(pops)
    if mass_sign == "negative":
        return float((F - M_LEVELS) @ pops.array)
    if mass_sign == "positive":
        return float((F + M_LEVELS) @ pops.array)
    raise DomainError(f"mass_sign must be 'positive' or 'negative', got {mass_sign!r}")


def classify_mass(pops, threshold=0.05):
    """``"negative"`` when the majority is inverted towards ``m = +4``.

    Raises
    ------
    IndeterminateError
        If ``|polarization| <= threshold``.
    """
    pops = _valid(pops)
    pol = polarization(pops)
    if abs(pol) <= threshold:
        raise IndeterminateError(
            f"polarization {pol:.4g} within +/-{threshold}; mass sign is undefined"
        )
    p = pops.array
    up = float(M_LEVELS[M_LEVELS > 0] @ p[M_LEVELS > 0])
    down = abs(float(M_LEVELS[M_LEVELS < 0] @ p[M_LEVELS < 0]))
    return "negative" if up > down else "positive"


def project_to_simplex(v):
    """Euclidean projection of ``v`` onto ``{p >= 0, sum(p) = 1}``."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _pops_from_differences(d):
    # p_m = p_4 + sum_{k >= m} d_k and sum(p) = 1
    p4 = (1.0 - float((M_TRANSITIONS + F + 1) @ d)) / (2 * F + 1)
    tail = np.cumsum(d[::-1])[::-1]
    return np.append(p4 + tail, p4)


class MorsFit(NamedTuple):
    ladder: ZeemanLadder
    populations: ZeemanPopulations
    residual: float
    report: object
    sign_ambiguous: bool = False


def sign_partner(pops):
    """Populations whose line amplitudes are ``-(p_m - p_{m+1})``, or ``None``.

    Both vectors give the same MORS power spectrum and opposite
    polarization.  ``None`` means the partner would need negative
    populations, so the data fix the sign.
    """
    p = _pops_array(pops)
    q = _pops_from_differences(-_differences(p))
    if np.min(q) < -1e-9:
        return None
    q = np.clip(q, 0.0, None)
    return ZeemanPopulations(tuple(q / q.sum()))


def _line_heights(spectrum, ladder):
    # largest sample within half a line spacing of each nominal centre
    centers = transition_frequencies(ladder)
    half = max(abs(ladder.omega_qzs), ladder.linewidth)
    omega = spectrum.omega
    floor = float(np.median(spectrum.values))
    heights = np.zeros(centers.size)
    for k, c in enumerate(centers):
        sel = np.abs(omega - c) <= half
        if not np.any(sel):
            sel = np.abs(omega - c) == np.min(np.abs(omega - c))
        heights[k] = max(float(np.max(spectrum.values[sel])) - floor, 0.0)
    return heights


def _initial_populations(spectrum, ladder):
    d = np.sqrt(_line_heights(spectrum, ladder)) / transition_weights()
    # inverted population when the top line dominates
    if d[-1] >= d[0]:
        d = -d
    return project_to_simplex(_pops_from_differences(d))


def _fit_lines(spectrum, ladder, free_ladder):
    """Ladder and line magnitudes from an incoherent sum of Lorentzian powers.

    Dropping the cross terms between lines removes every dependence on
    their signs, so this fit has none of the sign-pattern local minima of
    the full model.  Cross terms are small for resolved lines.
    """
    from .fitting import levenberg_marquardt

    h0 = _line_heights(spectrum, ladder)
    omega, y = spectrum.omega, spectrum.values
    n_lad = 3 if free_ladder else 0

    def unpack(x):
        lad = (x[0], x[1], x[2]) if free_ladder else (
            ladder.omega_s, ladder.omega_qzs, ladder.linewidth)
        return lad, x[n_lad:]

    def residual(x):
        (w_s, w_q, lw), heights = unpack(x)
        if not lw > 0:
            return np.full_like(y, np.inf)
        centers = w_s + w_q * (2 * M_TRANSITIONS + 1)
        hw2 = (0.5 * lw) ** 2
        return (hw2 / (hw2 + (omega[:, None] - centers) ** 2)) @ heights - y

    x0 = np.concatenate([[ladder.omega_s, ladder.omega_qzs, ladder.linewidth][:n_lad], h0])
    lower = np.full(x0.size, -np.inf)
    upper = np.full(x0.size, np.inf)
    lower[n_lad:] = 0.0
    if free_ladder:
        lower[2] = 1e-12 * ladder.linewidth
    typical = np.abs(x0)
    typical[n_lad:] = max(float(np.max(h0)), 1e-12)
    res = levenberg_marquardt(residual, x0, lower, upper, typical=typical, check_rank=False)
    (w_s, w_q, lw), heights = unpack(res.x)
    return ZeemanLadder(float(w_s), float(w_q), float(lw)), np.sqrt(heights)


def _sign_candidates(spectrum, ladder, mag, n_best):
    """Simplex population vectors built from line magnitudes and every sign pattern.

    Each of the ``2**8`` patterns gives differences ``p_m - p_{m+1}``; the
    resulting vector is projected onto the simplex and scored at fixed
    ladder.  The ``n_best`` lowest-residual distinct vectors are returned.
    """
    w = transition_weights()
    signs = 1.0 - 2.0 * ((np.arange(2**8)[:, None] >> np.arange(8)) & 1)
    cands = np.array([project_to_simplex(_pops_from_differences(sg * mag / w)) for sg in signs])
    centers = transition_frequencies(ladder)
    hw = 0.5 * ladder.linewidth
    lines = hw / (hw - 1j * (spectrum.omega[:, None] - centers))
    amps = w * (cands[:, :-1] - cands[:, 1:])
    rss = np.sum((np.abs(lines @ amps.T) ** 2 - spectrum.values[:, None]) ** 2, axis=0)
    out = []
    for k in np.argsort(rss, kind="stable"):
        if len(out) >= n_best:
            break
        c = cands[k]
        if not any(np.max(np.abs(c - o)) < 1e-6 for o in out):
            out.append(c)
    return out


def _differences(p):
    return p[:-1] - p[1:]


def fit_mors(spectrum, ladder_init, pops_init=None, free_ladder=True, n_refine=24):
    """Fit :func:`mors_spectrum` to measured MORS data.

    Damped least squares over the ladder (Larmor frequency, quadratic
    splitting, line width) and the populations.  The fit runs on nine
    non-negative weights that are divided by their sum, so every iterate
    lies on the probability simplex.

    Flipping the sign of every difference ``p_m - p_{m+1}`` leaves the power
    spectrum unchanged and reverses the polarization.  When that partner is
    itself a valid population vector (see :func:`sign_partner`) the data
    cannot fix the sign of P.  ``sign_ambiguous`` is then set, and which of
    the two branches is returned depends on the search; treat the sign of P
    and the mass sign as unknown.  Relative signs between lines are only fixed by
    their weak interference, so the fit is started several times: from
    ``pops_init`` and from the ``n_refine`` most promising sign patterns of
    line magnitudes measured by an unconstrained line-by-line fit.  Each
    start gets a short screening run; the two best are fitted to
    convergence.  The lowest residual wins; near-ties go to the more
    polarized solution.

    Parameters
    ----------
    spectrum : Spectrum
        Calibrated to the model's amplitude units (unit-height lines times
        ``(w_m (p_m - p_{m+1}))**2``).
    ladder_init : ZeemanLadder
    pops_init : ZeemanPopulations, optional
        Estimated from the line heights when omitted.
    free_ladder : bool
        Also fit the ladder; otherwise it is held at ``ladder_init``.
    n_refine : int
        Number of sign patterns refitted in addition to ``pops_init``.

    Returns
    -------
    MorsFit
        ``(ladder, populations, residual, report, sign_ambiguous)`` with
        ``residual`` the residual sum of squares.

    Raises
    ------
    FitError
        No transition above noise, or the fit did not converge.
    """
    from .fitting import MORS_POPS, FitProblem, fit_spectrum

    centers_hz = transition_frequencies(ladder_init) / (2.0 * math.pi)
    if centers_hz.min() < spectrum.freqs[0] or centers_hz.max() > spectrum.freqs[-1]:
        raise UsageError("spectrum does not cover all eight transitions of ladder_init")
    if not np.max(np.abs(spectrum.values)) > 1e-12:
        raise FitError("null spectrum: no resolvable transitions",
                       diagnostics={"max_value": float(np.max(np.abs(spectrum.values)))})

    if pops_init is None:
        p0 = _initial_populations(spectrum, ladder_init)
    else:
        p0 = _pops_array(pops_init)
    free = list(MORS_POPS)
    if free_ladder:
        free = ["omega_s", "omega_qzs", "linewidth"] + free

    def run(ladder, p, max_iter=500):
        init = {"omega_s": ladder.omega_s, "omega_qzs": ladder.omega_qzs,
                "linewidth": ladder.linewidth}
        init.update(zip(MORS_POPS, p))
        rep = fit_spectrum(FitProblem(spectrum, model="mors", free=free, init=init,
                                      max_iter=max_iter))
        raw = np.array([rep.params[k] for k in MORS_POPS])
        raw = raw / raw.sum()
        lad = ZeemanLadder(rep.params["omega_s"], rep.params["omega_qzs"], rep.params["linewidth"])
        return rep, raw, lad

    line_ladder, mag = _fit_lines(spectrum, ladder_init, free_ladder)
    starts = [(ladder_init, p0)]
    starts += [(line_ladder, c) for c in _sign_candidates(spectrum, line_ladder, mag, n_refine)]
    # short screening runs, then full fits from the most promising
    screened = sorted((run(lad, p, SCREEN_ITER) for lad, p in starts),
                      key=lambda t: t[0].residual_rss)
    best = None
    last = None
    for rep, raw, lad in screened[:N_POLISH]:
        rep, raw, lad = run(lad, raw)
        last = rep
        if rep.converged and (best is None or _preferred(rep, raw, best[0], best[1])):
            best = (rep, raw, lad)
    if best is None:
        raise FitError(
            f"MORS fit did not converge ({last.message})",
            diagnostics={
                "iterations": last.iterations,
                "gradient_norm": last.gradient_norm,
                "residual_rss": last.residual_rss,
            },
        )
    report, raw, ladder = best
    pops = ZeemanPopulations(tuple(raw))
    ambiguous = sign_partner(pops) is not None
    return MorsFit(ladder, pops, report.residual_rss, report, ambiguous)


def _preferred(rep, p, rep_ref, p_ref, rtol=1e-4):
    # lower RSS wins; near-ties go to the clearly more polarized vector,
    # otherwise the earlier start is kept
    if rep.residual_rss < rep_ref.residual_rss * (1.0 - rtol):
        return True
    if rep.residual_rss <= rep_ref.residual_rss * (1.0 + rtol):
        return abs(M_LEVELS @ p) > abs(M_LEVELS @ p_ref) + 1e-6
    return False
