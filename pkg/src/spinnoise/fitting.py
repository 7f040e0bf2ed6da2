"""Damped least-squares fitting of noise spectra.

The engine is a plain Levenberg-Marquardt loop with Marquardt's diagonal
scaling: the step solves ``(J^T J + lam * diag(J^T J)) dx = -J^T r``.  The
damping is divided by ``nu`` after an accepted step and multiplied by ``nu``
after a rejected one.  Jacobians are central finite differences.

Models are addressed by name (see :data:`MODELS`); each maps a parameter
dict, angular frequencies and per-point homodyne phases to a PSD.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .core import OscillatorParams, Spectrum, TensorConfig, _budget
from .exceptions import FitError, RankDeficiencyError, UsageError
from .mors import ZeemanLadder, mors_response

__all__ = [
    "MODELS",
    "FitProblem",
    "FitReport",
    "LMResult",
    "levenberg_marquardt",
    "fit_spectrum",
    "model_psd",
    "model_parameters",
]

MAX_ITER = 500
RSS_RTOL = 1e-10
LAMBDA0 = 1e-3
NU = 3.0
RANK_RTOL = 1e-8
GRAD_TOL = 1e-4

EQ1_PARAMS = ("omega_s", "gamma_s", "readout_rate", "n_s", "eta", "phi", "s_bb")
DC_PARAMS = ("a2_over_a1", "dc_halfwidth")
# unnormalized sublevel weights; the model divides by their sum
MORS_POPS = ("p_m4", "p_m3", "p_m2", "p_m1", "p_0", "p_p1", "p_p2", "p_p3", "p_p4")
MORS_PARAMS = ("omega_s", "omega_qzs", "linewidth") + MORS_POPS

_INF = math.inf
DEFAULT_BOUNDS = {
    "omega_s": (-_INF, _INF),
    "gamma_s": (1e-12, _INF),
    "readout_rate": (0.0, _INF),
    "n_s": (0.0, _INF),
    "eta": (0.0, 1.0),
    "phi": (-math.pi, math.pi),
    "s_bb": (0.0, _INF),
    "a2_over_a1": (-_INF, _INF),
    "dc_halfwidth": (1e-12, _INF),
    "omega_qzs": (-_INF, _INF),
    "linewidth": (1e-12, _INF),
}
for _name in MORS_POPS:
    DEFAULT_BOUNDS[_name] = (0.0, _INF)


def _bb_components(params):
    i = 1
    out = []
    while f"bb_height_{i}" in params:
        out.append((params[f"bb_height_{i}"], params[f"bb_width_{i}"]))
        i += 1
    return out


def _eq1(params, omega, phi, tensor=None, s_bb=None):
    osc = OscillatorParams(
        omega_s=params["omega_s"],
        gamma_s0=params["gamma_s"],
        readout_rate=params["readout_rate"],
        n_s=params["n_s"],
    )
    if s_bb is None:
        s_bb = params.get("s_bb", 0.0)
    return _budget(osc, params["eta"], phi, tensor, omega, s_bb).total


def _model_eq1(params, omega, phi):
    return _eq1(params, omega, phi)


def _model_eq1_dc(params, omega, phi):
    tensor = TensorConfig(
        a2_over_a1=params["a2_over_a1"],
        dc_halfwidth=params["dc_halfwidth"],
        dc_phase=params.get("dc_phase", "cos"),
    )
    return _eq1(params, omega, phi, tensor)


def _model_multi_bb(params, omega, phi):
    center = abs(params["omega_s"])
    floor = params.get("s_bb", 0.0) * np.ones_like(omega)
    for height, width in _bb_components(params):
        hw2 = (0.5 * width) ** 2
        floor = floor + height * hw2 / ((np.abs(omega) - center) ** 2 + hw2)
    return _eq1(params, omega, phi, s_bb=floor)


def _model_mors(params, omega, phi):
    pops = np.array([params[k] for k in MORS_POPS])
    total = pops.sum()
    if not total > 0:
        return np.zeros_like(omega)
    pops = pops / total
    ladder = ZeemanLadder(params["omega_s"], params["omega_qzs"], params["linewidth"])
    return np.abs(mors_response(ladder, pops, omega)) ** 2


MODELS = {
    "eq1": _model_eq1,
    "eq1+dc": _model_eq1_dc,
    "multi-lorentzian-bb": _model_multi_bb,
    "mors": _model_mors,
}


def model_parameters(model, init=None):
    """Names of the parameters a model reads."""
    if model == "eq1":
        return EQ1_PARAMS
    if model == "eq1+dc":
        return EQ1_PARAMS + DC_PARAMS
    if model == "multi-lorentzian-bb":
        extra = []
        for i in range(1, len(_bb_components(init or {})) + 1):
            extra += [f"bb_height_{i}", f"bb_width_{i}"]
        return EQ1_PARAMS + tuple(extra)
    if model == "mors":
        return MORS_PARAMS
    raise UsageError(f"unknown model {model!r}; choose from {sorted(MODELS)}")


def model_psd(model, params, omega, phi=None):
    """Evaluate a named model at angular frequencies ``omega``."""
    if model not in MODELS:
        raise UsageError(f"unknown model {model!r}; choose from {sorted(MODELS)}")
    omega = np.asarray(omega, dtype=float)
    if phi is None:
        phi = params.get("phi", 0.0)
    return MODELS[model](params, omega, np.broadcast_to(np.asarray(phi, dtype=float), omega.shape))


@dataclass
class FitProblem:
    """A least-squares fit of one or more spectra to a named model.

    Parameters
    ----------
    data : Spectrum or sequence of Spectrum
        Several spectra are fitted jointly with shared parameters; give each
        its homodyne phase through ``phases``.
    model : str
        Key of :data:`MODELS`.
    free : sequence of str or mapping of str to (lo, hi)
        Parameters to vary.  Bare names use :data:`DEFAULT_BOUNDS`.
    init : mapping
        Value of every model parameter, free or fixed (angular units).
    weights : array_like or "relative", optional
        Per-point weights on the squared residuals, concatenated over
        spectra.  Uniform by default.  ``"relative"`` uses ``1 / y**2``,
        the right choice when the noise is proportional to the PSD (as for
        averaged periodograms); it needs strictly positive data.
    phases : sequence of float, optional
        Homodyne phase of each spectrum; overrides ``init["phi"]``.
    mask : sequence of (fmin_hz, fmax_hz)
        Frequency windows excluded from the fit.
    max_iter : int
        Iteration cap of the damped least-squares loop.
    """

    data: object
    model: str = "eq1"
    free: object = ()
    init: dict = field(default_factory=dict)
    weights: object = None
    phases: object = None
    mask: tuple = ()
    max_iter: int = MAX_ITER

    def spectra(self):
        return [self.data] if isinstance(self.data, Spectrum) else list(self.data)


@dataclass
class FitReport:
    """Outcome of :func:`fit_spectrum`.

    ``params`` holds every model parameter (fixed ones unchanged);
    ``uncertainties`` one-sigma errors of the free ones, from the inverse
    curvature at the optimum scaled by the residual variance.  They are
    local estimates, not a posterior.
    """

    params: dict
    uncertainties: dict
    residual_rss: float
    iterations: int
    converged: bool
    gradient_norm: float
    n_points: int
    model: str
    free: tuple
    negative_data: bool = False
    projected: tuple = ()
    message: str = ""

    def as_dict(self):
        out = {
            "model": self.model,
            "residual_rss": self.residual_rss,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "n_points": self.n_points,
            "negative_data": self.negative_data,
        }
        for k in self.free:
            out[k] = self.params[k]
            out[k + "_sigma"] = self.uncertainties[k]
        return out


@dataclass
class LMResult:
    x: np.ndarray
    rss: float
    iterations: int
    converged: bool
    gradient_norm: float
    jac: np.ndarray
    cov: np.ndarray
    projected: tuple
    message: str


def _jacobian(fun, x, r0, lower, upper, typical):
    n = x.size
    jac = np.empty((r0.size, n))
    for k in range(n):
        h = 6e-6 * max(abs(x[k]), typical[k])
        up, down = x.copy(), x.copy()
        up[k] += h
        down[k] -= h
        if up[k] > upper[k]:
            jac[:, k] = (r0 - fun(down)) / h
        elif down[k] < lower[k]:
            jac[:, k] = (fun(up) - r0) / h
        else:
            jac[:, k] = (fun(up) - fun(down)) / (2.0 * h)
    return jac


def _rank_check(jac, names):
    norms = np.linalg.norm(jac, axis=0)
    dead = [names[k] for k in range(len(names)) if not norms[k] > 0]
    if dead:
        raise RankDeficiencyError(
            f"no sensitivity to {', '.join(dead)}", parameters=dead
        )
    scaled = jac / norms
    _, s, vt = np.linalg.svd(scaled, full_matrices=False)
    ratio = s[-1] / s[0]
    if ratio < RANK_RTOL:
        v = vt[-1]
        involved = [names[k] for k in range(len(names)) if abs(v[k]) > 0.1]
        raise RankDeficiencyError(
            "normal equations are singular; unidentifiable combination of "
            + ", ".join(involved),
            parameters=involved,
            diagnostics={"singular_value_ratio": float(ratio)},
        )


def _active(x, g, lower, upper):
    # pinned at a bound with the descent direction pointing outside
    return ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))


def _gradient_norm(jac, r, rss, active=None):
    if rss <= 0:
        return 0.0
    g = jac.T @ r
    col = np.sqrt(np.sum(jac**2, axis=0))
    col[col == 0] = 1.0
    cos = np.abs(g) / col / math.sqrt(rss)
    if active is not None:
        cos = cos[~active]
    return float(np.max(cos)) if cos.size else 0.0


def levenberg_marquardt(fun, x0, lower, upper, names=None, typical=None, max_iter=MAX_ITER,
                        rtol=RSS_RTOL, lam0=LAMBDA0, nu=NU, check_rank=True):
    """Minimize ``sum(fun(x)**2)`` subject to box bounds.

    Parameters pinned at a bound whose gradient points out of the box are
    held fixed for that step; other steps that leave the box are projected
    back onto it and the parameters concerned are reported.  Iteration
    stops when an accepted step changes the RSS by less than ``rtol``
    relative, when the damping grows past 1e20 without finding a downhill
    step, or after ``max_iter`` iterations.

    ``converged`` is true only if the scaled gradient (largest cosine
    between the residual vector and a Jacobian column, bound-pinned
    parameters excluded) is below 1e-4 at the final point, or the residual
    vanished to rounding level.
    """
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    n = x.size
    names = list(names) if names is not None else [f"x{k}" for k in range(n)]
    if typical is None:
        typical = np.where(x != 0, np.abs(x), 1.0)
    r = fun(x)
    if not np.all(np.isfinite(r)):
        raise FitError("residuals are not finite at the initial point")
    scale2 = float(np.sum(r**2)) + 1.0
    rss = float(r @ r)
    jac = _jacobian(fun, x, r, lower, upper, typical)
    if check_rank:
        _rank_check(jac, names)
    lam = lam0
    projected = set()
    message = "maximum iterations reached"
    it = 0
    stalled = False
    while it < max_iter:
        it += 1
        a = jac.T @ jac
        g = jac.T @ r
        active = _active(x, g, lower, upper)
        idx = np.flatnonzero(~active)
        if idx.size == 0:
            message = "all parameters pinned at bounds"
            break
        a_f = a[np.ix_(idx, idx)]
        g_f = g[idx]
        diag = np.diag(a_f).copy()
        diag[diag <= 0] = max(diag.max(), 1.0) * 1e-12
        improved = False
        while lam < 1e20:
            try:
                step_f = np.linalg.solve(a_f + lam * np.diag(diag), -g_f)
            except np.linalg.LinAlgError:
                lam *= nu
                continue
            trial = x.copy()
            trial[idx] += step_f
            clipped = (trial < lower) | (trial > upper)
            trial = np.clip(trial, lower, upper)
            r_new = fun(trial)
            rss_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if rss_new < rss:
                for k in np.flatnonzero(clipped):
                    projected.add(names[k])
                change = (rss - rss_new) / max(rss, 1e-300)
                x, r, rss = trial, r_new, rss_new
                lam = max(lam / nu, 1e-15)
                improved = True
                break
            lam *= nu
        if not improved:
            stalled = True
            message = "no downhill step at maximal damping"
            break
        jac = _jacobian(fun, x, r, lower, upper, typical)
        if change < rtol:
            message = "relative RSS change below tolerance"
            break
        if rss <= 1e-28 * scale2:
            message = "residual vanished"
            break
    active = _active(x, jac.T @ r, lower, upper)
    gnorm = _gradient_norm(jac, r, rss, active)
    tiny = rss <= 1e-24 * scale2
    converged = bool(tiny or gnorm <= GRAD_TOL)
    if stalled and not converged:
        message += " (gradient not small)"
    dof = max(r.size - n, 1)
    cov = np.linalg.pinv(jac.T @ jac) * (rss / dof)
    return LMResult(x, rss, it, converged, gnorm, jac, cov, tuple(sorted(projected)), message)


def _normalize_free(free):
    if isinstance(free, str):
        free = [f.strip() for f in free.split(",") if f.strip()]
    if isinstance(free, dict):
        return {k: tuple(v) if v is not None else DEFAULT_BOUNDS.get(k, (-_INF, _INF))
                for k, v in free.items()}
    return {k: DEFAULT_BOUNDS.get(k, (-_INF, _INF)) for k in free}


def _bounds_for(name, bounds):
    if name in bounds:
        return bounds[name]
    if name.startswith("bb_height_"):
        return (0.0, _INF)
    if name.startswith("bb_width_"):
        return (1e-12, _INF)
    return DEFAULT_BOUNDS.get(name, (-_INF, _INF))


def fit_spectrum(problem):
    """Fit ``problem`` by damped least squares and return a :class:`FitReport`.

    Raises
    ------
    RankDeficiencyError
        When the free parameters cannot be separated by the data.
    FitError
        When the model cannot be evaluated at the starting point.
    UsageError
        For malformed problems (unknown model or parameter, no free
        parameters, start outside bounds, empty data).
    """
    spectra = problem.spectra()
    if not spectra:
        raise UsageError("no data to fit")
    names = model_parameters(problem.model, problem.init)
    missing = [k for k in names if k not in problem.init and k != "phi"]
    if missing:
        raise UsageError(f"init lacks {', '.join(missing)}")
    free = _normalize_free(problem.free)
    if not free:
        raise UsageError("at least one free parameter is required")
    unknown = [k for k in free if k not in names]
    if unknown:
        raise UsageError(f"{', '.join(unknown)} not parameters of model {problem.model!r}")
    free_names = tuple(free)
    lower = np.array([_bounds_for(k, free)[0] for k in free_names], dtype=float)
    upper = np.array([_bounds_for(k, free)[1] for k in free_names], dtype=float)
    x0 = np.array([problem.init[k] for k in free_names], dtype=float)
    if np.any(x0 < lower) or np.any(x0 > upper):
        bad = [k for k, v, lo, hi in zip(free_names, x0, lower, upper) if not lo <= v <= hi]
        raise UsageError(f"initial values outside bounds: {', '.join(bad)}")

    if problem.phases is not None:
        phases = list(problem.phases)
        if len(phases) != len(spectra):
            raise UsageError("need one phase per spectrum")
        if "phi" in free:
            raise UsageError("phi cannot be free when phases are given per spectrum")
    else:
        phases = [problem.init.get("phi", 0.0)] * len(spectra)

    omegas, data, phis, keeps = [], [], [], []
    for spec, ph in zip(spectra, phases):
        keep = np.ones(len(spec), dtype=bool)
        for lo, hi in problem.mask:
            keep &= ~((spec.freqs >= lo) & (spec.freqs <= hi))
        keeps.append(keep)
        omegas.append(spec.omega[keep])
        data.append(spec.values[keep])
        phis.append(np.full(int(keep.sum()), float(ph)))
    omega = np.concatenate(omegas)
    y = np.concatenate(data)
    phi = np.concatenate(phis)
    if y.size == 0:
        raise UsageError("mask removed every data point")
    negative = any(s.has_negative for s in spectra)
    if negative:
        warnings.warn("fitting data that contains negative PSD values", stacklevel=2)

    if problem.weights is None:
        sw = np.ones_like(y)
    elif isinstance(problem.weights, str):
        if problem.weights != "relative":
            raise UsageError(f"unknown weighting {problem.weights!r}")
        if np.any(y <= 0):
            raise UsageError("relative weighting needs strictly positive data")
        sw = 1.0 / y
    else:
        # weights refer to the unmasked, concatenated data
        w = np.asarray(problem.weights, dtype=float).ravel()
        keep_all = np.concatenate(keeps)
        if w.size != keep_all.size or not np.all(np.isfinite(w)) or np.any(w < 0):
            raise UsageError("weights must be finite, non-negative, one per data point")
        sw = np.sqrt(w[keep_all])

    base = dict(problem.init)
    model = MODELS[problem.model]

    def residual(x):
        params = dict(base)
        params.update(zip(free_names, x))
        try:
            pred = model(params, omega, phi)
        except (ValueError, ArithmeticError):
            return np.full_like(y, np.inf)
        return sw * (pred - y)

    typical = np.where(x0 != 0, np.abs(x0), 1.0)
    if problem.model == "mors":
        # sublevel weights share one scale; nearly empty levels still need finite steps
        pops = np.isin(free_names, MORS_POPS)
        total = sum(abs(base[k]) for k in MORS_POPS)
        typical[pops] = np.maximum(np.abs(x0[pops]), 0.01 * total)
    result = levenberg_marquardt(
        residual, x0, lower, upper, names=free_names, typical=typical,
        check_rank=problem.model != "mors", max_iter=problem.max_iter,
    )
    params = dict(base)
    params.update({k: float(v) for k, v in zip(free_names, result.x)})
    if problem.phases is not None:
        params["phases"] = tuple(float(p) for p in phases)
    sig = np.sqrt(np.clip(np.diag(result.cov), 0.0, None))
    return FitReport(
        params=params,
        uncertainties={k: float(s) for k, s in zip(free_names, sig)},
        residual_rss=float(result.rss),
        iterations=result.iterations,
        converged=result.converged,
        gradient_norm=result.gradient_norm,
        n_points=int(y.size),
        model=problem.model,
        free=free_names,
        negative_data=negative,
        projected=result.projected,
        message=result.message,
    )
