"""Command line interface.

Every subcommand writes a CSV table to stdout (or ``--out``) and a
``key = value`` summary to stderr (or ``--summary``).  Exit status is 0 on
success, 2 for usage errors (bad flags, unreadable or malformed input) and
3 for numerical failures (non-convergence, divergence, instability).
"""

import argparse
import contextlib
import math
import os
import sys

import numpy as np

from .core import OscillatorParams, ProbeConfig, TensorConfig, budget_terms, tensor_damped
from .detuning import (
    DetuningScaling,
    area_dc,
    area_qban,
    area_tn,
    cooperativity_at,
    damping_at,
    optimal_detuning,
    readout_at,
    squeezing_vs_detuning,
)
from .exceptions import IndeterminateError, NumericalError, SpinNoiseError
from .fitting import MODELS, MORS_POPS, FitProblem, fit_spectrum, model_parameters, model_psd
from .gwd import GwdConfig, projection_curves
from .io import load_config, load_spectrum, write_summary, write_table
from .mors import (
    M_LEVELS,
    ZeemanLadder,
    classify_mass,
    fit_mors,
    mors_spectrum,
    polarization,
    thermal_occupancy,
)
from .squeeze import (
    cooperativity,
    effective_oscillator,
    force_normalized_spectrum,
    optimize_squeezing,
    to_db,
)
from .validation import TWO_PI, hz_to_angular

__all__ = ["run_cli", "main"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

# model parameters reported in Hz as well as rad/s
ANGULAR = {"omega_s", "gamma_s", "readout_rate", "dc_halfwidth", "omega_qzs", "linewidth"}
ALIASES = {"readout": "readout_rate", "larmor": "omega_s", "qzs": "omega_qzs"}

DEFAULT_GRIDS = {
    "psd": (100.0, 40000.0, 2000),
    "fit": None,
    "squeeze": (100.0, 40000.0, 2000),
    "shift": (1000.0, 35000.0, 4000),
    "detune": None,
    "mors": None,
    "gwd": (1.0, 10000.0, 400),
}


class CliUsageError(SpinNoiseError, ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.add_argument("--summary", help="summary output path (default stderr)")
    p.add_argument("--fmin", type=float, help="lowest frequency (Hz)")
    p.add_argument("--fmax", type=float, help="highest frequency (Hz)")
    p.add_argument("--points", type=int, help="number of grid points")
    p.add_argument("--phi", help="homodyne phase (rad); comma list for joint fits")
    p.add_argument("--model", default="eq1", choices=sorted(MODELS), help="fit model")
    p.add_argument("--free", help="comma separated free parameters")
    p.add_argument("--seed", type=int, help="seed for synthetic noise")
    p.add_argument("--mask", help="excluded windows in Hz, e.g. 0:500,49.5e3:50.5e3")


def build_parser():
    parser = _Parser(prog="spinnoise", description="Spin oscillator noise spectra toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    parser.subcommands = sub.choices

    p = sub.add_parser("psd", help="evaluate the noise model on a grid")
    _common(p)
    p.add_argument("--budget", action="store_true", help="also write the individual terms")
    p.add_argument("--noise", type=float, default=0.0,
                   help="relative Gaussian noise added to the PSD (uses --seed)")

    p = sub.add_parser("fit", help="fit a measured spectrum")
    _common(p)
    p.add_argument("data", nargs="+", help="spectrum CSV file(s); one --phi entry per file")

    p = sub.add_parser("squeeze", help="optimize homodyne phase and frequency")
    _common(p)

    p = sub.add_parser("shift", help="effective oscillator and force-normalized spectrum")
    _common(p)
    p.add_argument("--full", action="store_true", help="include thermal, broadband and DC terms")

    p = sub.add_parser("detune", help="squeezing versus optical detuning")
    _common(p)

    p = sub.add_parser("mors", help="fit a MORS spectrum for sublevel populations")
    _common(p)
    p.add_argument("data", help="MORS spectrum CSV")

    p = sub.add_parser("gwd", help="joint interferometer projection curves")
    _common(p)
    return parser


# -- helpers ----------------------------------------------------------------

def _config(args):
    cfg = load_config(args.config) if args.config else {}
    out = {}
    for k, v in cfg.items():
        out[ALIASES.get(k, k)] = v
    if "phi_pi" in out:
        out["phi"] = math.pi * float(out.pop("phi_pi"))
    return out


def _num(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise CliUsageError(f"configuration lacks {key!r}")
        return default
    value = cfg[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CliUsageError(f"{key} must be numeric, got {value!r}")
    return float(value)


def _phis(args):
    if args.phi is None:
        return None
    try:
        return [float(s) for s in args.phi.split(",")]
    except ValueError:
        raise CliUsageError(f"--phi: cannot parse {args.phi!r}") from None


def _phi(args, cfg):
    phis = _phis(args)
    if phis is None:
        return _num(cfg, "phi", 0.0)
    if len(phis) != 1:
        raise CliUsageError("--phi takes a single value here")
    return phis[0]


def _grid(args, cfg, command, log=False):
    default = DEFAULT_GRIDS[command]
    fmin = args.fmin if args.fmin is not None else cfg.get("fmin", None)
    fmax = args.fmax if args.fmax is not None else cfg.get("fmax", None)
    # config frequencies come back in rad/s from the unit suffix
    if args.fmin is None and fmin is not None:
        fmin = float(fmin) / TWO_PI
    if args.fmax is None and fmax is not None:
        fmax = float(fmax) / TWO_PI
    fmin = default[0] if fmin is None else fmin
    fmax = default[1] if fmax is None else fmax
    points = args.points if args.points is not None else int(cfg.get("points", default[2]))
    if points < 2 or not fmax > fmin or (log and fmin <= 0):
        raise CliUsageError(f"bad grid: fmin={fmin}, fmax={fmax}, points={points}")
    return np.geomspace(fmin, fmax, points) if log else np.linspace(fmin, fmax, points)


def _oscillator(cfg):
    gamma0 = _num(cfg, "gamma_s0", cfg.get("gamma_s", None))
    return OscillatorParams(
        omega_s=_num(cfg, "omega_s"),
        gamma_s0=gamma0,
        gamma_s_pb=_num(cfg, "gamma_s_pb", 0.0),
        readout_rate=_num(cfg, "readout_rate", 0.0),
        n_s=_num(cfg, "n_s", 0.0),
    )


def _probe(cfg, phi):
    return ProbeConfig(
        phi=phi,
        eta=_num(cfg, "eta", 1.0),
        alpha=_num(cfg, "alpha", math.pi / 4),
        delta=_num(cfg, "delta", TWO_PI * 1.6e9),
    )


def _tensor(cfg):
    if "a2_over_a1" not in cfg:
        return None
    return TensorConfig(
        a2_over_a1=_num(cfg, "a2_over_a1"),
        dc_weight=_num(cfg, "dc_weight", 0.0),
        dc_exponent=_num(cfg, "dc_exponent", 5.0),
        dc_halfwidth=_num(cfg, "dc_halfwidth", TWO_PI * 5e3),
        dc_phase=str(cfg.get("dc_phase", "cos")),
    )


def _mask(args):
    if not args.mask:
        return ()
    out = []
    for part in args.mask.split(","):
        try:
            lo, hi = (float(s) for s in part.split(":"))
        except ValueError:
            raise CliUsageError(f"--mask: expected lo:hi, got {part!r}") from None
        if not hi > lo:
            raise CliUsageError(f"--mask window {part!r} is empty")
        out.append((lo, hi))
    return tuple(out)


def _hz_items(params, names):
    out = {}
    for k in names:
        v = params[k]
        if k in ANGULAR:
            out[f"{k}_hz"] = v / TWO_PI
        else:
            out[k] = v
    return out


# -- subcommands ------------------------------------------------------------

def cmd_psd(args, cfg):
    params = _oscillator(cfg)
    probe = _probe(cfg, _phi(args, cfg))
    tensor = _tensor(cfg)
    s_bb = _num(cfg, "s_bb", 0.0)
    if tensor is not None:
        params = tensor_damped(params, probe, tensor)
    freqs = _grid(args, cfg, "psd")
    b = budget_terms(params, probe, tensor, hz_to_angular(freqs), s_bb)
    total = np.asarray(b.total, dtype=float)
    if args.noise:
        if args.noise < 0:
            raise CliUsageError("--noise must be >= 0")
        rng = np.random.default_rng(args.seed)
        total = total * (1.0 + args.noise * rng.standard_normal(total.size))
    header, cols = ["freq_hz", "psd"], [freqs, total]
    if args.budget:
        for name in ("sn", "qban", "corr", "tn", "bb", "dc"):
            header.append(name)
            cols.append(np.broadcast_to(np.asarray(getattr(b, name), dtype=float), freqs.shape))
    summary = {
        "points": freqs.size,
        "psd_min": float(np.min(total)),
        "f_at_min_hz": float(freqs[np.argmin(total)]),
        "psd_max": float(np.max(total)),
        "gamma_s_hz": params.gamma_s / TWO_PI,
    }
    if params.gamma_s > 0:
        summary["c_q"] = cooperativity(params)
    return header, cols, summary


def cmd_fit(args, cfg):
    spectra = [load_spectrum(path) for path in args.data]
    model = args.model
    names = model_parameters(model, cfg)
    init = {}
    gamma = cfg.get("gamma_s", None)
    if gamma is None and "gamma_s0" in cfg:
        gamma = _num(cfg, "gamma_s0") + _num(cfg, "gamma_s_pb", 0.0)
    defaults = {"gamma_s": gamma, "n_s": 0.0, "eta": 1.0, "phi": 0.0, "s_bb": 0.0,
                "readout_rate": 0.0, "dc_halfwidth": TWO_PI * 5e3, "a2_over_a1": 0.0}
    for k in names:
        if k in cfg:
            init[k] = _num(cfg, k)
        elif defaults.get(k) is not None:
            init[k] = float(defaults[k])
        else:
            raise CliUsageError(f"configuration lacks a start value for {k!r}")
    if "dc_phase" in cfg:
        init["dc_phase"] = str(cfg["dc_phase"])
    phis = _phis(args)
    phases = None
    if phis is not None:
        if len(phis) == 1 and len(spectra) == 1:
            init["phi"] = phis[0]
        elif len(phis) == len(spectra):
            phases = phis
        else:
            raise CliUsageError("give one --phi value per data file")
    elif len(spectra) > 1:
        raise CliUsageError("joint fits need one --phi value per data file")
    free = (args.free or "readout_rate,gamma_s,n_s").split(",")
    free = [ALIASES.get(k.strip(), k.strip()) for k in free if k.strip()]
    # PSD noise scales with the PSD; fall back to uniform weights otherwise
    positive = all(np.all(sp.values > 0) for sp in spectra)
    weighting = "relative" if positive else "uniform"
    problem = FitProblem(data=spectra, model=model, free=free, init=init, phases=phases,
                         mask=_mask(args), weights="relative" if positive else None)
    report = fit_spectrum(problem)
    phase_list = phases if phases is not None else [report.params.get("phi", 0.0)]
    freqs, data, pred, phcol = [], [], [], []
    for spec, ph in zip(spectra, phase_list):
        freqs.append(spec.freqs)
        data.append(spec.values)
        pred.append(model_psd(model, report.params, spec.omega, phi=ph))
        phcol.append(np.full(len(spec), ph))
    freqs, data, pred, phcol = (np.concatenate(c) for c in (freqs, data, pred, phcol))
    summary = {"model": model, "weighting": weighting}
    for k in free:
        v, e = report.params[k], report.uncertainties[k]
        if k in ANGULAR:
            summary[f"{k}_hz"] = v / TWO_PI
            summary[f"{k}_hz_err"] = e / TWO_PI
        else:
            summary[k] = v
            summary[f"{k}_err"] = e
    summary.update({
        "residual_rss": report.residual_rss,
        "iterations": report.iterations,
        "converged": report.converged,
        "gradient_norm": report.gradient_norm,
        "negative_data": report.negative_data,
        "message": report.message,
    })
    if report.projected:
        summary["projected"] = ",".join(report.projected)
    header = ["freq_hz", "phi_rad", "data", "model", "residual"]
    return header, [freqs, phcol, data, pred, data - pred], summary


def cmd_squeeze(args, cfg):
    params = _oscillator(cfg)
    probe = _probe(cfg, _num(cfg, "phi", 0.0))
    tensor = _tensor(cfg)
    s_bb = _num(cfg, "s_bb", 0.0)
    if tensor is not None:
        params = tensor_damped(params, probe, tensor)
    res = optimize_squeezing(params, probe, tensor, s_bb)
    freqs = _grid(args, cfg, "squeeze")
    at_opt = ProbeConfig(phi=res.phi_opt, eta=probe.eta, alpha=probe.alpha, delta=probe.delta)
    psd = np.asarray(budget_terms(params, at_opt, tensor, hz_to_angular(freqs), s_bb).total)
    summary = {
        "phi_opt_rad": res.phi_opt,
        "phi_opt_over_pi": res.phi_opt / math.pi,
        "f_opt_hz": res.omega_opt / TWO_PI,
        "s_min": res.s_min,
        "s_min_db": res.s_min_db,
        "analytic_bound": res.analytic_bound,
        "analytic_bound_db": res.analytic_bound_db,
        "c_q": cooperativity(params),
        "eta": probe.eta,
    }
    return ["freq_hz", "psd_at_phi_opt"], [freqs, psd], summary


def cmd_shift(args, cfg):
    params = _oscillator(cfg)
    probe = _probe(cfg, _phi(args, cfg))
    tensor = _tensor(cfg)
    eff = effective_oscillator(params, probe.phi)
    freqs = _grid(args, cfg, "shift")
    spec = force_normalized_spectrum(params, probe, quantum_only=not args.full, freq_grid=freqs,
                                     tensor=tensor, s_bb=_num(cfg, "s_bb", 0.0))
    i = int(np.argmin(spec.values))
    summary = {
        "phi_rad": probe.phi,
        "omega_s_khz": params.omega_s / TWO_PI / 1e3,
        "omega_eff_khz": eff.omega_eff / TWO_PI / 1e3,
        "shift_khz": eff.shift / TWO_PI / 1e3,
        "readout_eff_hz": eff.readout_eff / TWO_PI,
        "f_force_min_hz": float(freqs[i]),
    }
    return ["freq_hz", "force_normalized"], [freqs, spec.values], summary


def cmd_detune(args, cfg):
    r_exp = _num(cfg, "r_exp", 5.0)
    if all(k in cfg for k in ("a_coeff", "c_coeff")):
        scaling = DetuningScaling(
            a_coeff=_num(cfg, "a_coeff"),
            c_coeff=_num(cfg, "c_coeff"),
            gamma_s0=_num(cfg, "gamma_s0"),
            d_coeff=_num(cfg, "d_coeff", 0.0),
            r_exp=r_exp,
            eta=_num(cfg, "eta", 1.0),
        )
    else:
        scaling = DetuningScaling.from_reference(
            delta_ref=_num(cfg, "delta_ref"),
            readout_ref=_num(cfg, "readout_ref"),
            gamma_pb_ref=_num(cfg, "gamma_pb_ref"),
            gamma_s0=_num(cfg, "gamma_s0"),
            dc_ref=_num(cfg, "dc_ref", 0.0),
            r_exp=r_exp,
            eta=_num(cfg, "eta", 1.0),
        )
    lo, hi = _num(cfg, "delta_min"), _num(cfg, "delta_max")
    points = args.points if args.points is not None else int(cfg.get("points", 200))
    if points < 2 or not hi > lo > 0:
        raise CliUsageError(f"bad detuning range {lo}..{hi} rad/s with {points} points")
    delta = np.geomspace(lo, hi, points)
    s = squeezing_vs_detuning(scaling, delta)
    d_opt, s_min = optimal_detuning(scaling, (lo, hi))
    edge = "lower" if d_opt <= lo * (1 + 1e-6) else "upper" if d_opt >= hi * (1 - 1e-6) else "none"
    cols = [
        delta / TWO_PI / 1e9,
        readout_at(scaling, delta) / TWO_PI,
        damping_at(scaling, delta) / TWO_PI,
        cooperativity_at(scaling, delta),
        area_qban(scaling, delta),
        area_tn(scaling, delta),
        area_dc(scaling, delta),
        s,
        to_db(s),
    ]
    header = ["delta_ghz", "readout_hz", "gamma_s_hz", "c_q", "area_qban", "area_tn",
              "area_dc", "s_total", "s_total_db"]
    summary = {
        "delta_opt_ghz": d_opt / TWO_PI / 1e9,
        "s_min": s_min,
        "s_min_db": float(to_db(s_min)),
        "boundary": edge,
        "c_q_at_opt": float(cooperativity_at(scaling, d_opt)),
    }
    return header, cols, summary


def cmd_mors(args, cfg):
    spectrum = load_spectrum(args.data)
    ladder = ZeemanLadder(_num(cfg, "omega_s"), _num(cfg, "omega_qzs"), _num(cfg, "linewidth"))
    res = fit_mors(spectrum, ladder, free_ladder=bool(cfg.get("free_ladder", True)))
    pops = res.populations
    pol = polarization(pops)
    summary = {name: pops[int(m)] for name, m in zip(MORS_POPS, M_LEVELS)}
    summary["polarization"] = pol
    summary["sign_ambiguous"] = res.sign_ambiguous
    try:
        sign = None if res.sign_ambiguous else classify_mass(pops)
    except IndeterminateError:
        sign = None
    summary["mass_sign"] = sign if sign is not None else "undetermined"
    summary["n_s"] = thermal_occupancy(pops, sign) if sign is not None else float("nan")
    summary.update({
        "omega_s_hz": res.ladder.omega_s / TWO_PI,
        "omega_qzs_hz": res.ladder.omega_qzs / TWO_PI,
        "linewidth_hz": res.ladder.linewidth / TWO_PI,
        "residual_rss": res.residual,
        "iterations": res.report.iterations,
        "converged": res.report.converged,
    })
    model = mors_spectrum(res.ladder, pops, spectrum.freqs).values
    header = ["freq_hz", "data", "model", "residual"]
    return header, [spectrum.freqs, spectrum.values, model, spectrum.values - model], summary


def cmd_gwd(args, cfg):
    config = GwdConfig(
        omega_qi=_num(cfg, "omega_qi", TWO_PI * 100.0),
        squeeze_db=_num(cfg, "squeeze_db", 10.0),
        c_q=_num(cfg, "c_q", 40.0),
        n_s=_num(cfg, "n_s", 0.0),
    )
    n_thermal = _num(cfg, "n_s_thermal", 2.0)
    freqs = _grid(args, cfg, "gwd", log=True)
    curves = projection_curves(freqs, config, n_thermal)
    names = ("qn", "squeezed", "joint", "joint_thermal")
    below = freqs[curves["joint"] < 1.0]
    summary = {
        "omega_qi_hz": config.omega_qi / TWO_PI,
        "squeeze_db": config.squeeze_db,
        "c_q": config.c_q,
        "n_s": config.n_s,
        "n_s_thermal": n_thermal,
        "joint_below_sql_fmin_hz": float(below.min()) if below.size else float("nan"),
        "joint_below_sql_fmax_hz": float(below.max()) if below.size else float("nan"),
    }
    header = ["freq_hz"] + [f"{n}_db" for n in names]
    return header, [freqs] + [to_db(curves[n]) for n in names], summary


COMMANDS = {
    "psd": cmd_psd,
    "fit": cmd_fit,
    "squeeze": cmd_squeeze,
    "shift": cmd_shift,
    "detune": cmd_detune,
    "mors": cmd_mors,
    "gwd": cmd_gwd,
}


@contextlib.contextmanager
def _sink(path, default):
    if path is None:
        yield default
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def run_cli(argv=None, stdout=None, stderr=None):
    """Run one subcommand and return its exit status."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if extra:
            # report against the subcommand so its own flags appear in the help
            parser.subcommands[args.command].error(f"unrecognized arguments: {' '.join(extra)}")
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = _config(args)
        header, cols, summary = COMMANDS[args.command](args, cfg)
        with _sink(args.out, stdout) as fh:
            write_table(fh, header, cols)
        with _sink(args.summary, stderr) as fh:
            write_summary(fh, summary)
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error of ours
        if stdout is sys.stdout:
            devnull = os.open(os.devnull, os.O_WRONLY)
            os.dup2(devnull, sys.stdout.fileno())
        return EXIT_OK
    except NumericalError as exc:
        stderr.write(f"spinnoise {args.command}: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        stderr.write(f"spinnoise {args.command}: {exc}\n")
        return EXIT_USAGE
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
