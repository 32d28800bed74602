"""
Command-line front end.

Every subcommand reads an optional INI config, applies flag overrides, runs one
module operation and writes a CSV whose first line is a run manifest::

    # omcavity version=0.1.0 command=cool seed=0 config_sha256=...

Exit codes: 0 success, 2 validation error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, bath, cooling, counting, csvio, design, model
from .errors import FitError, ValidationError
from .model import TWO_PI, hz, to_hz

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3

_PRESET_DEVICES = {"eight_shield": model.EIGHT_SHIELD, "zero_shield": model.ZERO_SHIELD}


@dataclass(frozen=True)
class Key:
    kind: type
    default: object
    unit: str
    help: str


def _device_defaults(dev):
    return {
        "f_c_hz": to_hz(dev.cavity.omega_c), "kappa_hz": to_hz(dev.cavity.kappa),
        "kappa_e_hz": to_hz(dev.cavity.kappa_e), "f_m_hz": to_hz(dev.mode.omega_m),
        "gamma_0_hz": to_hz(dev.mode.gamma_0), "gamma_phi_hz": to_hz(dev.mode.gamma_phi),
        "g0_hz": to_hz(dev.mode.g_0),
    }


# section -> key -> Key; device values default to the chosen preset
SCHEMA = {
    "device": {
        "preset": Key(str, "eight_shield", "", "eight_shield or zero_shield; other keys override it"),
        "f_c_hz": Key(float, None, "Hz", "optical resonance frequency"),
        "kappa_hz": Key(float, None, "Hz", "total optical linewidth"),
        "kappa_e_hz": Key(float, None, "Hz", "extrinsic optical linewidth"),
        "f_m_hz": Key(float, None, "Hz", "acoustic mode frequency"),
        "gamma_0_hz": Key(float, None, "Hz", "intrinsic acoustic damping"),
        "gamma_phi_hz": Key(float, None, "Hz", "pure dephasing"),
        "g0_hz": Key(float, None, "Hz", "vacuum optomechanical coupling"),
    },
    "bath": {
        "occ_amplitude": Key(float, 1.1, "", "n_p = A x^p amplitude"),
        "occ_exponent": Key(float, 0.3, "", "n_p exponent"),
        "damp_low_amplitude_hz": Key(float, 1.1e3, "Hz", "low-branch linewidth amplitude"),
        "damp_low_exponent": Key(float, 0.61, "", "low-branch exponent"),
        "damp_high_offset_hz": Key(float, 23.91e3, "Hz", "high-branch offset"),
        "damp_high_amplitude_hz": Key(float, 9.01e3, "Hz", "high-branch amplitude"),
        "damp_high_exponent": Key(float, 0.29, "", "high-branch exponent"),
        "gamma_phi_hz": Key(float, 14.54e3, "Hz", "dephasing in the linewidth law"),
        "beta": Key(float, model.BETA_FIT, "1/W", "waveguide heating photons per on-chip watt"),
        "n_0": Key(float, 4e-4, "", "base occupancy"),
        "t_0_k": Key(float, 0.063, "K", "base temperature"),
    },
    "sweep": {
        "nc_min": Key(float, 0.1, "photons", "first n_c"),
        "nc_max": Key(float, 1e4, "photons", "last n_c"),
        "nc_points": Key(int, 41, "", "log-spaced n_c points"),
        "qc_min": Key(float, 1e5, "", "first loaded Q"),
        "qc_max": Key(float, 1e7, "", "last loaded Q"),
        "qc_points": Key(int, 21, "", "log-spaced Q points"),
        "p_min_w": Key(float, 1e-9, "W", "first on-chip power (photons)"),
        "p_max_w": Key(float, 1e-3, "W", "last on-chip power (photons)"),
        "p_points": Key(int, 25, "", "log-spaced power points (photons)"),
        "detuning_hz": Key(float, 0.0, "Hz", "pump detuning omega_c - omega_p (photons)"),
    },
    "counting": {
        "eta_det": Key(float, 0.1, "", "chip-to-click detection efficiency"),
        "eta_cpl": Key(float, model.ETA_CPL, "", "fiber-to-chip efficiency"),
        "dark_rate_hz": Key(float, 0.6, "1/s", "detector dark count rate"),
        "bleed_rate_hz": Key(float, 1.0, "1/s", "pump bleed-through rate"),
        "tau_pulse_s": Key(float, 10e-6, "s", "pulse length"),
        "tau_off_s": Key(float, 240e-6, "s", "delay between pulses"),
        "tau_bin_s": Key(float, 25.6e-9, "s", "counting bin width"),
        "n_pulses": Key(int, 10**8, "", "accumulated pulses"),
        "case": Key(str, "red", "", "red, blue or resonant"),
        "n_c": Key(float, 9.9, "photons", "intracavity photons during the pulse"),
        "n_start": Key(float, None, "", "occupancy at pulse start (default n_0)"),
        "bath_rise_tau_s": Key(float, None, "s", "hot-bath turn-on time constant"),
    },
    "ringdown": {
        "tau_min_s": Key(float, 1e-3, "s", "shortest delay"),
        "tau_max_s": Key(float, 0.1, "s", "longest delay"),
        "tau_points": Key(int, 12, "", "log-spaced delays"),
        "n_c_peak": Key(float, 60.0, "photons", "pulse photon number"),
        "n_pulses": Key(int, 10**7, "", "pulses per delay"),
    },
    "optimize": {
        "n_restarts": Key(int, 10, "", "random restarts"),
        "max_evals": Key(int, 2000, "", "evaluations per restart"),
        "gap_nm": Key(float, 60.0, "nm", "minimum fabricable gap"),
        "tol_f": Key(float, 1e-4, "", "relative fitness spread for convergence"),
        "noise": Key(float, 0.0, "", "relative surrogate noise on g0"),
    },
    "spectrum": {
        "n_c": Key(float, 100.0, "photons", "pump photons"),
        "span_hz": Key(float, 1e6, "Hz", "half-width of the frequency window"),
        "points": Key(int, 401, "", "frequency points"),
    },
    "run": {
        "seed": Key(int, 0, "", "64-bit unsigned master seed"),
        "threads": Key(int, None, "", "worker threads (default: CPU count)"),
    },
}


def schema_help():
    lines = ["config keys ([section] key = value; frequencies in ordinary Hz):"]
    for sec, keys in SCHEMA.items():
        lines.append(f"  [{sec}]")
        for k, spec in keys.items():
            unit = f" ({spec.unit})" if spec.unit else ""
            dflt = "" if spec.default is None else f" [default {spec.default}]"
            lines.append(f"    {k}{unit}: {spec.help}{dflt}")
    return "\n".join(lines)


def _parse_value(sec, key, text):
    spec = SCHEMA[sec][key]
    if spec.kind is str:
        return text.strip()
    try:
        if spec.kind is int:
            v = float(text)
            if not v.is_integer():
                raise ValueError
            return int(v)
        v = float(text)
    except (TypeError, ValueError):
        raise ValidationError(f"[{sec}] {key}: expected {spec.kind.__name__}, got {text!r}") from None
    if not math.isfinite(v):
        raise ValidationError(f"[{sec}] {key}: must be finite")
    return v


def load_config(path=None, overrides=None):
    """Resolved ``{section: {key: value}}`` from an INI file plus overrides.

    Unknown sections and keys are errors; every value is type-checked here and
    range-checked by the type that consumes it.
    """
    raw: dict[str, dict[str, object]] = {s: {} for s in SCHEMA}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, strict=True)
        cp.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ValidationError(f"config {path}: {exc}") from None
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ValidationError(f"unknown config section [{sec}]")
            for key, text in cp.items(sec):
                if key not in SCHEMA[sec]:
                    raise ValidationError(f"unknown config key [{sec}] {key}")
                raw[sec][key] = _parse_value(sec, key, text)
    for (sec, key), v in (overrides or {}).items():
        if v is not None:
            raw[sec][key] = _parse_value(sec, key, str(v)) if isinstance(v, str) else v
    cfg = {s: {k: raw[s].get(k, spec.default) for k, spec in SCHEMA[s].items()} for s in SCHEMA}
    preset = cfg["device"]["preset"]
    if preset not in _PRESET_DEVICES:
        raise ValidationError(f"[device] preset: unknown preset {preset!r}")
    for k, v in _device_defaults(_PRESET_DEVICES[preset]).items():
        if cfg["device"][k] is None:
            cfg["device"][k] = v
    seed = cfg["run"]["seed"]
    if not 0 <= seed < 2**64:
        raise ValidationError("[run] seed: must be a 64-bit unsigned integer")
    return cfg


def config_digest(cfg):
    """SHA-256 of the resolved configuration (canonical text form)."""
    text = "\n".join(f"{s}.{k}={csvio.format_value(v)}" for s in sorted(cfg) for k, v in sorted(cfg[s].items())
                     if not (s == "run" and k == "threads"))
    return hashlib.sha256(text.encode()).hexdigest()


def _wrap(section, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except ValidationError as exc:
        raise ValidationError(f"[{section}] {exc}") from None


def build_device(cfg):
    d = cfg["device"]
    cav = _wrap("device", model.OpticalCavity.from_hz, d["f_c_hz"], d["kappa_hz"], d["kappa_e_hz"])
    mode = _wrap("device", model.MechanicalMode.from_hz, d["f_m_hz"], d["gamma_0_hz"], d["gamma_phi_hz"], d["g0_hz"])
    return model.Device(cav, mode)


def build_bath(cfg):
    b = cfg["bath"]
    return _wrap("bath", model.HotBathModel,
                 occ_amplitude=b["occ_amplitude"], occ_exponent=b["occ_exponent"],
                 damp_low_amplitude=hz(b["damp_low_amplitude_hz"]), damp_low_exponent=b["damp_low_exponent"],
                 damp_high_offset=hz(b["damp_high_offset_hz"]),
                 damp_high_amplitude=hz(b["damp_high_amplitude_hz"]),
                 damp_high_exponent=b["damp_high_exponent"], gamma_phi=hz(b["gamma_phi_hz"]),
                 beta=b["beta"], n_0=b["n_0"], t_0=b["t_0_k"])


def build_chain(cfg):
    c = cfg["counting"]
    return _wrap("counting", counting.DetectionChain, c["eta_det"], c["dark_rate_hz"], c["bleed_rate_hz"],
                 c["eta_cpl"])


def _geom(section, lo_key, hi_key, n_key, cfg):
    s = cfg[section]
    lo, hi, n = s[lo_key], s[hi_key], s[n_key]
    if not (0 < lo and (lo < hi or (lo == hi and n == 1))):
        raise ValidationError(f"[{section}] {lo_key}, {hi_key}: need 0 < min < max")
    if n < 1 or (n == 1 and lo != hi) or (n > 1 and lo == hi):
        raise ValidationError(f"[{section}] {n_key}: need >= 2 points for a range")
    return np.geomspace(lo, hi, n)


# --------------------------------------------------------------------------
# Subcommands: each returns (header, rows, extra comment lines)
# --------------------------------------------------------------------------


def cmd_photons(cfg, args):
    dev = build_device(cfg)
    p = _geom("sweep", "p_min_w", "p_max_w", "p_points", cfg)
    delta = hz(cfg["sweep"]["detuning_hz"])
    rows = []
    for pw in p:
        drive = _wrap("sweep", model.DriveCondition, pw, delta)
        rows.append((pw, to_hz(delta), float(model.intracavity_photons(dev.cavity, drive))))
    return ("p_in_w", "detuning_hz", "n_c"), rows, []


def _sweep(cfg):
    return cooling.SweepSpec(_geom("sweep", "nc_min", "nc_max", "nc_points", cfg))


def cmd_cool(cfg, args):
    res = cooling.cooling_curve(build_device(cfg), build_bath(cfg), _sweep(cfg), threads=args.threads)
    return cooling.CURVE_COLUMNS, cooling.curve_rows(res), [f"beta_per_w={csvio.format_value(cfg['bath']['beta'])}"]


def cmd_ceff(cfg, args):
    cc = cooling.ceff_curve(build_device(cfg), build_bath(cfg), _sweep(cfg), threads=args.threads)
    notes = [f"crossing_n_c={csvio.format_value(cc.crossing)}", f"peak_c_eff={csvio.format_value(cc.peak)}",
             f"peak_n_c={csvio.format_value(cc.peak_n_c)}"]
    return cooling.CURVE_COLUMNS, cooling.curve_rows(cc.results), notes


def cmd_map(cfg, args):
    beta = args.beta if args.beta is not None else 0.0
    cm = cooling.ceff_map(build_device(cfg), build_bath(cfg),
                          _geom("sweep", "nc_min", "nc_max", "nc_points", cfg),
                          _geom("sweep", "qc_min", "qc_max", "qc_points", cfg), beta, threads=args.threads)
    if args.contours:
        cooling.write_contours(args.contours, cm, [manifest(args, cfg)])
    return cooling.MAP_COLUMNS, cooling.map_rows(cm), [f"beta_per_w={csvio.format_value(cm.beta)}"]


def cmd_bath_fit(cfg, args):
    if not args.input:
        raise ValidationError("bath-fit needs --input (CSV with n_c, value[, sigma] in Hz)")
    x, y, s = bath.read_sweep(args.input)
    fit = bath.fit_piecewise_linewidth(x, hz(y), None if s is None else hz(s), plateau_max=args.plateau_max)
    return ("parameter", "value", "stderr", "unit"), bath.fit_report_rows(fit, rate_unit_hz=True), []


def cmd_ringdown(cfg, args):
    dev = build_device(cfg)
    if args.input:
        data = counting.RingdownDataset.from_csv(args.input, omega_m=dev.mode.omega_m)
    else:
        r = cfg["ringdown"]
        taus = _geom("ringdown", "tau_min_s", "tau_max_s", "tau_points", cfg)
        data = counting.simulate_ringdown(dev, build_bath(cfg), build_chain(cfg), taus, r["n_c_peak"],
                                          cfg["run"]["seed"], tau_pulse=cfg["counting"]["tau_pulse_s"],
                                          tau_bin=cfg["counting"]["tau_bin_s"], n_pulses=r["n_pulses"],
                                          threads=args.threads)
    fit = counting.fit_ringdown(data, dev.mode.omega_m)
    notes = [f"gamma_0_hz={csvio.format_value(to_hz(fit.gamma_0_hat))}",
             f"q_m={csvio.format_value(fit.q_m_hat)}",
             f"q_m_ci={csvio.format_value(fit.q_m_ci[0])}..{csvio.format_value(fit.q_m_ci[1])}"]
    rows = zip(data.tau_off, data.n_i, data.n_i_sigma, data.n_f)
    return ("tau_off_s", "n_i", "n_i_sigma", "n_f"), rows, notes


def cmd_counts(cfg, args):
    dev = build_device(cfg)
    c = cfg["counting"]
    law = build_bath(cfg)
    case = _wrap("counting", counting.detuning_case, c["case"])
    delta = {"red": dev.mode.omega_m, "blue": -dev.mode.omega_m, "resonant": 0.0}[case]
    p_in = float(model.input_power_for_photons(dev.cavity, delta, c["n_c"]))
    b = model.hot_bath(law, c["n_c"], p_in, mode=dev.mode)
    g_om = float(model.parametric_rate(dev.mode, dev.cavity, c["n_c"]))
    sched = _wrap("counting", counting.PulseSchedule, c["tau_pulse_s"], c["tau_off_s"], c["tau_bin_s"],
                  c["n_pulses"])
    n_start = b.n_0 if c["n_start"] is None else c["n_start"]
    traj = counting.pulse_occupancy_dynamics(dev.mode, b, g_om, case, n_start, c["tau_pulse_s"],
                                             c["bath_rise_tau_s"])
    mu = counting.expected_pulse_counts(build_chain(cfg), dev.cavity, dev.mode, g_om, traj, case, sched)
    hist = counting.poisson_counts(mu, sched, cfg["run"]["seed"])
    pulses = np.full(len(hist.counts), hist.n_pulses)
    notes = [f"case={case}", f"tau_bin_s={csvio.format_value(sched.tau_bin)}"]
    return ("bin_start_s", "counts", "pulses"), zip(hist.bin_start, hist.counts.astype(np.int64), pulses), notes


def cmd_optimize(cfg, args):
    o = cfg["optimize"]
    bounds = _wrap("optimize", design.DesignBounds, gap=o["gap_nm"])
    opts = _wrap("optimize", design.NelderMeadOptions, tol_f=o["tol_f"], max_evals=o["max_evals"],
                 keep_simplices=False)
    if o["noise"] < 0:
        raise ValidationError("[optimize] noise: must be >= 0")
    sur = design.default_surrogate(noise=o["noise"], seed=cfg["run"]["seed"])
    res = design.multi_restart(sur, bounds, o["n_restarts"], cfg["run"]["seed"], opts, threads=args.threads)
    best = res.best
    notes = [f"best_fitness_hz={csvio.format_value(best.fitness / TWO_PI)}",
             "best_design_nm=" + " ".join(f"{p}={csvio.format_value(v)}"
                                          for p, v in zip(design.PARAMS, best.design.as_array()))]
    return design.SearchTrace.HEADER, res.trace.rows(), notes


def cmd_spectrum(cfg, args):
    dev = build_device(cfg)
    s = cfg["spectrum"]
    if s["points"] < 2 or not s["span_hz"] > 0:
        raise ValidationError("[spectrum] points >= 2 and span_hz > 0 required")
    r = cooling.cooling_point(dev, build_bath(cfg), s["n_c"])
    b = model.hot_bath(build_bath(cfg), s["n_c"], r.p_in, mode=dev.mode)
    lw = model.total_linewidth(dev.mode, b, r.gamma_om)
    off = np.linspace(-s["span_hz"], s["span_hz"], s["points"])
    dens = model.thermal_noise_spectrum(dev.mode, lw, r.n_avg, dev.mode.omega_m + hz(off)) * TWO_PI
    notes = [f"n_avg={csvio.format_value(r.n_avg)}", f"linewidth_hz={csvio.format_value(to_hz(lw))}"]
    return ("offset_hz", "phonons_per_hz"), zip(off, dens), notes


COMMANDS = {
    "photons": (cmd_photons, "intracavity photons versus on-chip power"),
    "cool": (cmd_cool, "back-action cooling curve"),
    "ceff": (cmd_ceff, "quantum cooperativity curve"),
    "map": (cmd_map, "cooperativity map over loaded Q and photon number (beta = 0 unless --beta)"),
    "bath-fit": (cmd_bath_fit, "piecewise power-law fit of a linewidth sweep"),
    "ringdown": (cmd_ringdown, "simulate (or read) and fit a pulsed ringdown"),
    "counts": (cmd_counts, "simulated single-photon counting histogram of one pulse train"),
    "optimize": (cmd_optimize, "multi-restart simplex search on the surrogate evaluator"),
    "spectrum": (cmd_spectrum, "thermal noise spectrum of the cooled mode"),
}

# flag dest -> (section, key)
FLAG_KEYS = {
    "seed": ("run", "seed"), "threads": ("run", "threads"), "beta": ("bath", "beta"),
    "nc_min": ("sweep", "nc_min"), "nc_max": ("sweep", "nc_max"), "nc_points": ("sweep", "nc_points"),
    "qc_min": ("sweep", "qc_min"), "qc_max": ("sweep", "qc_max"), "qc_points": ("sweep", "qc_points"),
    "p_min": ("sweep", "p_min_w"), "p_max": ("sweep", "p_max_w"), "p_points": ("sweep", "p_points"),
    "detuning_hz": ("sweep", "detuning_hz"), "n_c": ("counting", "n_c"), "case": ("counting", "case"),
    "n_pulses": ("counting", "n_pulses"), "restarts": ("optimize", "n_restarts"),
    "noise": ("optimize", "noise"), "tau_points": ("ringdown", "tau_points"),
    "ringdown_pulses": ("ringdown", "n_pulses"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="omcavity", description=__doc__.split("\n\n")[0].strip(),
                                epilog=schema_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"omcavity {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_, epilog=schema_help(),
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
        sp.add_argument("--seed", type=int, help="64-bit unsigned seed")
        sp.add_argument("--threads", type=int, help="worker threads (default: CPU count)")
        sp.add_argument("--beta", type=float, help="waveguide heating, photons per W")
        if name in ("cool", "ceff", "map"):
            sp.add_argument("--nc-min", type=float)
            sp.add_argument("--nc-max", type=float)
            sp.add_argument("--nc-points", type=int)
        if name == "map":
            sp.add_argument("--qc-min", type=float)
            sp.add_argument("--qc-max", type=float)
            sp.add_argument("--qc-points", type=int)
            sp.add_argument("--contours", help="also write iso-C_eff polylines to this CSV")
        if name == "photons":
            sp.add_argument("--p-min", type=float, help="W")
            sp.add_argument("--p-max", type=float, help="W")
            sp.add_argument("--p-points", type=int)
            sp.add_argument("--detuning-hz", type=float)
        if name == "bath-fit":
            sp.add_argument("--input", help="sweep CSV: n_c, value[, sigma] (linewidths in Hz)")
            sp.add_argument("--plateau-max", type=float, default=10.0, help="photons")
        if name == "ringdown":
            sp.add_argument("--input", help="fit this ringdown CSV instead of simulating")
            sp.add_argument("--tau-points", type=int)
            sp.add_argument("--ringdown-pulses", type=int, help="pulses per delay")
        if name == "counts":
            sp.add_argument("--n-c", type=float, help="photons")
            sp.add_argument("--case", help="red, blue or resonant")
            sp.add_argument("--n-pulses", type=int)
        if name == "optimize":
            sp.add_argument("--restarts", type=int)
            sp.add_argument("--noise", type=float)
    return p


def manifest(args, cfg):
    return (f"omcavity version={__version__} command={args.command} seed={cfg['run']['seed']} "
            f"config_sha256={config_digest(cfg)}")


def run(argv=None, stdout=None):
    """Parse ``argv``, run the subcommand and return the exit code."""
    stdout = stdout or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        overrides = {FLAG_KEYS[k]: v for k, v in vars(args).items() if k in FLAG_KEYS}
        cfg = load_config(args.config, overrides)
        threads = cfg["run"]["threads"]
        if threads is None:
            threads = os.cpu_count() or 1
        if threads < 1:
            raise ValidationError("[run] threads: must be >= 1")
        args.threads = threads
        fn = COMMANDS[args.command][0]
        with np.errstate(divide="raise", over="raise", invalid="raise"):
            header, rows, notes = fn(cfg, args)
            text = csvio.dumps(header, rows, [manifest(args, cfg), *notes])
    except ValidationError as exc:
        print(f"omcavity: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FitError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"omcavity: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.out == "-":
        stdout.write(text)
    else:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"omcavity: error: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
            return EXIT_VALIDATION
    return EXIT_OK


def main(argv=None):
    try:
        code = run(argv)
    except BrokenPipeError:
        # reader closed the pipe early (e.g. `| head`); not an error of ours
        sys.stderr.close()
        code = EXIT_OK
    sys.exit(code)


if __name__ == "__main__":
    main()
