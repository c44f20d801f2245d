"""Command-line interface.

``donorsim <subcommand> [flags]`` wires the physics modules together:
seeded ensemble experiments, spectra, level sweeps, fitting, and the
sequence-text tools.  Numeric results are emitted as CSV (see csvio);
everything is deterministic for a fixed seed and worker count.

Exit codes: 0 success, 1 validation/usage error (bad flag, bad config
value, malformed input data), 2 runtime error (I/O failure, integration
or convergence failure, fit that did not converge).
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

import numpy as np

from . import csvio, fitkit, pump, seqdsl, spincore
from .config import ConfigError, RunConfig, load_config, override, resolve_seed
from .noise import EnsembleSpec
from .program import UnboundSymbolError
from .pulse import (
    IntegrationStepError,
    hahn_experiment,
    rabi_experiment,
    ramsey_experiment,
    rf_spectrum,
)

_CONFIG_FLAG_ATTRS = (
    "seed", "output", "b0_ut", "b0_orientation", "b1_amplitude_mt", "transition",
    "members", "static_detuning_khz", "ou_sigma_khz", "ou_tau_c_s",
    "internal_fraction", "internal_field_ut", "t2_s", "stretching_n",
    "pump_rate_s", "pump_rate_t", "auger_rate", "branch_to_s",
    "randomization_rate", "gain", "optical_linewidth_mhz",
)


def _effective_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    updates = {
        attr: getattr(args, attr)
        for attr in _CONFIG_FLAG_ATTRS
        if getattr(args, attr, None) is not None
    }
    return override(cfg, **updates)


def _ensemble_spec(cfg: RunConfig, seed: int) -> EnsembleSpec:
    return EnsembleSpec(
        n_members=cfg.members,
        seed=seed,
        noise=cfg.noise_model(),
        transition=cfg.transition,
        b0_magnitude_ut=cfg.b0_ut,
        b0_orientation=cfg.b0_orientation,
        b1_amplitude_mt=cfg.b1_amplitude_mt,
    )


def _emit(args: argparse.Namespace, cfg: RunConfig, columns: Sequence[str], data: np.ndarray) -> None:
    target = args.output if args.output is not None else cfg.output
    csvio.emit_csv(target if target is not None else sys.stdout, columns, data)


# --- subcommand implementations ---------------------------------------------

def _cmd_levels(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    system = cfg.spin_system()
    if args.points < 2:
        raise ConfigError("--points must be >= 2")
    if not 0.0 <= args.bmin_mt < args.bmax_mt:
        raise ConfigError("need 0 <= --bmin-mt < --bmax-mt")
    b_mt = np.linspace(args.bmin_mt, args.bmax_mt, args.points)
    levels = spincore.breit_rabi_levels(system, b_mt * spincore.UT_PER_MT)
    data = np.column_stack([b_mt, levels["S"], levels["T-"], levels["T0"], levels["T+"]])
    _emit(args, cfg, [
        "b_mt", "energy_S_mhz", "energy_Tminus_mhz", "energy_T0_mhz", "energy_Tplus_mhz",
    ], data)
    return 0


def _cmd_rf_spectrum(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    system = cfg.spin_system()
    seed = resolve_seed(args.seed, cfg)
    if args.points < 2:
        raise ConfigError("--points must be >= 2")
    offsets = np.linspace(args.offset_min_khz, args.offset_max_khz, args.points)
    spec = _ensemble_spec(cfg, seed)
    curve = rf_spectrum(spec, system, offsets, kernel_fwhm_khz=args.kernel_fwhm_khz)
    _emit(args, cfg, ["offset_khz", "response"], np.column_stack([curve.x, curve.values]))
    return 0


def _cmd_optical_spectrum(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    if args.points < 2:
        raise ConfigError("--points must be >= 2")
    grid = np.linspace(args.scan_min_invcm, args.scan_max_invcm, args.points)
    pcfg = cfg.pump_config()
    signal = pump.optical_spectrum(
        grid,
        line_s_inv_cm=args.line_s_invcm,
        line_t_inv_cm=args.line_t_invcm,
        cfg=pcfg,
        pump_setting=args.pump,
        probe_peak_rate=args.probe_peak_rate,
        pump_peak_rate=args.pump_peak_rate,
        doublet_split_inv_cm=args.doublet_split_invcm,
    )
    _emit(args, cfg, ["detuning_invcm", "signal"], np.column_stack([grid, signal.values]))
    return 0


def _cmd_rabi(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    system = cfg.spin_system()
    seed = resolve_seed(args.seed, cfg)
    if args.points < 2:
        raise ConfigError("--points must be >= 2")
    lengths_s = np.linspace(0.0, args.max_us * 1e-6, args.points)
    curve = rabi_experiment(_ensemble_spec(cfg, seed), system, lengths_s)
    _emit(args, cfg, ["pulse_s", "p_transfer"], np.column_stack([curve.x, curve.values]))
    return 0


def _cmd_ramsey(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    system = cfg.spin_system()
    seed = resolve_seed(args.seed, cfg)
    if args.points < 2:
        raise ConfigError("--points must be >= 2")
    taus_s = np.linspace(args.tau_min_s, args.tau_max_s, args.points)
    curve = ramsey_experiment(_ensemble_spec(cfg, seed), system, taus_s)
    _emit(args, cfg, ["tau_s", "p_transfer"], np.column_stack([curve.x, curve.values]))
    return 0


def _cmd_hahn(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    system = cfg.spin_system()
    seed = resolve_seed(args.seed, cfg)
    if args.points < 2:
        raise ConfigError("--points must be >= 2")
    if not 0 < args.tau_min_s < args.tau_max_s:
        raise ConfigError("need 0 < --tau-min-s < --tau-max-s")
    taus_s = np.linspace(args.tau_min_s, args.tau_max_s, args.points)
    series = hahn_experiment(
        _ensemble_spec(cfg, seed),
        system,
        taus_s,
        detection=args.detection,
        shots_per_point=args.shots,
        workers=args.workers,
    )
    data = np.column_stack([series.taus_s, series.values, series.shot_counts])
    _emit(args, cfg, ["tau_s", "echo", "shots"], data)
    return 0


def _parse_triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--peak needs 'center,width,amplitude', got {text!r}")
    try:
        center, width, amp = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--peak values must be numbers, got {text!r}") from None
    return center, width, amp


def _cmd_fit(args: argparse.Namespace) -> int:
    columns, data = csvio.read_csv(args.input)
    if data.shape[0] < 3 or data.shape[1] < 2:
        raise ConfigError(f"{args.input}: need at least 3 rows and 2 columns to fit")
    x, y = data[:, 0], data[:, 1]
    if args.model == "stretched":
        initial = None
        if args.initial is not None:
            initial = [float(v) for v in args.initial.split(",")]
        result = fitkit.fit_stretched_exp(x, y, initial=initial, fix_n=args.fix_n)
    else:
        peaks = [_parse_triple(p) for p in args.peak or []]
        if len(peaks) != args.k:
            raise ConfigError(f"--model peaks needs exactly k={args.k} --peak triples")
        result = fitkit.fit_peaks(
            x, y, args.k, shape=args.shape, initial=peaks, baseline=args.baseline
        )
    out = sys.stdout if args.output is None else open(args.output, "w", encoding="utf-8")
    try:
        out.write(f"# fit of {columns[1]} vs {columns[0]} ({args.model})\n")
        for name, value, err in zip(result.names, result.params, result.stderr):
            out.write(f"{name} = {csvio.format_value(value)} +- {csvio.format_value(err)}\n")
        out.write(f"rss = {csvio.format_value(result.rss)}\n")
        out.write(f"iterations = {result.iterations}\n")
        out.write(f"converged = {str(result.converged).lower()}\n")
        for note in result.diagnostics:
            out.write(f"# note: {note}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0 if result.converged else 2


def _cmd_parse(args: argparse.Namespace) -> int:
    if args.file == "-":
        text = sys.stdin.read()
    else:
        try:
            with open(args.file, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise OSError(f"cannot read {args.file!r}: {exc}") from exc
    ast = seqdsl.parse(text)
    diagnostics = seqdsl.validate(ast)
    for diag in diagnostics:
        print(f"{args.file}:{diag}", file=sys.stderr)
    if any(d.severity == "error" for d in diagnostics):
        return 1
    sys.stdout.write(seqdsl.pretty_print(ast))
    return 0


def _cmd_estimate_field(args: argparse.Namespace) -> int:
    cfg = _effective_config(args)
    system = cfg.spin_system()
    field_ut = spincore.estimate_field_from_splitting(args.splitting_khz, system)
    print(f"{field_ut:.3f} µT")
    return 0


# --- parser construction -----------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="config file (key = value with [section]s)")
    p.add_argument("--seed", type=int, metavar="N",
                   help="RNG seed; beats config file and DONORSIM_SEED")
    p.add_argument("--output", metavar="PATH", help="write output here instead of stdout")


def _add_ensemble(p: argparse.ArgumentParser) -> None:
    p.add_argument("--members", type=int, metavar="N", help="ensemble size")
    p.add_argument("--b0-ut", dest="b0_ut", type=float, metavar="UT",
                   help="static field magnitude in µT")
    p.add_argument("--orientation", dest="b0_orientation",
                   choices=("parallel", "perpendicular"),
                   help="B0 orientation relative to the drive field B1")
    p.add_argument("--transition", choices=("T0", "T+", "T-"),
                   help="driven transition (from the singlet)")
    p.add_argument("--b1-amplitude-mt", dest="b1_amplitude_mt", type=float, metavar="MT",
                   help="drive amplitude in mT")
    p.add_argument("--static-detuning-khz", dest="static_detuning_khz", type=float,
                   metavar="KHZ", help="per-member static detuning spread (1 sigma)")
    p.add_argument("--ou-sigma-khz", dest="ou_sigma_khz", type=float, metavar="KHZ",
                   help="OU field-noise amplitude, quoted as detuning on the "
                        "maximum-sensitivity line")
    p.add_argument("--ou-tau-c-s", dest="ou_tau_c_s", type=float, metavar="S",
                   help="OU noise correlation time in seconds")
    p.add_argument("--internal-fraction", dest="internal_fraction", type=float,
                   metavar="F", help="fraction of members with a frozen internal field")
    p.add_argument("--internal-field-ut", dest="internal_field_ut", type=float,
                   metavar="UT", help="internal field magnitude in µT")
    p.add_argument("--t2-s", dest="t2_s", type=float, metavar="S",
                   help="phenomenological coherence time in seconds")
    p.add_argument("--stretching-n", dest="stretching_n", type=float, metavar="N",
                   help="stretching exponent for the phenomenological decay")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="donorsim",
        description="Donor electron-nuclear spin simulator: energy levels, "
                    "spectra, pulsed experiments, fitting.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("levels", help="singlet/triplet energies vs field (CSV)")
    _add_common(p)
    p.add_argument("--bmin-mt", dest="bmin_mt", type=float, default=0.0, metavar="MT",
                   help="sweep start in mT (default 0)")
    p.add_argument("--bmax-mt", dest="bmax_mt", type=float, default=5.0, metavar="MT",
                   help="sweep end in mT (default 5)")
    p.add_argument("--points", type=int, default=500, metavar="N",
                   help="number of field points (default 500)")
    p.set_defaults(func=_cmd_levels)

    p = sub.add_parser("rf-spectrum", help="ensemble RF response vs frequency offset (CSV)")
    _add_common(p)
    _add_ensemble(p)
    p.add_argument("--offset-min-khz", dest="offset_min_khz", type=float, default=-150.0,
                   metavar="KHZ", help="scan start, offset from the hyperfine frequency")
    p.add_argument("--offset-max-khz", dest="offset_max_khz", type=float, default=150.0,
                   metavar="KHZ", help="scan end (default 150)")
    p.add_argument("--points", type=int, default=601, metavar="N",
                   help="number of scan points (default 601)")
    p.add_argument("--kernel-fwhm-khz", dest="kernel_fwhm_khz", type=float, default=2.0,
                   metavar="KHZ", help="display kernel width (default 2)")
    p.set_defaults(func=_cmd_rf_spectrum)

    p = sub.add_parser("optical-spectrum",
                       help="photoconductive signal vs probe detuning (CSV)")
    _add_common(p)
    p.add_argument("--pump", choices=pump.PUMP_SETTINGS, default="off",
                   help="hold a pump laser on one line while the probe scans")
    p.add_argument("--scan-min-invcm", dest="scan_min_invcm", type=float, default=-0.003,
                   metavar="CM1", help="probe scan start, cm^-1 (default -0.003)")
    p.add_argument("--scan-max-invcm", dest="scan_max_invcm", type=float, default=0.007,
                   metavar="CM1", help="probe scan end, cm^-1 (default 0.007)")
    p.add_argument("--points", type=int, default=801, metavar="N",
                   help="number of scan points (default 801)")
    p.add_argument("--line-s-invcm", dest="line_s_invcm", type=float,
                   default=spincore.HYPERFINE_A_MHZ / pump.MHZ_PER_INV_CM, metavar="CM1",
                   help="singlet line position (default: hyperfine splitting above T)")
    p.add_argument("--line-t-invcm", dest="line_t_invcm", type=float, default=0.0,
                   metavar="CM1", help="triplet line position (default 0)")
    p.add_argument("--doublet-split-invcm", dest="doublet_split_invcm", type=float,
                   default=0.0, metavar="CM1",
                   help="split each line into an equal doublet (default 0 = single lines)")
    p.add_argument("--probe-peak-rate", dest="probe_peak_rate", type=float, default=1e3,
                   metavar="RATE", help="probe pump rate at line center, 1/s (default 1e3)")
    p.add_argument("--pump-peak-rate", dest="pump_peak_rate", type=float, default=2e4,
                   metavar="RATE", help="pump rate at line center, 1/s (default 2e4)")
    p.add_argument("--pump-rate-s", dest="pump_rate_s", type=float, metavar="RATE",
                   help=argparse.SUPPRESS)
    p.add_argument("--pump-rate-t", dest="pump_rate_t", type=float, metavar="RATE",
                   help=argparse.SUPPRESS)
    p.add_argument("--auger-rate", dest="auger_rate", type=float, metavar="RATE",
                   help="Auger decay rate of the excited state, 1/s")
    p.add_argument("--branch-to-s", dest="branch_to_s", type=float, metavar="F",
                   help="fraction of Auger decays landing in the singlet")
    p.add_argument("--randomization-rate", dest="randomization_rate", type=float,
                   metavar="RATE", help="singlet/triplet randomization rate, 1/s")
    p.add_argument("--gain", type=float, metavar="G", help="readout gain")
    p.add_argument("--optical-linewidth-mhz", dest="optical_linewidth_mhz", type=float,
                   metavar="MHZ", help="optical line FWHM in MHz")
    p.set_defaults(func=_cmd_optical_spectrum)

    p = sub.add_parser("rabi", help="transfer probability vs pulse length (CSV)")
    _add_common(p)
    _add_ensemble(p)
    p.add_argument("--max-us", dest="max_us", type=float, default=200.0, metavar="US",
                   help="longest pulse in µs (default 200)")
    p.add_argument("--points", type=int, default=201, metavar="N",
                   help="number of pulse lengths (default 201)")
    p.set_defaults(func=_cmd_rabi)

    p = sub.add_parser("ramsey", help="two-pulse fringe signal vs free evolution (CSV)")
    _add_common(p)
    _add_ensemble(p)
    p.add_argument("--tau-min-s", dest="tau_min_s", type=float, default=0.0, metavar="S",
                   help="shortest free-evolution time (default 0)")
    p.add_argument("--tau-max-s", dest="tau_max_s", type=float, default=2e-3, metavar="S",
                   help="longest free-evolution time (default 2e-3)")
    p.add_argument("--points", type=int, default=101, metavar="N",
                   help="number of delays (default 101)")
    p.set_defaults(func=_cmd_ramsey)

    p = sub.add_parser("hahn", help="phase-cycled echo amplitude vs tau (CSV)")
    _add_common(p)
    _add_ensemble(p)
    p.add_argument("--tau-min-s", dest="tau_min_s", type=float, default=1e-3, metavar="S",
                   help="shortest half-evolution time (default 1e-3)")
    p.add_argument("--tau-max-s", dest="tau_max_s", type=float, default=0.12, metavar="S",
                   help="longest half-evolution time (default 0.12)")
    p.add_argument("--points", type=int, default=12, metavar="N",
                   help="number of tau points (default 12)")
    p.add_argument("--detection", choices=("mean", "max"), default="mean",
                   help="ensemble-mean readout or max-magnitude over random-phase shots")
    p.add_argument("--shots", type=int, default=None, metavar="N",
                   help="shots per point for max detection (default 100)")
    p.add_argument("--workers", type=int, default=1, metavar="N",
                   help="worker count; results are identical for any value")
    p.set_defaults(func=_cmd_hahn)

    p = sub.add_parser("fit", help="fit a stretched exponential or peaks to a CSV file")
    _add_common(p)
    p.add_argument("input", metavar="CSV", help="input file (x in column 1, y in column 2)")
    p.add_argument("--model", choices=("stretched", "peaks"), default="stretched",
                   help="model family (default stretched)")
    p.add_argument("--initial", metavar="A,T2[,N]",
                   help="initial guesses for the stretched model")
    p.add_argument("--fix-n", dest="fix_n", type=float, metavar="N",
                   help="hold the stretching exponent fixed")
    p.add_argument("--k", type=int, default=1, metavar="K",
                   help="number of peaks for --model peaks (default 1)")
    p.add_argument("--shape", choices=fitkit.PEAK_SHAPES, default="lorentzian",
                   help="peak shape (default lorentzian)")
    p.add_argument("--peak", action="append", metavar="C,W,A",
                   help="initial center,width,amplitude; repeat k times")
    p.add_argument("--baseline", type=float, metavar="B",
                   help="initial baseline (default: minimum of the data)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("parse", help="check a sequence file and print its canonical form")
    p.add_argument("file", metavar="FILE", help="sequence source path, or - for stdin")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("estimate-field", help="infer field magnitude from a line splitting")
    _add_common(p)
    p.add_argument("--splitting-khz", dest="splitting_khz", type=float, required=True,
                   metavar="KHZ", help="measured splitting between the outer lines")
    p.set_defaults(func=_cmd_estimate_field)

    return parser


_RUNTIME_ERRORS = (
    OSError,
    pump.StepSizeError,
    pump.ConvergenceError,
    pump.NoUniqueSteadyStateError,
    IntegrationStepError,
    RuntimeError,
)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; usage and
        # validation problems are exit code 1 here.
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except _RUNTIME_ERRORS as exc:
        print(f"donorsim: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, seqdsl.ParseError, seqdsl.CompileError, UnboundSymbolError,
            fitkit.RankDeficiencyError, ValueError) as exc:
        print(f"donorsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
