# Command-line front end: one subcommand per experiment, JSON configs,
# seeded determinism, CSV + JSON-sidecar + PNG outputs.
#
# Exit codes: 0 success, 2 config error, 3 numerical non-convergence,
# 4 I/O error.

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, analysis, dynamics, noise, plotting, qdyne, sensing, sequences
from .config import (ConfigError, SCHEMAS, load_config, model_from_config,
                     resolve_config, signal_from_config)

TWO_PI = 2.0 * math.pi
DEFAULT_SEED = 12345

log = logging.getLogger("cpdd")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _preset_path(name):
    base = resources.files("cpdd").joinpath("presets")
    candidate = base.joinpath(f"{name}.json")
    if not candidate.is_file():
        available = sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))
        raise ConfigError(f"unknown preset {name!r}; available: {available}")
    return candidate


def list_presets():
    base = resources.files("cpdd").joinpath("presets")
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def _write_meta(path, cfg, seed, extra=None):
    payload = json.dumps(cfg, sort_keys=True, default=str)
    meta = {
        "config": cfg,
        "seed": seed,
        "version": __version__,
        "config_hash": hashlib.sha256(payload.encode()).hexdigest()[:16],
        "generated_unix_time": time.time(),
    }
    if extra:
        meta.update(extra)
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _interval(cfg, signal):
    if cfg.get("interval_s"):
        return cfg["interval_s"]
    return math.pi / signal.frequency


def _build_spec(protocol, signal, interval, duration):
    per_block = len(sequences.PHASE_TABLES[protocol])
    reps = max(1, int(round(duration / (per_block * interval))))
    if protocol == "cx":
        return sequences.build_cx_intervals(signal.frequency, interval, reps * per_block)
    return sequences.build_cpdd(protocol, signal.frequency, interval, reps)


def cmd_robustness_map(cfg, out, seed, threads):
    wl = TWO_PI * cfg["target_freq_hz"]
    interval = math.pi / wl
    carrier = np.linspace(-cfg["carrier_span_frac"], cfg["carrier_span_frac"], cfg["grid_points"]) * wl
    mism = np.linspace(-cfg["mismatch_span_frac"], cfg["mismatch_span_frac"], cfg["grid_points"]) * wl
    summary = {}
    for protocol in cfg["protocols"]:
        if protocol == "cx":
            spec = sequences.build_cx_intervals(wl, interval, cfg["intervals"])
        else:
            table = sequences.PHASE_TABLES[protocol]
            if cfg["intervals"] % len(table):
                raise ConfigError(f"intervals must be a multiple of {len(table)} for {protocol}")
            spec = sequences.build_cpdd(protocol, wl, interval, cfg["intervals"] // len(table))
        if cfg["mc_shots"] > 0:
            dist = noise.NoiseParams(0.0, 0.0, cfg["mc_distribution"],
                                     cfg["mc_carrier_width_frac"] * wl,
                                     cfg["mc_rabi_width_frac"] * wl)
            fid = noise.robustness_map_mc(spec, carrier, mism, dist, cfg["mc_shots"], seed)
        else:
            fid = noise.robustness_map(spec, carrier, mism)
        csv = out / f"robustness_map_{protocol}.csv"
        noise.write_map_csv(csv, carrier, mism, fid)
        plotting.plot_map(carrier / wl, mism / wl, fid, out / f"robustness_map_{protocol}.png",
                          title=f"{protocol.upper()} fidelity, area {cfg['intervals']}*pi")
        frac = float(np.mean(fid > 0.99))
        summary[protocol] = {"area_above_0.99": frac, "min_fidelity": float(fid.min())}
        log.info("%s: fraction of grid with F>0.99: %.3f", protocol, frac)
    _write_meta(out / "robustness_map.meta.json", cfg, seed, {"summary": summary})
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_time_scan(cfg, out, seed, threads):
    signal = signal_from_config(cfg["signal"])
    model = model_from_config(cfg["model"])
    interval = _interval(cfg, signal)
    mism = TWO_PI * np.asarray(cfg["mismatches_hz"], dtype=float)
    for protocol in cfg["protocols"]:
        spec = _build_spec(protocol, signal, interval, cfg["duration_s"])
        traces = sensing.time_scan(spec, signal, mism, cfg["sample_interval_s"],
                                   model=model, frame=cfg["frame"])
        for res in traces:
            tag = "%s_%dkHz" % (protocol, round(res.meta["rabi_mismatch_rad_s"] / TWO_PI / 1e3))
            res.write_csv(out / f"time_scan_{tag}.csv")
        plotting.plot_traces(traces, out / f"time_scan_{protocol}.png",
                             title=f"{protocol.upper()} population vs time")
    _write_meta(out / "time_scan.meta.json", cfg, seed)
    return EXIT_OK


def cmd_detuning_scan(cfg, out, seed, threads):
    signal = signal_from_config(cfg["signal"])
    model = model_from_config(cfg["model"])
    interval = _interval(cfg, signal)
    results, labels, summary = [], [], {}
    for scan in cfg["scans"]:
        protocol = scan["protocol"]
        spec = _build_spec(protocol, signal, interval, cfg["duration_s"])
        grid = TWO_PI * np.linspace(scan["start_hz"], scan["stop_hz"], scan["count"])
        res = sensing.contrast_vs_detuning(spec, signal, grid, cfg["sample_interval_s"],
                                           model=model, frame=cfg["frame"])
        res.write_csv(out / f"detuning_scan_{protocol}.csv")
        hw = sensing.halfwidth_50pct(grid, res.mean)
        summary[protocol] = {"halfwidth_hz": hw / TWO_PI if math.isfinite(hw) else None,
                             "halfwidth_capped": not math.isfinite(hw)}
        results.append(res)
        labels.append(protocol.upper())
    plotting.plot_overlay(results, labels, out / "detuning_scan.png",
                          "Rabi mismatch (kHz)", "oscillation contrast",
                          xscale=1.0 / (TWO_PI * 1e3))
    _write_meta(out / "detuning_scan.meta.json", cfg, seed, {"summary": summary})
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_freq_scan(cfg, out, seed, threads):
    signal = signal_from_config(cfg["signal"])
    model = model_from_config(cfg["model"])
    spec = sequences.build_cpdd(cfg["protocol"], signal.frequency,
                                math.pi / signal.frequency, cfg["repetitions"])
    freqs = np.linspace(cfg["start_hz"], cfg["stop_hz"], cfg["count"])
    res = sensing.frequency_scan(spec, signal, freqs, model=model,
                                 phase_samples=cfg["phase_samples"], frame=cfg["frame"])
    res.write_csv(out / "freq_scan.csv")
    center, fwhm, depth = sensing.dip_fwhm(res)
    summary = {"dip_center_hz": center, "fwhm_hz": fwhm, "depth": depth,
               "fwhm_law_hz": 2.0 * signal.frequency / TWO_PI / (8 * cfg["repetitions"])}
    plotting.plot_scan(res, out / "freq_scan.png", "detection frequency (kHz)",
                       "population of |0>", xscale=1e-3,
                       title="dip %.1f kHz, FWHM %.1f kHz" % (center / 1e3, fwhm / 1e3))
    _write_meta(out / "freq_scan.meta.json", cfg, seed, {"summary": summary})
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_order_scan(cfg, out, seed, threads):
    signal = signal_from_config(cfg["signal"])
    model = model_from_config(cfg["model"])
    interval = _interval(cfg, signal)
    orders = range(cfg["order_start"], cfg["order_stop"] + 1, cfg["order_step"])
    res = sensing.order_scan(interval, signal, orders, model=model,
                             shots=cfg["shots"], seed=seed)
    res.write_csv(out / "order_scan.csv")
    fit = analysis.fit_bessel_decay(res.x, res.mean)
    g = fit.params["g_rad_s"]
    b_tesla = 2.0 * g / model.gyro
    summary = {"fit": fit.to_dict(), "g_hz": g / TWO_PI, "b_tesla": b_tesla}
    plotting.plot_scan(res, out / "order_scan.png", "total time (us)", "contrast",
                       xscale=1e6, title="g = 2pi * %.1f kHz, B = %.2f uT"
                       % (g / TWO_PI / 1e3, b_tesla * 1e6))
    _write_meta(out / "order_scan.meta.json", cfg, seed, {"summary": summary})
    print(json.dumps({k: summary[k] for k in ("g_hz", "b_tesla")}, indent=2))
    return EXIT_OK if fit.converged else EXIT_NUMERIC


def cmd_spurious(cfg, out, seed, threads):
    signal = signal_from_config(cfg["signal"])
    model = model_from_config(cfg["model"])
    interval = math.pi / signal.frequency
    table = sequences.PHASE_TABLES["cxy4"]
    blocks = cfg["pulses"] // len(table)
    if cfg["protocol"] == "cxy4r":
        spec = sequences.build_cxy4r(signal.frequency, interval, blocks)
    else:
        spec = sequences.build_cxy4(signal.frequency, interval, blocks)
    grid = sensing.spurious_default_grid(signal.frequency / TWO_PI,
                                         window_frac=cfg["window_frac"],
                                         window_points=cfg["window_points"],
                                         baseline_points=cfg["baseline_points"],
                                         span=(cfg["span_low"], cfg["span_high"]))
    res = sensing.spurious_spectrum(spec, signal, grid, runs=cfg["runs"], seed=seed,
                                    substeps=cfg["substeps"], model=model, threads=threads)
    res.write_csv(out / f"spurious_{cfg['protocol']}.csv")
    stats = sensing.harmonic_response(res, sensing.harmonic_positions(signal.frequency / TWO_PI),
                                      window_frac=cfg["window_frac"])
    plotting.plot_scan(res, out / f"spurious_{cfg['protocol']}.png",
                       "detection frequency (MHz)", "population of |0>", xscale=1e-6,
                       title=f"{cfg['protocol'].upper()} spurious-harmonic spectrum")
    _write_meta(out / f"spurious_{cfg['protocol']}.meta.json", cfg, seed, {"harmonics": stats})
    print(json.dumps(stats, indent=2))
    return EXIT_OK


def cmd_qdyne_sim(cfg, out, seed, threads):
    signal = signal_from_config(cfg["signal"])
    model = model_from_config(cfg["model"])
    schedule = sequences.QdyneSchedule(cfg["sequence_time_s"], cfg["overhead_s"],
                                       cfg["measurements"])
    qcfg = qdyne.QdyneConfig(schedule, signal, model, seed=seed)
    trace = qdyne.simulate_trace(qcfg, shot_noise=cfg["shot_noise"])
    base = out / "qdyne_trace"
    if cfg["format"] == "csv":
        trace.write_csv(base)
    trace.write(base)
    spectrum = analysis.power_spectrum(np.asarray(trace.counts, float)[: 1 << 16], trace.period)
    peak = spectrum.frequencies[1 + int(np.argmax(spectrum.power[1:]))]
    plotting.plot_spectrum(spectrum.frequencies, spectrum.power, out / "qdyne_trace.png",
                           peak_hz=peak, title="first-slice spectrum")
    summary = {"measurements": int(len(trace.counts)), "total_time_s": trace.total_time,
               "first_slice_peak_hz": float(peak), "config_hash": trace.meta["config_hash"]}
    _write_meta(out / "qdyne_sim.meta.json", cfg, seed, {"summary": summary})
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_qdyne_analyze(cfg, out, seed, threads):
    trace = qdyne.QdyneTrace.read(cfg["trace"])
    res = qdyne.analyze_trace(trace, cfg["prior_hz"], window_bins=cfg["window_bins"])
    report = {"analysis": res.to_dict(), "total_time_s": trace.total_time}
    targets = [1 << k for k in range(cfg["scaling_min_log2"], cfg["scaling_max_log2"] + 1)]
    targets = [n for n in targets if n <= len(trace.counts)]
    if len(targets) >= 4:
        if cfg["scaling_align"]:
            targets = [qdyne.align_slice_length(n, res.beat_hz, trace.period) for n in targets]
        rows, slopes = qdyne.scaling_analysis(trace, targets, prior_hz=cfg["prior_hz"],
                                              window_bins=cfg["window_bins"])
        report["scaling"] = {"rows": rows, "slopes": slopes}
        plotting.plot_scaling(rows, slopes, out / "qdyne_scaling.png",
                              title="slice scaling")
    spectrum = analysis.power_spectrum(np.asarray(trace.counts, float), trace.period)
    plotting.plot_spectrum(spectrum.frequencies, spectrum.power, out / "qdyne_spectrum.png",
                           peak_hz=res.beat_hz,
                           title="beat %.4f kHz, SNR %.0f" % (res.beat_hz / 1e3, res.snr))
    with open(out / "qdyne_analysis.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_meta(out / "qdyne_analyze.meta.json", cfg, seed, {"summary": report["analysis"]})
    print(json.dumps(report["analysis"], indent=2))
    return EXIT_OK if res.detected else EXIT_NUMERIC


def cmd_sensitivity(cfg, out, seed, threads):
    model = model_from_config(cfg["model"])
    t = cfg["sensing_time_s"]
    t_oh = cfg["overhead_s"]
    eta = qdyne.sensitivity_shot_noise(model, t, t_oh)
    t_opt = qdyne.optimal_sensing_time(model.coherence_time, t_oh)
    eta_opt = qdyne.sensitivity_shot_noise(model, t_opt, t_oh)
    report = {
        "sensing_time_s": t,
        "eta_tesla_per_sqrt_hz": eta,
        "eta_nt_per_sqrt_hz": eta * 1e9,
        "optimal_sensing_time_s": t_opt,
        "eta_optimal_tesla_per_sqrt_hz": eta_opt,
        "eta_optimal_nt_per_sqrt_hz": eta_opt * 1e9,
    }
    with open(out / "sensitivity.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    t_grid = np.linspace(0.02, 4.0, 400) * max(t_opt, t)
    eta_grid = np.array([qdyne.sensitivity_shot_noise(model, tt, t_oh) for tt in t_grid])
    curve = sensing.ScanResult(t_grid, "s", eta_grid * 1e9, np.zeros_like(eta_grid),
                               {"optimum_s": t_opt})
    curve.write_csv(out / "sensitivity_curve.csv")
    plotting.plot_scan(curve, out / "sensitivity.png", "sensing time (us)",
                       "sensitivity (nT/rtHz)", xscale=1e6, logy=True,
                       title="optimum %.1f us -> %.1f nT/rtHz" % (t_opt * 1e6, eta_opt * 1e9))
    _write_meta(out / "sensitivity.meta.json", cfg, seed, {"summary": report})
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _validate_checks():
    rng = np.random.default_rng(7)
    checks = []

    wl = TWO_PI * 8e6
    t_int = math.pi / wl
    g = TWO_PI * 11.7e3
    sig = dynamics.SignalField(g, wl, 0.0)
    worst = 0.0
    for _ in range(20):
        n = 2 * int(rng.integers(1, 33))
        phases = rng.uniform(0, TWO_PI, n)
        segs = [dynamics.DriveSegment(t_int, wl, p) for p in phases]
        u = dynamics.evolve(dynamics.DressedFrame(), segs, sig).final
        v = dynamics.cpdd_ideal_propagator(phases, g * n * t_int)
        worst = max(worst, float(dynamics.su2.global_phase_distance(u, v)))
    checks.append(("closed-form propagator vs dressed evolution", worst < 1e-8,
                   f"max distance {worst:.2e}"))

    worst = 0.0
    for _ in range(50):
        gg, dd, xx, tt = rng.uniform(0, 1e6, 4)
        ua = dynamics.dressed_propagator_analytic(gg, dd, xx, tt * 1e-6)
        h = (-0.5 * dd * dynamics.SIGMA_X
             + 0.5 * gg * (math.cos(xx) * dynamics.SIGMA_Z - math.sin(xx) * dynamics.SIGMA_Y))
        ub = dynamics.su2.expm_hermitian(h, tt * 1e-6)
        worst = max(worst, float(np.abs(ua - ub).max()))
    checks.append(("dressed analytic propagator vs Hermitian exponential", worst < 1e-12,
                   f"max distance {worst:.2e}"))

    worst = 0.0
    for wt in np.linspace(0.2, 3.0, 5):
        for dphi in np.linspace(-3, 3, 5):
            for th in np.linspace(0.1, 3.0, 5):
                closed, numeric = dynamics.phase_change_commutator_norm(1.0, wt, 0.4, dphi, th)
                worst = max(worst, abs(closed - numeric))
    checks.append(("phase-change commutator closed form", worst < 1e-10,
                   f"max gap {worst:.2e}"))

    pe = noise.pulse_error_from_noise(0.95 * wl, wl)
    checks.append(("transition error at 5% Rabi mismatch", abs(pe.epsilon - 0.00616) < 1e-5,
                   f"eps = {pe.epsilon:.6f}"))

    eps_grid = np.logspace(-4, -2, 9)
    f_zero = [1 - noise.sequence_product_fidelity(noise.PulseError(e, 0, 0), [0.0] * 8) for e in eps_grid]
    f_xy8 = [1 - noise.sequence_product_fidelity(noise.PulseError(e, 0, 0), list(sequences.XY8_PHASES)) for e in eps_grid]
    s1 = np.polyfit(np.log10(eps_grid), np.log10(f_zero), 1)[0]
    s3 = np.polyfit(np.log10(eps_grid), np.log10(f_xy8), 1)[0]
    checks.append(("error scaling, constant phases (order 1)", abs(s1 - 1) < 0.1, f"slope {s1:.3f}"))
    checks.append(("error scaling, XY8 phases (order 3)", abs(s3 - 3) < 0.1, f"slope {s3:.3f}"))

    model = sensing.MeasurementModel(kappa=0.5, bright=0.66, dark=0.34,
                                     coherence_time=250e-6, photons_per_readout=0.164)
    eta = qdyne.sensitivity_shot_noise(model, 5e-6, 3.646e-6) * 1e9
    t_opt = qdyne.optimal_sensing_time(250e-6, 3.646e-6)
    eta_opt = qdyne.sensitivity_shot_noise(model, t_opt, 3.646e-6) * 1e9
    checks.append(("shot-noise sensitivity at 5 us", abs(eta - 105) <= 2, f"{eta:.1f} nT/rtHz"))
    checks.append(("optimal sensing time", abs(t_opt - 128.45e-6) <= 0.01e-6, f"{t_opt * 1e6:.3f} us"))
    checks.append(("sensitivity at the optimum", abs(eta_opt - 26) <= 1, f"{eta_opt:.1f} nT/rtHz"))

    sig = dynamics.SignalField(g, wl, 0.0)
    n_blocks = 30
    u_pulsed, samp = dynamics.evolve_ideal_pulsed(np.tile(sequences.XY8_PHASES, n_blocks),
                                                  math.pi / wl, sig, samples_every=8)
    c_pulsed = sensing.readout_contrast(samp, sensing.SLOPE_READOUT)
    t_grid = (np.arange(n_blocks) + 1) * 8 * math.pi / wl
    samp_c = dynamics.cpdd_samples_dressed(np.tile(sequences.XY8_PHASES, n_blocks),
                                           math.pi / wl, wl, g, np.array([0.0]), 0.0,
                                           sample_every=8)
    c_cpdd = sensing.readout_contrast(samp_c[0], sensing.SLOPE_READOUT)
    mask_p = np.abs(c_pulsed) < 0.9
    mask_c = np.abs(c_cpdd) < 0.9
    rate_p = np.polyfit(t_grid[mask_p], np.arcsin(c_pulsed[mask_p]), 1)[0]
    rate_c = np.polyfit(t_grid[mask_c], np.arcsin(c_cpdd[mask_c]), 1)[0]
    ratio = abs(rate_p / rate_c)
    checks.append(("pulsed/continuous rectification ratio (4/pi)",
                   abs(ratio - 4 / math.pi) / (4 / math.pi) < 0.02, f"ratio {ratio:.4f}"))
    return checks


def cmd_validate(cfg, out, seed, threads):
    checks = _validate_checks()
    width = max(len(name) for name, _, _ in checks)
    failures = 0
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        failures += 0 if ok else 1
        print(f"{name:<{width}}  {status}  {detail}")
    print(f"\n{len(checks) - failures}/{len(checks)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_NUMERIC


COMMANDS = {
    "robustness-map": cmd_robustness_map,
    "time-scan": cmd_time_scan,
    "detuning-scan": cmd_detuning_scan,
    "freq-scan": cmd_freq_scan,
    "order-scan": cmd_order_scan,
    "spurious": cmd_spurious,
    "qdyne-sim": cmd_qdyne_sim,
    "qdyne-analyze": cmd_qdyne_analyze,
    "sensitivity": cmd_sensitivity,
    "validate": cmd_validate,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cpdd",
        description="Continuous phased dynamical decoupling: simulators and analysis.",
    )
    parser.add_argument("--version", action="version", version=f"cpdd {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        if name != "validate":
            group = p.add_mutually_exclusive_group(required=name != "validate")
            group.add_argument("--config", type=Path, help="JSON config file")
            group.add_argument("--preset", help=f"bundled preset ({', '.join(list_presets())})")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="64-bit RNG seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for run batches")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=os.environ.get("CPDD_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    handler = COMMANDS[args.command]
    try:
        if args.command == "validate":
            cfg = {}
        elif args.config is not None:
            cfg = load_config(args.config, args.command)
        else:
            cfg = load_config(_preset_path(args.preset), args.command)
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        return handler(cfg, out, args.seed, max(1, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
