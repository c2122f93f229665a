# Measurement protocols built on the dynamics engines.
#
# Every runner wraps the decoupling block in the experimental Ramsey frame:
# pi/2(x) preparation, the block, then a pi/2 readout pulse whose phase
# alternates by pi; the normalized population difference of the two readouts
# is the contrast.  Readout about +-x gives cos(Theta) (variance detection),
# about +-y gives sin(Theta) (slope detection), with Theta the accumulated
# rectified-signal phase.  Decoherence enters as the analytic envelope
# c_max * exp(-(t/T2)^stretch) multiplying the coherent contrast; readout
# photon statistics are left to the heterodyne trace synthesis.

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, su2
from .dynamics import (DressedFrame, RotatingFrame, SignalField,
                       cpdd_samples_dressed, cpdd_samples_rotating, evolve)
from .sequences import SequenceSpec, randomize_global_phase
from .su2 import rotation_op

TWO_PI = 2.0 * math.pi

# NV electron gyromagnetic ratio, 2*pi * 28.03 GHz/T, in rad/(s T)
GAMMA_NV = TWO_PI * 28.03e9

# Rectified-signal attenuation: kappa = 1/2 for continuous drives, 2/pi for
# ideal instantaneous-pulse sequences.
KAPPA_CPDD = 0.5
KAPPA_PULSED = 2.0 / math.pi

VARIANCE_READOUT = 0.0          # final pulses about +-x: contrast ~ cos(Theta)
SLOPE_READOUT = math.pi / 2     # final pulses about +-y: contrast ~ sin(Theta)

_PREP = rotation_op("x", math.pi / 2)
_KET0 = np.array([1.0, 0.0], dtype=complex)


@dataclass(frozen=True)
class MeasurementModel:
    """Readout and decoherence model.

    kappa in (0, 1]; 0 <= dark < bright <= 1 (normalized fluorescence
    levels); coherence_time > 0 with Gamma(t) = (t/T2)^stretch;
    photons_per_readout > 0; gyro in rad/(s T).
    """

    kappa: float = KAPPA_CPDD
    max_contrast: float = 1.0
    bright: float = 1.0
    dark: float = 0.0
    coherence_time: float = math.inf
    stretch: float = 1.0
    photons_per_readout: float = 0.164
    gyro: float = GAMMA_NV

    def __post_init__(self):
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
        if not 0 <= self.dark < self.bright <= 1:
            raise ValueError("need 0 <= dark < bright <= 1")
        if self.coherence_time <= 0:
            raise ValueError("coherence time must be > 0")
        if self.photons_per_readout <= 0:
            raise ValueError("photons per readout must be > 0")

    def envelope(self, t):
        """exp(-(t/T2)^stretch)."""
        if math.isinf(self.coherence_time):
            return np.ones_like(np.asarray(t, dtype=float))
        return np.exp(-np.power(np.asarray(t, dtype=float) / self.coherence_time, self.stretch))

    def contrast(self, t):
        """C(t) = (bright - dark) * exp(-Gamma(t))."""
        return (self.bright - self.dark) * self.envelope(t)


@dataclass(frozen=True)
class ScanResult:
    """One scanned observable: x values, per-point mean and standard error."""

    x: np.ndarray
    x_unit: str
    mean: np.ndarray
    stderr: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.x) == len(self.mean) == len(self.stderr)):
            raise ValueError("scan arrays must have equal length")
        if np.any(np.asarray(self.stderr) < 0):
            raise ValueError("standard errors must be >= 0")

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"x_{self.x_unit},mean,stderr\n")
            for x, m, s in zip(self.x, self.mean, self.stderr):
                fh.write("%.12g,%.12g,%.12g\n" % (x, m, s))
        sidecar = str(path) + ".meta.json"
        with open(sidecar, "w") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def readout_contrast(block_propagators, readout_phase):
    """Normalized contrast of pi/2(x) - block - pi/2(readout +- pi) on |0>.

    Vectorized over leading dimensions of ``block_propagators``.
    """
    psi = np.asarray(block_propagators, dtype=complex) @ (_PREP @ _KET0)
    axis_plus = rotation_op(np.array([math.cos(readout_phase), math.sin(readout_phase), 0.0]), math.pi / 2)
    axis_minus = rotation_op(np.array([math.cos(readout_phase + math.pi), math.sin(readout_phase + math.pi), 0.0]), math.pi / 2)
    p_plus = np.abs(np.einsum("j,...j->...", axis_plus[0], psi)) ** 2
    p_minus = np.abs(np.einsum("j,...j->...", axis_minus[0], psi)) ** 2
    return p_minus - p_plus


def ramsey_wrapped_measurement(block, signal, noise=None, readout_phase=VARIANCE_READOUT,
                               model=None, frame="dressed"):
    """Single coherent measurement of one decoupling block.

    ``block`` is a SequenceSpec or a DriveSegment list.  Quasi-static noise
    shifts the carrier detuning and the Rabi rate (Omega = wL - Delta).
    Returns the contrast scaled by the model's c_max * exp(-Gamma(t)).
    """
    model = model or MeasurementModel()
    delta = noise.carrier_detuning if noise is not None else 0.0
    mism = noise.rabi_mismatch if noise is not None else 0.0
    if isinstance(block, SequenceSpec):
        rabi = (signal.frequency - mism) if signal is not None else block.rabi
        segments = block.to_segments(carrier_detuning=delta, rabi=rabi)
        duration = block.total_duration
    else:
        segments = list(block)
        duration = sum(s.duration for s in segments)
    fr = DressedFrame() if frame == "dressed" else RotatingFrame()
    u = evolve(fr, segments, signal).final
    c = float(readout_contrast(u, readout_phase))
    return model.max_contrast * float(model.envelope(duration)) * c


def _scan_samples(spec, signal, mismatches, frame, substeps, sample_every, xi=None,
                  seed_offsets=None):
    """Stroboscopic propagators for a CPDD spec over a batch of Rabi
    mismatches (and optionally signal phases / per-run phase tables)."""
    phases = spec.phase_list() if seed_offsets is None else seed_offsets
    xi = signal.phase if xi is None else xi
    if frame == "dressed":
        return cpdd_samples_dressed(phases, spec.interval, signal.frequency,
                                    signal.amplitude, mismatches, xi,
                                    sample_every=sample_every)
    rabi = signal.frequency - np.asarray(mismatches, dtype=float)
    return cpdd_samples_rotating(phases, spec.interval, rabi, signal.frequency,
                                 signal.amplitude, xi, substeps=substeps,
                                 sample_every=sample_every)


def time_scan(spec, signal, mismatches, sample_interval, model=None,
              readout_phase=VARIANCE_READOUT, frame="dressed", substeps=64):
    """Population traces vs interaction time for a list of Rabi mismatches.

    Samples stroboscopically every ``sample_interval`` (must be a whole number
    of intervals).  Returns one ScanResult per mismatch with x = times (s) and
    mean = population of |0> mapped from the contrast.
    """
    model = model or MeasurementModel()
    per = sample_interval / spec.interval
    sample_every = int(round(per))
    if abs(per - sample_every) > 1e-9 or sample_every < 1:
        raise ValueError("sample interval must be a whole number of drive intervals")
    mism = np.asarray(mismatches, dtype=float)
    samples = _scan_samples(spec, signal, mism, frame, substeps, sample_every)
    n_samp = samples.shape[1]
    times = (np.arange(n_samp) + 1) * sample_every * spec.interval
    contrast = readout_contrast(samples, readout_phase)
    contrast = contrast * model.max_contrast * model.envelope(times)[None, :]
    population = 0.5 * (1.0 + contrast)
    results = []
    for i, dm in enumerate(mism):
        results.append(ScanResult(
            x=times, x_unit="s", mean=population[i], stderr=np.zeros(n_samp),
            meta={"protocol": spec.protocol, "rabi_mismatch_rad_s": float(dm),
                  "frame": frame, "readout_phase_rad": readout_phase},
        ))
    return results


def oscillation_contrast(trace):
    """Half peak-to-peak of a stroboscopic trace (the Fig.-style contrast)."""
    return 0.5 * (float(np.max(trace)) - float(np.min(trace)))


def contrast_vs_detuning(spec, signal, mismatches, sample_interval, model=None,
                         frame="dressed", substeps=64):
    """Oscillation contrast (half peak-to-peak over the simulated window) per
    Rabi mismatch."""
    traces = time_scan(spec, signal, mismatches, sample_interval, model=model,
                       frame=frame, substeps=substeps)
    contrast = np.array([oscillation_contrast(tr.mean) for tr in traces])
    return ScanResult(
        x=np.asarray(mismatches, dtype=float), x_unit="rad_s",
        mean=contrast, stderr=np.zeros_like(contrast),
        meta={"protocol": spec.protocol, "frame": frame,
              "window_s": float(traces[0].x[-1])},
    )


def halfwidth_50pct(mismatches, contrast):
    """First mismatch where the contrast falls below half its first value,
    by linear interpolation; +inf when it never does (capped by the grid)."""
    c0 = contrast[0]
    below = np.nonzero(contrast < 0.5 * c0)[0]
    if below.size == 0:
        return math.inf
    i = below[0]
    if i == 0:
        return float(mismatches[0])
    x0, x1 = mismatches[i - 1], mismatches[i]
    y0, y1 = contrast[i - 1], contrast[i]
    return float(x0 + (0.5 * c0 - y0) * (x1 - x0) / (y1 - y0))


def frequency_scan(spec, signal, detection_freqs, model=None, phase_samples=32,
                   frame="dressed", substeps=64):
    """Population vs detection frequency f = 1/(2T), re-locking Omega = pi/T.

    The signal phase is averaged over ``phase_samples`` equispaced values
    (variance detection of a free-running source); 0 keeps the configured
    phase.  Returns a ScanResult with x in Hz.
    """
    model = model or MeasurementModel()
    freqs = np.asarray(detection_freqs, dtype=float)
    nseg = spec.repetitions * spec.segments_per_block
    phases = spec.phase_list()
    if phase_samples and phase_samples > 1:
        xis = (np.arange(phase_samples) + 0.5) * TWO_PI / phase_samples
    else:
        xis = np.array([signal.phase])
    ff, xx = np.meshgrid(freqs, xis, indexing="ij")
    intervals = 1.0 / (2.0 * ff.ravel())
    rabi = math.pi / intervals
    durations = nseg * intervals
    if frame == "dressed":
        samples = cpdd_samples_dressed(phases, intervals, signal.frequency,
                                       signal.amplitude, signal.frequency - rabi,
                                       xx.ravel(), sample_every=nseg)
    else:
        samples = cpdd_samples_rotating(phases, intervals, rabi, signal.frequency,
                                        signal.amplitude, xx.ravel(),
                                        substeps=substeps, sample_every=nseg)
    contrast = readout_contrast(samples[:, -1], VARIANCE_READOUT)
    contrast = contrast * model.max_contrast * model.envelope(durations)
    pop = 0.5 * (1.0 + contrast.reshape(len(freqs), len(xis)))
    mean = pop.mean(axis=1)
    stderr = pop.std(axis=1, ddof=1) / math.sqrt(len(xis)) if len(xis) > 1 else np.zeros(len(freqs))
    return ScanResult(
        x=freqs, x_unit="hz", mean=mean, stderr=stderr,
        meta={"protocol": spec.protocol, "repetitions": spec.repetitions,
              "signal_freq_hz": signal.frequency / TWO_PI,
              "signal_amp_hz": signal.amplitude / TWO_PI,
              "phase_samples": int(len(xis)), "frame": frame},
    )


def dip_fwhm(scan):
    """Full width at half depth of a population dip, by interpolation.

    Returns (center_hz, fwhm_hz, depth).
    """
    f = np.asarray(scan.x, dtype=float)
    p = np.asarray(scan.mean, dtype=float)
    top = float(np.max(p))
    i_min = int(np.argmin(p))
    depth = top - float(p[i_min])
    half = top - 0.5 * depth
    left = np.interp(half, p[: i_min + 1][::-1], f[: i_min + 1][::-1])
    right = np.interp(half, p[i_min:], f[i_min:])
    return float(f[i_min]), float(right - left), depth


def order_scan(spec_interval, signal, orders, model=None, shots=4096, seed=0,
               block_segments=8, frame="dressed"):
    """Mean variance-detection contrast vs sequence order N (CXY8-N).

    Each shot draws a uniform random signal phase; one batched evolution up to
    max(N) is sampled at every block boundary, reproducing the fixed-amplitude
    random-phase decay c_max * J0(g t) * exp(-Gamma(t)).
    """
    from .sequences import XY8_PHASES

    model = model or MeasurementModel()
    orders = np.asarray(sorted(orders), dtype=int)
    n_max = int(orders[-1])
    phases = np.tile(XY8_PHASES, n_max)
    rng = np.random.Generator(np.random.Philox(key=np.array([seed & (2**64 - 1), 0x0DE7], dtype=np.uint64)))
    xis = rng.uniform(0.0, TWO_PI, shots)
    if frame == "dressed":
        samples = cpdd_samples_dressed(phases, spec_interval, signal.frequency,
                                       signal.amplitude, 0.0, xis,
                                       sample_every=block_segments)
    else:
        samples = cpdd_samples_rotating(phases, spec_interval,
                                        signal.frequency, signal.frequency,
                                        signal.amplitude, xis,
                                        sample_every=block_segments)
    contrast = readout_contrast(samples, VARIANCE_READOUT)  # (shots, n_max)
    times = (np.arange(n_max) + 1) * block_segments * spec_interval
    sel = orders - 1
    c_sel = contrast[:, sel]
    scale = model.max_contrast * model.envelope(times[sel])
    mean = scale * c_sel.mean(axis=0)
    stderr = np.abs(scale) * c_sel.std(axis=0, ddof=1) / math.sqrt(shots)
    return ScanResult(
        x=times[sel], x_unit="s", mean=mean, stderr=stderr,
        meta={"orders": orders.tolist(), "shots": int(shots), "seed": int(seed),
              "signal_amp_hz": signal.amplitude / TWO_PI, "frame": frame},
    )


def spurious_spectrum(spec, signal, detection_freqs, runs=1, seed=0, substeps=48,
                      model=None, threads=1):
    """Population vs detection frequency over a wide scan, rotating-frame
    numerics (the dressed picture cannot produce spurious responses).

    For randomizing specs, ``runs`` experiments with fresh per-block phases
    (streams keyed by (seed, run)) are averaged.  The signal phase is fixed
    (the source is synchronized, xi = spec'd value).
    """
    model = model or MeasurementModel()
    freqs = np.asarray(detection_freqs, dtype=float)
    nseg = spec.repetitions * spec.segments_per_block
    intervals = 1.0 / (2.0 * freqs)
    durations = nseg * intervals

    def one_run(run_idx):
        if spec.randomize_blocks:
            run_spec = randomize_global_phase(spec, (seed << 20) ^ run_idx)
        else:
            run_spec = spec
        phases = run_spec.phase_list()
        samples = cpdd_samples_rotating(phases, intervals, math.pi / intervals,
                                        signal.frequency, signal.amplitude,
                                        signal.phase, substeps=substeps,
                                        sample_every=nseg)
        return readout_contrast(samples[:, -1], VARIANCE_READOUT)

    n_runs = runs if spec.randomize_blocks else 1
    if threads > 1 and n_runs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            contrasts = np.array(list(pool.map(one_run, range(n_runs))))
    else:
        contrasts = np.array([one_run(r) for r in range(n_runs)])
    contrasts = contrasts * model.max_contrast * model.envelope(durations)[None, :]
    pop = 0.5 * (1.0 + contrasts)
    mean = pop.mean(axis=0)
    stderr = (pop.std(axis=0, ddof=1) / math.sqrt(n_runs)) if n_runs > 1 else np.zeros_like(mean)
    return ScanResult(
        x=freqs, x_unit="hz", mean=mean, stderr=stderr,
        meta={"protocol": spec.protocol, "runs": int(n_runs), "seed": int(seed),
              "pulses": int(nseg), "signal_freq_hz": signal.frequency / TWO_PI},
    )


def spurious_default_grid(signal_frequency_hz, window_frac=0.015, window_points=13,
                          baseline_points=48, span=(0.625, 2.5)):
    """Scan grid for the spurious-harmonics experiment: dense windows around
    the principal (f = nu_L) and the spurious positions (2/3 and 2 nu_L) plus
    a coarse baseline over ``span`` (in units of nu_L; f = (pi/T)/(2 pi))."""
    nu = signal_frequency_hz
    feats = harmonic_positions(nu)
    parts = [np.linspace(span[0], span[1], baseline_points) * nu]
    for f in feats:
        parts.append(f + np.linspace(-window_frac, window_frac, window_points) * f)
    return np.unique(np.concatenate(parts))


def harmonic_positions(signal_frequency_hz):
    """Detection frequencies of the principal and spurious responses."""
    return np.array([2.0 / 3.0, 1.0, 2.0]) * signal_frequency_hz


def harmonic_response(scan, positions, window_frac=0.015, flank_frac=(0.025, 0.09)):
    """Feature strength at each position, in units of the local baseline
    deviation.

    For each position the response is the largest |p - median| inside a
    +-window_frac window, referenced to the median and MAD (scaled to a
    standard deviation) of the flanking bands between ``flank_frac`` fractions
    away on both sides.  Local referencing keeps broadband residue of the
    randomized protocol out of the feature estimate.
    """
    f = np.asarray(scan.x, dtype=float)
    p = np.asarray(scan.mean, dtype=float)
    out = []
    for pos in np.atleast_1d(positions):
        rel = np.abs(f - pos) / pos
        win = rel <= window_frac
        flank = (rel > flank_frac[0]) & (rel <= flank_frac[1])
        if win.sum() < 3 or flank.sum() < 6:
            raise ValueError(f"scan grid too sparse around {pos:g} Hz")
        med = float(np.median(p[flank]))
        mad = float(np.median(np.abs(p[flank] - med)) * 1.4826)
        mad = max(mad, 1e-12)
        response = float(np.max(np.abs(p[win] - med)))
        out.append({"position_hz": float(pos), "response": response,
                    "baseline_median": med, "baseline_mad": mad,
                    "ratio": response / mad})
    return out
