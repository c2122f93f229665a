# Heterodyne (Qdyne) synthesis and analysis.
#
# The spin is sampled every T_L = t_seq + t_oh, so the signal phase at shot k
# advances by a fixed increment and the photon trace carries an undersampled
# beat at f_b = |nu0 - nu_LO| with nu_LO = round(nu0 T_L)/T_L.  The expected
# counts per shot follow the slope-detection model
#
#     n_k = N_ph * [1 + ((a-b)/(a+b)) * exp(-Gamma(t_seq)) * sin(Theta_k)],
#     Theta_k = 2 kappa g t_seq cos(xi_k),  xi_k = xi0 + 2 pi nu0 k T_L,
#
# Poisson-sampled with counter-based streams so parallel generation is
# reproducible.  The modulation-depth normalization (a+b) keeps n_k >= 0 with
# mean N_ph; only N_ph and a-b are physically constrained.  A Lorentzian fit
# of the beat line then recovers nu0 far below the single-shot linewidth.

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import fit_lorentzian, power_spectrum
from .dynamics import SignalField
from .sensing import MeasurementModel, ramsey_wrapped_measurement
from .sequences import QdyneSchedule, SequenceSpec

TWO_PI = 2.0 * math.pi
_BLOCK = 1 << 20


@dataclass(frozen=True)
class QdyneConfig:
    """Full synthesis configuration.

    Correct unfolding needs |prior_hz - nu0| < 1/(2 T_L) and, near the mirror
    frequency 2 nu_LO - nu0, a prior closer to nu0 than to the mirror; see
    :func:`unfold_frequency`.
    """

    schedule: QdyneSchedule
    signal: SignalField
    model: MeasurementModel
    sequence: SequenceSpec | None = None
    seed: int = 0
    prior_hz: float | None = None

    def __post_init__(self):
        if self.signal.frequency <= 0:
            raise ValueError("signal frequency must be > 0")

    @property
    def nu0_hz(self):
        return self.signal.frequency / TWO_PI

    def theta_amplitude(self):
        """Peak rectified phase per shot, 2 kappa g t_seq."""
        return 2.0 * self.model.kappa * self.signal.amplitude * self.schedule.sequence_time

    def modulation_depth(self):
        ab = self.model.bright + self.model.dark
        depth = (self.model.bright - self.model.dark) / ab if ab > 0 else 0.0
        return depth * float(self.model.envelope(self.schedule.sequence_time))

    def config_hash(self):
        payload = json.dumps({
            "t_seq": self.schedule.sequence_time, "t_oh": self.schedule.overhead,
            "m": self.schedule.measurements, "nu0": self.nu0_hz,
            "g": self.signal.amplitude, "xi0": self.signal.phase,
            "kappa": self.model.kappa, "nph": self.model.photons_per_readout,
            "bright": self.model.bright, "dark": self.model.dark,
            "t2": self.model.coherence_time, "stretch": self.model.stretch,
            "seed": self.seed,
        }, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class QdyneTrace:
    """Per-measurement photon counts on a fixed period grid."""

    counts: np.ndarray
    period: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.asarray(self.counts) < 0):
            raise ValueError("photon counts must be >= 0")

    @property
    def total_time(self):
        return len(self.counts) * self.period

    def write(self, path_base):
        """Binary trace (.npy) plus a JSON header with T_L, seed, config hash."""
        np.save(str(path_base) + ".npy", self.counts)
        with open(str(path_base) + ".meta.json", "w") as fh:
            json.dump({"period_s": self.period, **self.meta}, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path_base):
        """One count per line with '#' header lines carrying the metadata."""
        header = "".join(
            f"# {k} = {v}\n" for k, v in sorted({"period_s": self.period, **self.meta}.items())
        )
        with open(str(path_base) + ".csv", "w") as fh:
            fh.write(header)
            fh.write("\n".join(str(c) for c in self.counts.tolist()))
            fh.write("\n")

    @classmethod
    def read(cls, path_base):
        counts = np.load(str(path_base) + ".npy")
        with open(str(path_base) + ".meta.json") as fh:
            meta = json.load(fh)
        period = meta.pop("period_s")
        return cls(counts, period, meta)


def expected_counts(config, k_start, k_stop):
    """Analytic fast path: expected photon number for shots [k_start, k_stop)."""
    k = np.arange(k_start, k_stop, dtype=np.float64)
    cycles = config.nu0_hz * config.schedule.period
    xi = TWO_PI * np.mod(cycles * k + config.signal.phase / TWO_PI, 1.0)
    theta = config.theta_amplitude() * np.cos(xi)
    return config.model.photons_per_readout * (1.0 + config.modulation_depth() * np.sin(theta))


def expected_contrast_unitary(config, indices, frame="dressed"):
    """Slow validation path: full-propagator slope contrast for selected shots.

    Simulates pi/2(x) - sequence - pi/2(+-y) with the signal phase advanced to
    each shot's start; used to validate the analytic fast path.
    """
    if config.sequence is None:
        raise ValueError("the unitary path needs the sequence spec")
    out = []
    for k in indices:
        xi_k = (config.signal.phase + TWO_PI * config.nu0_hz * config.schedule.period * k) % TWO_PI
        sig = SignalField(config.signal.amplitude, config.signal.frequency, xi_k)
        c = ramsey_wrapped_measurement(config.sequence, sig, readout_phase=math.pi / 2,
                                       model=MeasurementModel(kappa=config.model.kappa),
                                       frame=frame)
        out.append(c)
    return np.asarray(out)


def simulate_trace(config, shot_noise=True):
    """Synthesize the photon trace (Poisson by default, expectation values
    with ``shot_noise=False``).  Streams are keyed by (seed, block index) so
    any block can be generated independently."""
    m = config.schedule.measurements
    if shot_noise:
        counts = np.empty(m, dtype=np.int64)
    else:
        counts = np.empty(m, dtype=np.float64)
    for b0 in range(0, m, _BLOCK):
        hi = min(b0 + _BLOCK, m)
        nbar = expected_counts(config, b0, hi)
        if shot_noise:
            rng = np.random.Generator(np.random.Philox(
                key=np.array([config.seed & (2**64 - 1), b0 // _BLOCK], dtype=np.uint64)))
            counts[b0:hi] = rng.poisson(nbar)
        else:
            counts[b0:hi] = nbar
    return QdyneTrace(counts, config.schedule.period, {
        "seed": config.seed, "config_hash": config.config_hash(),
        "nu0_hz": config.nu0_hz, "measurements": m,
        "shot_noise": bool(shot_noise),
    })


def local_oscillator(prior_hz, period):
    """nu_LO = round(prior * T_L) / T_L."""
    return round(prior_hz * period) / period


def unfold_frequency(beat_hz, prior_hz, period):
    """Resolve nu0 = nu_LO +- f_b with the sign closest to the prior.

    Returns (nu0, ambiguous): ambiguous flags priors that sit outside half the
    alias-free range or closer to the mirror branch than to the chosen one.
    """
    nu_lo = local_oscillator(prior_hz, period)
    cands = np.array([nu_lo + beat_hz, nu_lo - beat_hz])
    pick = int(np.argmin(np.abs(cands - prior_hz)))
    nu0 = float(cands[pick])
    separation = abs(cands[0] - cands[1])
    ambiguous = bool(beat_hz > 0.5 / period or abs(nu0 - prior_hz) > max(0.5 * separation, 0.25 / period))
    return nu0, ambiguous


@dataclass(frozen=True)
class QdyneAnalysis:
    beat_hz: float
    beat_err_hz: float
    nu0_hz: float
    nu0_err_hz: float
    hwhm_hz: float
    snr: float
    detected: bool
    ambiguous: bool
    fit: object

    def to_dict(self):
        return {
            "beat_hz": self.beat_hz, "beat_err_hz": self.beat_err_hz,
            "nu0_hz": self.nu0_hz, "nu0_err_hz": self.nu0_err_hz,
            "hwhm_hz": self.hwhm_hz, "linewidth_hz": 2 * self.hwhm_hz,
            "snr": self.snr, "detected": self.detected, "ambiguous": self.ambiguous,
        }


MIN_ANALYSIS_SAMPLES = 1 << 16


def analyze_trace(trace, prior_hz, window_bins=50, min_samples=MIN_ANALYSIS_SAMPLES):
    """Spectrum -> Lorentzian fit -> beat frequency -> unfolded nu0.

    The trace must hold at least ``min_samples`` shots.  A fit with SNR < 3 is
    reported as not detected; the unfolded value is still returned.
    """
    counts = np.asarray(trace.counts, dtype=float)
    if counts.size < min_samples:
        raise ValueError(f"trace too short for analysis ({counts.size} < {min_samples})")
    spectrum = power_spectrum(counts, trace.period)
    fit = fit_lorentzian(spectrum, window_bins=window_bins)
    beat = abs(fit.params["center_hz"])
    beat_err = fit.errors["center_hz"]
    nu0, ambiguous = unfold_frequency(beat, prior_hz, trace.period)
    return QdyneAnalysis(
        beat_hz=beat, beat_err_hz=beat_err, nu0_hz=nu0, nu0_err_hz=beat_err,
        hwhm_hz=fit.params["hwhm_hz"], snr=fit.extras["snr"],
        detected=bool(fit.extras["detected"]), ambiguous=ambiguous, fit=fit,
    )


def align_slice_length(target, beat_hz, period, offset_tol=0.1, search=400):
    """Pick a slice length near ``target`` whose bin grid puts the beat close
    to half-bin offset (frac(f_b * T_L * L) within ``offset_tol`` of 0.5).

    A transform-limited line that lands on a bin center degenerates the
    Lorentzian width; half-bin alignment makes the fitted linewidth track the
    true resolution.  The aligned lengths differ from the targets by < search
    samples (a negligible duration change)."""
    per_sample = beat_hz * period
    for d in range(search):
        for length in (target + d, target - d):
            if length < 16:
                continue
            if abs((per_sample * length) % 1.0 - 0.5) <= offset_tol:
                return int(length)
    return int(target)


def scaling_analysis(trace, slice_lengths, prior_hz=None, window_bins=50,
                     max_slices=16):
    """Average linewidth, center error, and SNR over disjoint slices of each
    length, then log-log regress against the slice duration.

    Needs >= 4 lengths spanning >= 1.5 decades.  Returns (rows, slopes) where
    each row holds (duration_s, n_slices, linewidth_hz, dnu0_hz, snr).
    """
    lengths = sorted(int(n) for n in slice_lengths)
    total = len(trace.counts)
    lengths = [n for n in lengths if n <= total]
    if len(lengths) < 4:
        raise ValueError("need at least 4 slice lengths within the trace")
    durations = np.array([n * trace.period for n in lengths])
    if math.log10(durations[-1] / durations[0]) < 1.5:
        raise ValueError("slice durations must span at least 1.5 decades")
    rows = []
    for n in lengths:
        n_slices = min(total // n, max_slices)
        vals = []
        for s in range(n_slices):
            segment = QdyneTrace(trace.counts[s * n:(s + 1) * n], trace.period, trace.meta)
            res = analyze_trace(segment, prior_hz or trace.meta.get("nu0_hz", 0.0),
                                window_bins=window_bins, min_samples=16)
            vals.append((2.0 * res.hwhm_hz, res.nu0_err_hz, res.snr))
        lw, dnu, snr = np.mean(vals, axis=0)
        rows.append({"duration_s": n * trace.period, "slices": n_slices,
                     "linewidth_hz": float(lw), "dnu0_hz": float(dnu), "snr": float(snr)})
    logt = np.log10([r["duration_s"] for r in rows])
    slopes = {
        "linewidth": float(np.polyfit(logt, np.log10([r["linewidth_hz"] for r in rows]), 1)[0]),
        "dnu0": float(np.polyfit(logt, np.log10([r["dnu0_hz"] for r in rows]), 1)[0]),
        "snr": float(np.polyfit(logt, np.log10([r["snr"] for r in rows]), 1)[0]),
    }
    return rows, slopes


def sensitivity_shot_noise(model, sensing_time, overhead):
    """Photon-shot-noise amplitude sensitivity, tesla/sqrt(Hz):

        eta(t) = 2 / (gyro * kappa * C(t)) * sqrt(t + t_oh) / (sqrt(N_ph) t),
        C(t) = (bright - dark) * exp(-Gamma(t)).
    """
    if sensing_time <= 0:
        raise ValueError("sensing time must be > 0")
    c = float(model.contrast(sensing_time))
    return (2.0 / (model.gyro * model.kappa * c)
            * math.sqrt(sensing_time + overhead)
            / (math.sqrt(model.photons_per_readout) * sensing_time))


def optimal_sensing_time(coherence_time, overhead):
    """Sensing time minimizing eta for an exponential envelope:

        t = (T2/2 - t_oh + sqrt(T2^2/4 + 3 T2 t_oh + t_oh^2)) / 2,
    reducing to T2/2 at zero overhead.
    """
    if coherence_time <= 0:
        raise ValueError("coherence time must be > 0")
    if overhead < 0:
        raise ValueError("overhead must be >= 0")
    t2 = coherence_time
    return 0.5 * (0.5 * t2 - overhead + math.sqrt(0.25 * t2**2 + 3.0 * t2 * overhead + overhead**2))


def sensitivity_from_fit(dnu0_hz, snr, b0_tesla, total_time):
    """Figures of merit from an analyzed trace:

        eta_nu = dnu0 * T_tot^{3/2}   (Hz / Hz^{3/2})
        eta_B  = (B0 / SNR) * T_tot^{1/2}   (T / sqrt(Hz))
    """
    if total_time <= 0 or snr <= 0:
        raise ValueError("need total_time > 0 and snr > 0")
    return dnu0_hz * total_time**1.5, (b0_tesla / snr) * math.sqrt(total_time)
