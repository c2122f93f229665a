# Two-level dynamics under a phase-switched drive and an AC signal field.
#
# Three reference frames are supported:
#
#   Lab          H = (w0/2) sz + Omega cos((w0+delta) t + phi) sx
#                    + g cos(wL t + xi) sz
#                Everything retained, including counter-rotating drive terms.
#
#   Rotating     Interaction picture at the carrier, rotating-wave
#                approximation on the drive only (valid for Omega << w0):
#                H1 = -(delta/2) sz + (Omega/2)(cos phi sx + sin phi sy)
#                     + g cos(wL t + xi) sz
#                The signal keeps its full time dependence, so detection
#                filters and spurious harmonics are captured here.
#
#   Dressed      Second interaction picture with respect to (wL/2) sx after
#                rotating the drive phase away, dropping terms oscillating at
#                2 wL (valid for g, |Delta| << wL).  The remaining static
#                Hamiltonian is
#                H2 = -(Delta/2) sx + (g/2)(cos xi sz - sin xi sy),
#                with Delta = wL - Omega the Rabi mismatch from the
#                Hartmann-Hahn condition.  Carrier detuning has no static
#                component in this frame and is dropped.
#
# Evolution in the Lab/Rotating frames is a time-ordered product of
# midpoint-frozen exponentials (exact within each substep, second-order
# accurate overall).  Evolution in the Dressed frame is assembled from exact
# per-segment factorizations and is therefore substep-free.

import math
from dataclasses import dataclass

import numpy as np

from . import su2
from .su2 import SIGMA0, SIGMA_X, SIGMA_Y, SIGMA_Z, expm_pauli, rotation_op

TWO_PI = 2.0 * math.pi

# Oscillatory terms are resolved with at least this many substeps per cycle.
STEPS_PER_CYCLE = 50
# And each drive segment with at least this many substeps.
STEPS_PER_SEGMENT = 64


@dataclass(frozen=True)
class SignalField:
    """Sensed AC field g*cos(wL*t + xi) along sz.

    amplitude: g in rad/s (>= 0); frequency: wL in rad/s (> 0);
    phase: xi in [0, 2pi).
    """

    amplitude: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("signal amplitude must be >= 0")
        if self.frequency <= 0:
            raise ValueError("signal frequency must be > 0")
        object.__setattr__(self, "phase", float(self.phase) % TWO_PI)

    @classmethod
    def from_field(cls, b_tesla, frequency_hz, phase=0.0, gyro=None):
        """Build from a magnetic amplitude via g = gyro * B / 2."""
        from .sensing import GAMMA_NV

        gyro = GAMMA_NV if gyro is None else gyro
        return cls(0.5 * gyro * b_tesla, TWO_PI * frequency_hz, phase)

    @property
    def frequency_hz(self):
        return self.frequency / TWO_PI


@dataclass(frozen=True)
class DriveSegment:
    """One constant-phase stretch of drive.

    duration in s (> 0); rabi: Omega in rad/s (>= 0, 0 = free evolution);
    phase: phi in rad; carrier_detuning: delta = omega - w0 in rad/s.
    """

    duration: float
    rabi: float
    phase: float
    carrier_detuning: float = 0.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("segment duration must be > 0")
        if self.rabi < 0:
            raise ValueError("segment Rabi amplitude must be >= 0")


@dataclass(frozen=True)
class LabFrame:
    """Lab frame; requires the transition frequency w0 > 0 (rad/s)."""

    transition_frequency: float

    def __post_init__(self):
        if self.transition_frequency <= 0:
            raise ValueError("lab frame requires transition frequency > 0")


@dataclass(frozen=True)
class RotatingFrame:
    """Carrier rotating frame with the drive RWA applied."""


@dataclass(frozen=True)
class DressedFrame:
    """Drive-dressed frame (static Hamiltonian).  ``frequency`` fixes the
    frame rotation rate wL; None means take it from the signal."""

    frequency: float | None = None

    def frame_frequency(self, signal):
        if self.frequency is not None:
            return self.frequency
        if signal is not None:
            return signal.frequency
        raise ValueError("dressed frame needs a frequency or a signal")


@dataclass(frozen=True)
class EvolutionResult:
    """Final propagator plus stroboscopic propagators at sample times."""

    final: np.ndarray
    times: np.ndarray
    propagators: np.ndarray


def hamiltonian_at(frame, segment, signal, t):
    """Instantaneous Hamiltonian of the requested frame at absolute time t."""
    g = signal.amplitude if signal is not None else 0.0
    wl = signal.frequency if signal is not None else 0.0
    xi = signal.phase if signal is not None else 0.0
    sig_t = g * math.cos(wl * t + xi)
    if isinstance(frame, LabFrame):
        w0 = frame.transition_frequency
        carrier = w0 + segment.carrier_detuning
        drive = segment.rabi * math.cos(carrier * t + segment.phase)
        return 0.5 * w0 * SIGMA_Z + drive * SIGMA_X + sig_t * SIGMA_Z
    if isinstance(frame, RotatingFrame):
        return (
            -0.5 * segment.carrier_detuning * SIGMA_Z
            + 0.5 * segment.rabi * (math.cos(segment.phase) * SIGMA_X + math.sin(segment.phase) * SIGMA_Y)
            + sig_t * SIGMA_Z
        )
    if isinstance(frame, DressedFrame):
        wl = frame.frame_frequency(signal)
        mismatch = wl - segment.rabi
        h = -0.5 * mismatch * SIGMA_X
        if signal is not None:
            h = h + 0.5 * g * (math.cos(xi) * SIGMA_Z - math.sin(xi) * SIGMA_Y)
        return h
    raise TypeError(f"unknown frame {frame!r}")


def _max_angular_frequency(frame, segments, signal):
    freqs = [0.0]
    if signal is not None:
        freqs.append(signal.frequency)
    for seg in segments:
        freqs += [seg.rabi, abs(seg.carrier_detuning)]
        if signal is not None:
            freqs.append(abs(signal.frequency - seg.rabi))
    if isinstance(frame, LabFrame):
        freqs.append(frame.transition_frequency + max(abs(s.carrier_detuning) for s in segments))
    return max(freqs)


def default_substep(frame, segments, signal):
    """min(shortest segment / 64, fastest retained cycle / 50)."""
    tmin = min(s.duration for s in segments)
    wmax = _max_angular_frequency(frame, segments, signal)
    bound = tmin / STEPS_PER_SEGMENT
    if wmax > 0:
        bound = min(bound, TWO_PI / wmax / STEPS_PER_CYCLE)
    return bound


def _oscillatory_frequency(frame, segments, signal):
    """Largest frequency that actually appears time-dependently in the frame."""
    freqs = [0.0]
    if isinstance(frame, RotatingFrame):
        if signal is not None and signal.amplitude > 0:
            freqs.append(signal.frequency)
    elif isinstance(frame, LabFrame):
        if signal is not None and signal.amplitude > 0:
            freqs.append(signal.frequency)
        driven = [s for s in segments if s.rabi > 0]
        if driven:
            freqs.append(frame.transition_frequency + max(abs(s.carrier_detuning) for s in driven))
    return max(freqs)


def _substep_bound(frame, segments, signal):
    tmin = min(s.duration for s in segments)
    wmax = _oscillatory_frequency(frame, segments, signal)
    bound = tmin
    if wmax > 0:
        bound = min(bound, TWO_PI / wmax / STEPS_PER_CYCLE)
    return bound


def evolve(frame, segments, signal=None, substep=None, sample_times=()):
    """Evolve a piecewise drive; returns the final propagator and samples.

    Lab/Rotating frames integrate midpoint-frozen exponentials on a grid that
    lands exactly on segment boundaries and requested sample times.  The
    Dressed frame composes exact per-segment factorized propagators (expressed
    back in the rotating frame) and ignores ``substep``.

    A user-supplied substep larger than min(segment duration, fastest retained
    cycle / 50) is rejected with the computed bound.
    """
    segments = list(segments)
    if not segments:
        return EvolutionResult(SIGMA0.copy(), np.asarray(sample_times, float), np.broadcast_to(SIGMA0, (len(sample_times), 2, 2)).copy())
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.size:
        if np.any(np.diff(sample_times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        total = sum(s.duration for s in segments)
        if sample_times[0] < 0 or sample_times[-1] > total * (1 + 1e-12) + 1e-300:
            raise ValueError("sample times must lie within the sequence")

    if isinstance(frame, DressedFrame):
        return _evolve_dressed(frame, segments, signal, sample_times)

    bound = _substep_bound(frame, segments, signal)
    if substep is None:
        substep = default_substep(frame, segments, signal)
    elif substep > bound * (1 + 1e-12):
        raise ValueError(
            f"substep {substep:.3e} s too large; bound for this scenario is {bound:.3e} s"
        )

    u = SIGMA0.copy()
    props = []
    samples = list(sample_times)
    t = 0.0
    for seg in segments:
        t_end = t + seg.duration
        marks = [s for s in samples if t < s <= t_end + 1e-30]
        edges = np.unique(np.concatenate([[t], marks, [t_end]]))
        for a, b in zip(edges[:-1], edges[1:]):
            nsub = max(1, math.ceil((b - a) / substep - 1e-9))
            dt = (b - a) / nsub
            mids = a + (np.arange(nsub) + 0.5) * dt
            u_piece = _steps_rotating_or_lab(frame, seg, signal, mids, dt)
            u = u_piece @ u
            if any(abs(b - s) < 1e-30 or b == s for s in marks):
                props.append(u.copy())
        t = t_end
    # samples exactly at t=0 (before any segment)
    if sample_times.size and sample_times[0] == 0.0:
        props.insert(0, SIGMA0.copy())
    u = su2.reunitarize(u) if np.any(su2.unitarity_defect(u) > 1e-12) else u
    props = np.array(props) if props else np.zeros((0, 2, 2), dtype=complex)
    return EvolutionResult(u, sample_times, props)


def _steps_rotating_or_lab(frame, seg, signal, mids, dt):
    """Product of midpoint-frozen exponentials over one uniform run of steps."""
    g = signal.amplitude if signal is not None else 0.0
    wl = signal.frequency if signal is not None else 0.0
    xi = signal.phase if signal is not None else 0.0
    if isinstance(frame, RotatingFrame):
        ax = np.full_like(mids, 0.5 * seg.rabi * math.cos(seg.phase))
        ay = np.full_like(mids, 0.5 * seg.rabi * math.sin(seg.phase))
        az = -0.5 * seg.carrier_detuning + g * np.cos(wl * mids + xi)
    elif isinstance(frame, LabFrame):
        w0 = frame.transition_frequency
        carrier = w0 + seg.carrier_detuning
        ax = seg.rabi * np.cos(carrier * mids + seg.phase)
        ay = np.zeros_like(mids)
        az = 0.5 * w0 + g * np.cos(wl * mids + xi)
    else:  # pragma: no cover
        raise TypeError(frame)
    steps = expm_pauli(ax, ay, az, t=dt)
    return su2.compose_sequence(steps)


def _dressed_h2_coeffs(mismatch, amplitude, xi):
    """Pauli coefficients of H2 = -(Delta/2) sx + (g/2)(cos xi sz - sin xi sy)."""
    ax = -0.5 * np.asarray(mismatch, float)
    ay = -0.5 * np.asarray(amplitude, float) * np.sin(xi)
    az = 0.5 * np.asarray(amplitude, float) * np.cos(xi)
    return ax, ay, az


def _evolve_dressed(frame, segments, signal, sample_times):
    """Exact-within-RWA evolution: per segment
    U = Rz(phi) Rx(wL t_b) exp(-i H2 (t_b - t_a)) Rx(-wL t_a) Rz(-phi),
    composed in time order; driven and free segments both handled exactly.
    """
    wl = frame.frame_frequency(signal)
    g = signal.amplitude if signal is not None else 0.0
    xi = signal.phase if signal is not None else 0.0
    u = SIGMA0.copy()
    props = []
    samples = list(sample_times)
    t = 0.0
    for seg in segments:
        t_end = t + seg.duration
        marks = [s for s in samples if t < s <= t_end + 1e-30]
        edges = np.unique(np.concatenate([[t], marks, [t_end]]))
        for a, b in zip(edges[:-1], edges[1:]):
            u = _dressed_segment_piece(seg, wl, g, xi, a, b) @ u
            if any(b == s for s in marks):
                props.append(u.copy())
        t = t_end
    if sample_times.size and sample_times[0] == 0.0:
        props.insert(0, SIGMA0.copy())
    props = np.array(props) if props else np.zeros((0, 2, 2), dtype=complex)
    return EvolutionResult(u, np.asarray(sample_times, float), props)


def _dressed_segment_piece(seg, wl, g, xi, t_a, t_b):
    tau = t_b - t_a
    if seg.rabi == 0.0:
        # free evolution commutes with sz: exact phase accumulation
        if wl > 0:
            acc = (2.0 * g / wl) * (math.sin(wl * t_b + xi) - math.sin(wl * t_a + xi))
        else:
            acc = 2.0 * g * math.cos(xi) * tau
        return rotation_op("z", acc - seg.carrier_detuning * tau)
    mismatch = wl - seg.rabi
    ax, ay, az = _dressed_h2_coeffs(mismatch, g, xi)
    u2 = expm_pauli(ax, ay, az, t=tau)
    return (
        rotation_op("z", seg.phase)
        @ rotation_op("x", wl * t_b)
        @ u2
        @ rotation_op("x", -wl * t_a)
        @ rotation_op("z", -seg.phase)
    )


def dressed_propagator_analytic(amplitude, mismatch, xi, t):
    """exp(-i H2 t) for the static dressed Hamiltonian.

    On resonance (mismatch = 0) this equals Rx(xi) Rz(g t) Rx(-xi).
    """
    ax, ay, az = _dressed_h2_coeffs(mismatch, amplitude, xi)
    return expm_pauli(ax, ay, az, t=t)


def phase_change_commutator_norm(frequency, t1, xi, dphi, theta):
    """Effect of one phase jump on the rectified signal.

    Returns ``(closed_form, numeric)`` where closed_form is
    |2 sin(wL t1 + xi) sin(dphi/2) sin(theta/2)| and numeric is the spectral
    norm of [Rx(-wL t1) Rz(-dphi) Rx(wL t1), U2(t1)] with U2 the on-resonance
    signal propagator of angle theta.  The two agree to machine precision.
    """
    a = rotation_op("x", -frequency * t1) @ rotation_op("z", -dphi) @ rotation_op("x", frequency * t1)
    u2 = dressed_propagator_analytic(theta, 0.0, xi, 1.0)
    comm = a @ u2 - u2 @ a
    numeric = float(np.linalg.norm(comm, 2))
    closed = abs(2.0 * math.sin(frequency * t1 + xi) * math.sin(0.5 * dphi) * math.sin(0.5 * theta))
    return closed, numeric


def cpdd_ideal_propagator(phases, theta):
    """Closed-form rotating-frame propagator for phase changes at T = pi/wL
    on resonance with xi = 0:

        U = (-1)^(n/2) Rz(2 sum_k (phi_{2k} - phi_{2k-1})) Rz(theta)

    for an even number n of constant-phase intervals with total rectified
    angle theta.  Odd n is rejected.
    """
    phases = np.asarray(phases, dtype=float)
    n = phases.size
    if n == 0 or n % 2:
        raise ValueError("closed form requires an even, nonzero number of intervals")
    table_angle = 2.0 * (phases[1::2].sum() - phases[0::2].sum())
    sign = -1.0 if (n // 2) % 2 else 1.0
    return sign * rotation_op("z", theta + table_angle)


def evolve_ideal_pulsed(phases, spacing, signal, carrier_detuning=0.0, samples_every=None):
    """Instantaneous-pulse limit of a pulsed sequence: exact free evolution
    under the signal (commuting sz terms) interleaved with ideal pi rotations
    about equatorial axes at the listed phases, each centered in its slot.

    Returns (final, samples) where samples collects the propagator after every
    ``samples_every`` pulses (None: no samples).
    """
    phases = np.asarray(phases, dtype=float)
    g, wl, xi = signal.amplitude, signal.frequency, signal.phase

    def free(t_a, t_b):
        acc = (2.0 * g / wl) * (math.sin(wl * t_b + xi) - math.sin(wl * t_a + xi))
        return rotation_op("z", acc - carrier_detuning * (t_b - t_a))

    u = SIGMA0.copy()
    out = []
    t = 0.0
    for j, ph in enumerate(phases):
        u = free(t, t + 0.5 * spacing) @ u
        t += 0.5 * spacing
        axis = (math.cos(ph), math.sin(ph), 0.0)
        u = rotation_op(np.asarray(axis), math.pi) @ u
        u = free(t, t + 0.5 * spacing) @ u
        t += 0.5 * spacing
        if samples_every and (j + 1) % samples_every == 0:
            out.append(u.copy())
    return u, (np.array(out) if out else np.zeros((0, 2, 2), dtype=complex))


# ---------------------------------------------------------------------------
# Batched engines for parameter scans.  Leading dimension B broadcasts over
# scan points / noise shots; all segments share one interval per batch row.
# ---------------------------------------------------------------------------

def _as_batch(phases, *params):
    phases = np.asarray(phases, dtype=float)
    if phases.ndim == 1:
        phases = phases[None, :]
    b = np.broadcast(*[np.atleast_1d(np.asarray(p, float)) for p in params]).shape[0]
    b = max(b, phases.shape[0])
    out = [np.broadcast_to(np.asarray(p, float), (b,)) for p in params]
    if phases.shape[0] == 1:
        phases = np.broadcast_to(phases, (b, phases.shape[1]))
    elif phases.shape[0] != b:
        raise ValueError("phase table batch dimension mismatch")
    return phases, out, b


def cpdd_samples_dressed(phases, interval, frequency, amplitude, mismatch, xi,
                         sample_every=None):
    """Batched dressed-frame CPDD evolution with equal intervals.

    phases: (nseg,) or (B, nseg); interval/mismatch/amplitude/xi broadcast to
    (B,).  Returns propagators (B, S, 2, 2) sampled after every
    ``sample_every`` intervals (default: final only).
    """
    phases, (interval, amplitude, mismatch, xi), b = _as_batch(
        phases, interval, amplitude, mismatch, xi)
    nseg = phases.shape[1]
    if sample_every is None:
        sample_every = nseg
    ax, ay, az = _dressed_h2_coeffs(mismatch, amplitude, xi)
    u2 = expm_pauli(ax, ay, az, t=interval)
    zeros = np.zeros(b)
    w = np.broadcast_to(SIGMA0, (b, 2, 2)).copy()
    out = []
    rz_first = expm_pauli(zeros, zeros, -0.5 * phases[:, 0], t=1.0)
    for k in range(nseg):
        if k > 0:
            t_j = k * interval
            dphi = phases[:, k] - phases[:, k - 1]
            rxm = expm_pauli(-0.5 * frequency * t_j, zeros, zeros, t=1.0)
            rxp = expm_pauli(0.5 * frequency * t_j, zeros, zeros, t=1.0)
            rz = expm_pauli(zeros, zeros, -0.5 * dphi, t=1.0)
            w = u2 @ (rxm @ (rz @ (rxp @ w)))
        else:
            w = u2 @ w
        if (k + 1) % sample_every == 0:
            t_b = (k + 1) * interval
            rzf = expm_pauli(zeros, zeros, 0.5 * phases[:, k], t=1.0)
            rxf = expm_pauli(0.5 * frequency * t_b, zeros, zeros, t=1.0)
            out.append(rzf @ (rxf @ (w @ rz_first)))
    return np.stack(out, axis=1)


def cpdd_samples_rotating(phases, interval, rabi, frequency, amplitude, xi,
                          carrier_detuning=0.0, substeps=STEPS_PER_SEGMENT,
                          sample_every=None):
    """Batched rotating-frame CPDD evolution with equal intervals.

    Midpoint-frozen exponentials, ``substeps`` per interval.  Retains the full
    signal time dependence (spurious harmonics, filter shapes).  Shapes as in
    :func:`cpdd_samples_dressed`.
    """
    phases, (interval, rabi, amplitude, xi, carrier_detuning), b = _as_batch(
        phases, interval, rabi, amplitude, xi, carrier_detuning)
    nseg = phases.shape[1]
    if sample_every is None:
        sample_every = nseg
    dt = interval / substeps
    u = np.broadcast_to(SIGMA0, (b, 2, 2)).copy()
    out = []
    frac = (np.arange(substeps) + 0.5) / substeps
    for k in range(nseg):
        ax = 0.5 * rabi * np.cos(phases[:, k])
        ay = 0.5 * rabi * np.sin(phases[:, k])
        for s in range(substeps):
            tm = (k + frac[s]) * interval
            az = -0.5 * carrier_detuning + amplitude * np.cos(frequency * tm + xi)
            u = expm_pauli(ax, ay, az, t=dt) @ u
        if (k + 1) % 512 == 0:
            u = su2.reunitarize(u)
        if (k + 1) % sample_every == 0:
            out.append(u.copy())
    return np.stack(out, axis=1)
