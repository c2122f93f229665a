# Drive-segment builders for the decoupling protocols.
#
# CPDD sequences are contiguous constant-phase intervals of duration T with
# the phase stepped through a table (XY4, XY8, rotary echo, or user-supplied);
# on resonance T = pi/wL and every interval is a pi rotation.  Pulsed
# sequences are [free tau/2 - pulse - free tau/2] slots with the pulse
# centered in its slot.

import math
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import DriveSegment

TWO_PI = 2.0 * math.pi

XY8_PHASES = tuple(np.array([0, 1, 0, 1, 1, 0, 1, 0]) * (math.pi / 2))
XY4_PHASES = XY8_PHASES[:4]
ROTARY_ECHO_PHASES = (0.0, math.pi)
# CX drives at pi/2 relative to the (x) preparation pulse
CX_PHASE = math.pi / 2

PHASE_TABLES = {
    "cx": (CX_PHASE,),
    "rotary": ROTARY_ECHO_PHASES,
    "cxy4": XY4_PHASES,
    "cxy8": XY8_PHASES,
}


@dataclass(frozen=True)
class SequenceSpec:
    """A repeated phase-table sequence.

    For CPDD (style 'cpdd'), ``interval`` is the constant-phase duration T and
    the drive is on continuously.  For pulsed sequences (style 'pulsed'),
    ``interval`` is the interpulse spacing tau and ``pulse_duration`` thepulse
    length t_p = pi/rabi.  ``block_phase_offsets``, when present, adds one
    global phase per repetition block (randomized variants).
    """

    protocol: str
    phases: tuple
    interval: float
    repetitions: int
    rabi: float
    style: str = "cpdd"
    pulse_duration: float | None = None
    randomize_blocks: bool = False
    block_phase_offsets: tuple | None = None

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError("interval must be > 0")
        if self.repetitions < 1:
            raise ValueError("repetition count must be >= 1")
        if not self.phases:
            raise ValueError("phase table must be non-empty")
        if self.style == "pulsed":
            if self.pulse_duration is None or self.pulse_duration <= 0:
                raise ValueError("pulsed sequences need pulse_duration > 0")
            if self.pulse_duration > self.interval:
                raise ValueError("pulse does not fit in its slot (tau < t_p)")
        if self.block_phase_offsets is not None and len(self.block_phase_offsets) != self.repetitions:
            raise ValueError("need one block phase offset per repetition")

    @property
    def segments_per_block(self):
        return len(self.phases)

    @property
    def total_duration(self):
        return self.repetitions * len(self.phases) * self.interval

    def phase_list(self):
        """Full expanded phase list (one entry per interval/pulse slot)."""
        table = np.asarray(self.phases, dtype=float)
        out = np.tile(table, self.repetitions)
        if self.block_phase_offsets is not None:
            offs = np.repeat(np.asarray(self.block_phase_offsets, float), table.size)
            out = out + offs
        return out

    def to_segments(self, carrier_detuning=0.0, rabi=None):
        """Expand into DriveSegment list (optionally overriding the Rabi rate)."""
        omega = self.rabi if rabi is None else rabi
        phases = self.phase_list()
        if self.style == "cpdd":
            return [DriveSegment(self.interval, omega, ph, carrier_detuning) for ph in phases]
        gap = 0.5 * (self.interval - self.pulse_duration)
        segments = []
        for ph in phases:
            if gap > 0:
                segments.append(DriveSegment(gap, 0.0, 0.0, carrier_detuning))
            segments.append(DriveSegment(self.pulse_duration, omega, ph, carrier_detuning))
            if gap > 0:
                segments.append(DriveSegment(gap, 0.0, 0.0, carrier_detuning))
        return segments


def build_cx(rabi, total_time):
    """Plain continuous drive: one segment at phase pi/2 for the whole time."""
    if total_time <= 0:
        raise ValueError("total time must be > 0")
    return [DriveSegment(total_time, rabi, CX_PHASE)]


def build_cpdd(protocol, rabi, interval, repetitions, phases=None):
    """Generic CPDD spec for a named protocol or an explicit phase table."""
    if phases is None:
        try:
            phases = PHASE_TABLES[protocol]
        except KeyError:
            raise ValueError(f"unknown protocol {protocol!r}; supply a phase table") from None
    return SequenceSpec(protocol, tuple(float(p) for p in phases), interval, int(repetitions), rabi)


def build_cxy8(rabi, interval, repetitions):
    """CXY8: 8*N contiguous intervals of duration T with XY8 phases."""
    return build_cpdd("cxy8", rabi, interval, repetitions)


def build_cxy4(rabi, interval, repetitions):
    return build_cpdd("cxy4", rabi, interval, repetitions)


def build_cxy4r(rabi, interval, repetitions):
    """CXY4 with the per-block phase-randomization flag set (seed applied by
    :func:`randomize_global_phase`)."""
    spec = build_cpdd("cxy4", rabi, interval, repetitions)
    return replace(spec, protocol="cxy4r", randomize_blocks=True)


def build_cx_intervals(rabi, interval, repetitions):
    """CX expressed as repeated constant-phase intervals (for fidelity maps
    and like-for-like comparisons against CXY8 at equal pulse area)."""
    return SequenceSpec("cx", (CX_PHASE,), interval, int(repetitions), rabi)


def build_xy8_pulsed(rabi, spacing, repetitions):
    """Pulsed XY8: pi pulses of length pi/rabi centered in slots of length tau."""
    if rabi <= 0:
        raise ValueError("pulsed sequences need rabi > 0")
    t_p = math.pi / rabi
    if t_p > spacing:
        raise ValueError(
            f"pulse length {t_p:.3e} s exceeds the interpulse spacing {spacing:.3e} s"
        )
    return SequenceSpec("xy8", XY8_PHASES, spacing, int(repetitions), rabi,
                        style="pulsed", pulse_duration=t_p)


def randomize_global_phase(spec, seed):
    """Draw one uniform [0, 2pi) phase per repetition block, deterministically
    from ``seed``.  Specs without the randomization flag pass through unchanged.
    """
    if not spec.randomize_blocks:
        return spec
    rng = np.random.Generator(np.random.Philox(key=np.array([seed & (2**64 - 1), 0xB10C], dtype=np.uint64)))
    offsets = tuple(rng.uniform(0.0, TWO_PI, spec.repetitions))
    return replace(spec, block_phase_offsets=offsets)


def load_phase_table(path):
    """Read a phase table file: one phase per line in units of pi, '#' comments."""
    phases = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            phases.append(float(line) * math.pi)
    if not phases:
        raise ValueError(f"no phases found in {path}")
    return tuple(phases)


@dataclass(frozen=True)
class QdyneSchedule:
    """Stroboscopic measurement schedule: each cycle is t_seq of interaction
    plus t_oh of readout/initialization dead time; measurement k starts at
    k * period so the signal phase advances by a fixed increment per shot."""

    sequence_time: float
    overhead: float
    measurements: int

    def __post_init__(self):
        if self.sequence_time <= 0:
            raise ValueError("sequence time must be > 0")
        if self.overhead < 0:
            raise ValueError("overhead must be >= 0")
        if self.measurements < 1:
            raise ValueError("need at least one measurement")

    @property
    def period(self):
        return self.sequence_time + self.overhead

    @property
    def total_time(self):
        return self.measurements * self.period

    def start_times(self):
        return np.arange(self.measurements) * self.period

    def signal_phases(self, signal):
        """Signal phase at the start of each measurement, mod 2pi."""
        k = np.arange(self.measurements, dtype=np.float64)
        cycles = (signal.frequency / TWO_PI) * self.period
        return TWO_PI * np.mod(cycles * k + signal.phase / TWO_PI, 1.0)


def build_qdyne_schedule(spec_or_time, overhead, measurements):
    """Schedule from a SequenceSpec (t_seq = its total duration) or a time."""
    if isinstance(spec_or_time, SequenceSpec):
        t_seq = spec_or_time.total_duration
    else:
        t_seq = float(spec_or_time)
    return QdyneSchedule(t_seq, overhead, int(measurements))
