# Quasi-static noise model and the per-pulse error algebra.
#
# A nominal pi interval driven with amplitude and carrier errors produces the
# general inversion propagator
#
#     U = [[ sqrt(eps) e^{i alpha},   sqrt(1-eps) e^{-i beta} ],
#          [ -sqrt(1-eps) e^{i beta}, sqrt(eps) e^{-i alpha}  ]]
#
# where 1 - eps is the transition probability.  Phase-shifting the drive by
# phi_k maps beta -> beta + phi_k, so a phased sequence multiplies such
# matrices with shifted betas; robust tables (XY8 etc.) cancel the error to
# higher order.  Leading-order fidelities of an 8-interval block:
#
#     constant phases:  F = 1 - 32 cos^4(alpha) eps + O(eps^2)
#     XY8 phases:       F = 1 - 4 [cos(alpha) + cos(3 alpha)]^2 eps^3 + O(eps^4)

import math
from dataclasses import dataclass

import numpy as np

from . import su2
from .dynamics import DriveSegment, RotatingFrame, evolve
from .su2 import expm_pauli, fidelity

_DIST_KINDS = ("fixed", "uniform", "gaussian")


@dataclass(frozen=True)
class NoiseParams:
    """Quasi-static carrier detuning (delta) and Rabi mismatch (Delta = wL - Omega).

    ``carrier_detuning`` / ``rabi_mismatch`` are the distribution centers in
    rad/s; widths (>= 0) spread Monte-Carlo samples, interpreted as the
    half-range for 'uniform' and the standard deviation for 'gaussian'.
    Noise is frozen within one sequence and resampled between shots.
    """

    carrier_detuning: float = 0.0
    rabi_mismatch: float = 0.0
    distribution: str = "fixed"
    carrier_width: float = 0.0
    rabi_width: float = 0.0

    def __post_init__(self):
        if self.distribution not in _DIST_KINDS:
            raise ValueError(f"distribution must be one of {_DIST_KINDS}")
        if self.carrier_width < 0 or self.rabi_width < 0:
            raise ValueError("distribution widths must be >= 0")

    def sample(self, rng, n):
        """Draw n (carrier_detuning, rabi_mismatch) pairs."""
        if self.distribution == "fixed" or (self.carrier_width == 0 and self.rabi_width == 0):
            return (np.full(n, self.carrier_detuning), np.full(n, self.rabi_mismatch))
        if self.distribution == "uniform":
            d = self.carrier_detuning + self.carrier_width * rng.uniform(-1, 1, n)
            m = self.rabi_mismatch + self.rabi_width * rng.uniform(-1, 1, n)
        else:
            d = rng.normal(self.carrier_detuning, self.carrier_width, n)
            m = rng.normal(self.rabi_mismatch, self.rabi_width, n)
        return d, m


@dataclass(frozen=True)
class PulseError:
    """(eps, alpha, beta) triple of one errored inversion."""

    epsilon: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")


def pulse_error_from_noise(rabi, signal_frequency, carrier_detuning=0.0):
    """Exact (eps, alpha, beta) of one constant-phase interval of length
    T = pi / signal_frequency driven at ``rabi`` with carrier detuning.

    The interval is evolved exactly (static Hamiltonian) and the triple read
    off the propagator: eps = 1 - |U10|^2, alpha = arg(U00), beta = arg(-U10).
    """
    t = math.pi / signal_frequency
    seg = DriveSegment(t, rabi, 0.0, carrier_detuning)
    u = evolve(RotatingFrame(), [seg], substep=t).final
    eps = float(np.clip(1.0 - abs(u[1, 0]) ** 2, 0.0, 1.0))
    alpha = float(np.angle(u[0, 0])) if abs(u[0, 0]) > 1e-300 else 0.0
    beta = float(np.angle(-u[1, 0])) if abs(u[1, 0]) > 1e-300 else 0.0
    return PulseError(eps, alpha, beta)


def parameterized_pulse(error, phase_shift=0.0):
    """Propagator of one errored inversion with its drive phase shifted."""
    eps = error.epsilon
    beta = error.beta + phase_shift
    root_e = math.sqrt(eps)
    root_p = math.sqrt(1.0 - eps)
    return np.array(
        [
            [root_e * np.exp(1j * error.alpha), root_p * np.exp(-1j * beta)],
            [-root_p * np.exp(1j * beta), root_e * np.exp(-1j * error.alpha)],
        ],
        dtype=complex,
    )


def sequence_product(error, phases):
    """Time-ordered product of parameterized pulses over a phase list."""
    u = None
    for ph in phases:
        p = parameterized_pulse(error, ph)
        u = p if u is None else p @ u
    return u


def sequence_product_fidelity(error, phases):
    """Fidelity of the errored product against the perfect-inversion product
    (same alpha/beta, eps = 0)."""
    u = sequence_product(error, phases)
    u0 = sequence_product(PulseError(0.0, error.alpha, error.beta), phases)
    return float(fidelity(u, u0))


def fidelity_zero8_analytic(eps, alpha=0.0):
    """Leading-order fidelity of 8 equal-phase errored inversions."""
    return 1.0 - 32.0 * math.cos(alpha) ** 4 * eps


def fidelity_xy8_analytic(eps, alpha=0.0):
    """Leading-order fidelity of the XY8-phased product (cubic in eps)."""
    return 1.0 - 4.0 * (math.cos(alpha) + math.cos(3.0 * alpha)) ** 2 * eps**3


def _sequence_unitaries(spec, signal_frequency, carrier_detuning, rabi_mismatch):
    """Exact propagator of a no-signal CPDD sequence over a grid of
    (carrier_detuning, rabi_mismatch) values, all broadcast to a batch."""
    delta, mism = np.broadcast_arrays(
        np.asarray(carrier_detuning, float), np.asarray(rabi_mismatch, float))
    shape = delta.shape
    delta = delta.ravel()
    rabi = signal_frequency - mism.ravel()
    phases = spec.phase_list()
    t = spec.interval
    u = None
    for ph in phases:
        ax = 0.5 * rabi * math.cos(ph)
        ay = 0.5 * rabi * math.sin(ph)
        az = -0.5 * delta
        step = expm_pauli(ax, ay, az, t=t)
        u = step if u is None else step @ u
    return u.reshape(shape + (2, 2))


def robustness_map(spec, carrier_detunings, rabi_mismatches):
    """Fidelity of a CPDD sequence on a (delta, Delta) grid, no sensed field.

    Rows follow ``carrier_detunings``, columns ``rabi_mismatches``.  Each cell
    composes the exact static per-interval propagators at Omega = wL - Delta
    and compares against the ideal (delta = Delta = 0) propagator of the same
    sequence.  The nominal Rabi rate of ``spec`` sets the target wL = Omega0.
    """
    carrier = np.asarray(carrier_detunings, dtype=float)
    mism = np.asarray(rabi_mismatches, dtype=float)
    if carrier.size < 2 or mism.size < 2:
        raise ValueError("robustness map needs at least a 2x2 grid")
    wl = spec.rabi
    dd, mm = np.meshgrid(carrier, mism, indexing="ij")
    u = _sequence_unitaries(spec, wl, dd, mm)
    u0 = _sequence_unitaries(spec, wl, 0.0, 0.0)
    return np.asarray(fidelity(u, u0))


def robustness_map_mc(spec, carrier_detunings, rabi_mismatches, noise, shots, seed):
    """Monte-Carlo robustness map: each cell averages ``shots`` samples of the
    noise distribution centered on the cell, with a deterministic per-cell
    stream keyed by (seed, cell index).  Zero widths reproduce
    :func:`robustness_map` exactly.
    """
    carrier = np.asarray(carrier_detunings, dtype=float)
    mism = np.asarray(rabi_mismatches, dtype=float)
    out = np.empty((carrier.size, mism.size))
    wl = spec.rabi
    u0 = _sequence_unitaries(spec, wl, 0.0, 0.0)
    for idx in range(carrier.size * mism.size):
        i, j = divmod(idx, mism.size)
        rng = np.random.Generator(np.random.Philox(key=np.array([seed & (2**64 - 1), idx], dtype=np.uint64)))
        cell = NoiseParams(carrier[i], mism[j], noise.distribution,
                           noise.carrier_width, noise.rabi_width)
        d, m = cell.sample(rng, shots)
        u = _sequence_unitaries(spec, wl, d, m)
        out[i, j] = float(np.mean(fidelity(u, u0)))
    return out


def write_map_csv(path, carrier_detunings, rabi_mismatches, fid_map):
    """CSV layout: header row of Delta values, first column of delta values."""
    carrier = np.asarray(carrier_detunings, dtype=float)
    mism = np.asarray(rabi_mismatches, dtype=float)
    with open(path, "w") as fh:
        fh.write("delta_rad_s\\Delta_rad_s," + ",".join("%.12g" % v for v in mism) + "\n")
        for i, d in enumerate(carrier):
            fh.write("%.12g," % d + ",".join("%.12g" % v for v in fid_map[i]) + "\n")
