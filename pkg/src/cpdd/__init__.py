"""Continuous phased dynamical decoupling: simulation and analysis toolkit.

A driven two-level sensor is evolved under phase-switched continuous drives
with quasi-static amplitude/detuning noise and an AC signal field.  The
package covers protocol robustness maps, sensing scans (time, detuning,
frequency, order), spurious-harmonic spectra, heterodyne trace synthesis and
frequency estimation, and shot-noise sensitivity calculators, all exactly on
SU(2) propagators.
"""

__version__ = "0.1.0"

from .analysis import (FitResult, Spectrum, bessel_j0, fit_bessel_decay,
                       fit_gaussian_decay, fit_lorentzian, power_spectrum)
from .dynamics import (DressedFrame, DriveSegment, EvolutionResult, LabFrame,
                       RotatingFrame, SignalField, cpdd_ideal_propagator,
                       dressed_propagator_analytic, evolve,
                       evolve_ideal_pulsed, hamiltonian_at,
                       phase_change_commutator_norm)
from .noise import (NoiseParams, PulseError, fidelity_xy8_analytic,
                    fidelity_zero8_analytic, parameterized_pulse,
                    pulse_error_from_noise, robustness_map)
from .qdyne import (QdyneConfig, QdyneTrace, analyze_trace,
                    optimal_sensing_time, scaling_analysis,
                    sensitivity_from_fit, sensitivity_shot_noise,
                    simulate_trace)
from .sensing import (GAMMA_NV, KAPPA_CPDD, KAPPA_PULSED, MeasurementModel,
                      ScanResult, contrast_vs_detuning, frequency_scan,
                      order_scan, ramsey_wrapped_measurement,
                      spurious_spectrum, time_scan)
from .sequences import (QdyneSchedule, SequenceSpec, build_cpdd, build_cx,
                        build_cxy4, build_cxy4r, build_cxy8,
                        build_qdyne_schedule, build_xy8_pulsed,
                        load_phase_table, randomize_global_phase)
from .su2 import (SIGMA0, SIGMA_X, SIGMA_Y, SIGMA_Z, compose, expm_hermitian,
                  fidelity, rotation_op)
