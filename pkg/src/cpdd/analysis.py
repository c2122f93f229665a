# Spectral estimation and nonlinear least-squares fitting.
#
# The spectrum is the one-sided magnitude of the FFT of the mean-removed
# series (a pure cosine of amplitude a at a bin center gives a peak of height
# a).  Line fits use a damped Gauss-Newton (Levenberg-Marquardt) minimizer
# with a multiplicative lambda schedule; parameter standard errors are
# referenced to an independently measured noise level when one is available,
# because the residual of a Lorentzian fitted across a transform-limited line
# is dominated by sidelobe shape mismatch rather than noise.

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0 as _scipy_j0

BESSEL_J0_FIRST_ZERO = 2.404825557695773


@dataclass(frozen=True)
class Spectrum:
    """Uniform one-sided magnitude spectrum."""

    frequencies: np.ndarray
    power: np.ndarray
    bin_width: float

    def __post_init__(self):
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequency bins must increase")
        if np.any(self.power < 0):
            raise ValueError("spectral magnitudes must be >= 0")


def power_spectrum(samples, sample_period):
    """One-sided magnitude spectrum with the mean removed before transform.

    Bin width is 1/(n*sample_period).  Magnitudes are scaled 2|X_k|/n for
    interior bins (|X_k|/n at DC and Nyquist), so Parseval reads

        sum (x - <x>)^2 = n * (S_0^2 + 0.5 * sum_interior S_k^2 + S_nyq^2).
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    n = x.size
    spec = np.fft.rfft(x - x.mean())
    mag = np.abs(spec) * (2.0 / n)
    mag[0] *= 0.5
    if n % 2 == 0:
        mag[-1] *= 0.5
    freqs = np.fft.rfftfreq(n, sample_period)
    return Spectrum(freqs, mag, 1.0 / (n * sample_period))


def parseval_mismatch(samples, spectrum):
    """Relative gap between time-domain and spectral sums of squares."""
    x = np.asarray(samples, dtype=float)
    x = x - x.mean()
    n = x.size
    s = spectrum.power
    two_sided = s[0] ** 2 + 0.5 * np.sum(s[1:-1] ** 2)
    if n % 2 == 0:
        two_sided += s[-1] ** 2
    else:
        two_sided += 0.5 * s[-1] ** 2
    lhs = float(np.sum(x * x))
    rhs = float(n * two_sided)
    return abs(lhs - rhs) / max(lhs, 1e-300)


def bessel_j0(x):
    """Bessel function J0; |x| <= 1e4 supported, abs error <= 1e-10."""
    return _scipy_j0(x)


def bessel_j0_series(x, terms=60):
    """Alternating power series sum (-1)^k (x^2/4)^k / (k!)^2 — the slow
    reference path, accurate in float64 for |x| < 8."""
    x = np.asarray(x, dtype=float)
    q = -0.25 * x * x
    term = np.ones_like(x)
    acc = np.ones_like(x)
    for k in range(1, terms):
        term = term * q / (k * k)
        acc = acc + term
    return acc


@dataclass
class FitResult:
    """Nonlinear fit output: named parameters, standard errors, diagnostics."""

    params: dict
    errors: dict
    residual_norm: float
    converged: bool
    iterations: int
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "params": dict(self.params),
            "errors": dict(self.errors),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            **{k: v for k, v in self.extras.items()},
        }


def levenberg_marquardt(residual, p0, max_iter=200, lam0=1e-3,
                        step_tol=1e-10, cost_tol=1e-12, noise_scale=None):
    """Damped Gauss-Newton on sum(residual(p)^2).

    lambda is scaled x0.1 after an accepted step and x10 after a rejected one
    (Marquardt diagonal scaling); convergence when the relative parameter step
    drops below ``step_tol`` or the relative cost change below ``cost_tol``.
    Returns (p, perr, cost, iterations, converged).  ``noise_scale``, when
    given, replaces the residual-based sigma in the covariance estimate.
    """
    p = np.asarray(p0, dtype=float).copy()
    npar = p.size
    r = residual(p)
    cost = float(r @ r)
    lam = lam0
    converged = False
    it = 0

    def jac(p, r):
        j = np.empty((r.size, npar))
        for k in range(npar):
            dp = np.zeros(npar)
            dp[k] = max(abs(p[k]) * 1e-7, 1e-12)
            j[:, k] = (residual(p + dp) - r) / dp[k]
        return j

    for it in range(1, max_iter + 1):
        j = jac(p, r)
        jtj = j.T @ j
        grad = j.T @ r
        accepted = False
        for _ in range(60):
            damped = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-300))
            try:
                step = np.linalg.solve(damped, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = p + step
            r_new = residual(p_new)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                rel_step = float(np.max(np.abs(step) / (np.abs(p) + 1e-300)))
                rel_cost = (cost - cost_new) / max(cost, 1e-300)
                p, r, cost = p_new, r_new, cost_new
                lam = max(lam * 0.1, 1e-14)
                accepted = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not accepted:
            break
        if rel_step < step_tol or rel_cost < cost_tol:
            converged = True
            break
    else:
        it = max_iter

    j = jac(p, r)
    dof = max(r.size - npar, 1)
    sigma2 = noise_scale**2 if noise_scale is not None else cost / dof
    try:
        cov = np.linalg.inv(j.T @ j) * sigma2
        perr = np.sqrt(np.abs(np.diag(cov)))
    except np.linalg.LinAlgError:
        perr = np.full(npar, np.nan)
        converged = False
    return p, perr, cost, it, converged


def lorentzian(nu, amplitude, center, hwhm, offset):
    """amplitude * hwhm^2 / ((center - nu)^2 + hwhm^2) + offset."""
    return amplitude * hwhm**2 / ((center - nu) ** 2 + hwhm**2) + offset


def robust_noise_floor(spectrum, exclude_center=None, exclude_halfwidth=0.0):
    """Noise level of the magnitude spectrum: median absolute deviation
    (scaled to a standard deviation) over all bins except the DC foot and an
    exclusion zone around a peak.  The median makes the estimate robust to
    the peak and its sidelobes."""
    s = spectrum.power
    keep = np.ones(s.size, dtype=bool)
    keep[: min(5, s.size)] = False
    if exclude_center is not None:
        keep &= np.abs(spectrum.frequencies - exclude_center) > exclude_halfwidth
    band = s[keep]
    if band.size < 8:
        raise ValueError("not enough bins outside the exclusion zone")
    return float(np.median(np.abs(band - np.median(band))) * 1.4826)


def fit_lorentzian(spectrum, window=None, window_bins=50):
    """Lorentzian line fit around the strongest peak of a magnitude spectrum.

    ``window`` is an explicit (lo, hi) frequency range; otherwise the fit uses
    ``window_bins`` bins on each side of the peak bin.  Initial guesses come
    from the peak bin, its height, the half-maximum crossing, and the window
    median.  SNR is amplitude over the spectrum-wide robust noise floor
    (peak region excluded); the same noise level scales the parameter errors.

    Raises ValueError for windows of fewer than 8 bins; non-convergence is
    reported through ``converged`` rather than raised.
    """
    f = spectrum.frequencies
    s = spectrum.power
    if window is not None:
        lo, hi = window
        mask = (f >= lo) & (f <= hi)
        if mask.sum() < 8:
            raise ValueError("fit window contains fewer than 8 bins")
        idx = np.nonzero(mask)[0]
        i_peak = idx[np.argmax(s[idx])]
        lo_i, hi_i = idx[0], idx[-1] + 1
    else:
        i_peak = 1 + int(np.argmax(s[1:]))
        lo_i = max(1, i_peak - window_bins)
        hi_i = min(s.size, i_peak + window_bins + 1)
        if hi_i - lo_i < 8:
            raise ValueError("fit window contains fewer than 8 bins")
    x = f[lo_i:hi_i]
    y = s[lo_i:hi_i]

    offset0 = float(np.median(y))
    amp0 = float(s[i_peak] - offset0)
    center0 = float(f[i_peak])
    half = offset0 + 0.5 * amp0
    above = np.nonzero(y >= half)[0]
    hwhm0 = 0.5 * (x[above[-1]] - x[above[0]]) if above.size >= 2 else 0.0
    hwhm0 = max(hwhm0, 0.35 * spectrum.bin_width)

    p0 = np.array([amp0, center0, hwhm0, offset0])

    def resid(p):
        return lorentzian(x, p[0], p[1], abs(p[2]), p[3]) - y

    noise = robust_noise_floor(spectrum, exclude_center=center0,
                               exclude_halfwidth=max(5 * hwhm0, 5 * spectrum.bin_width))
    p, perr, cost, iters, converged = levenberg_marquardt(resid, p0, noise_scale=noise)
    hwhm = abs(p[2])
    noise = robust_noise_floor(spectrum, exclude_center=p[1],
                               exclude_halfwidth=max(5 * hwhm, 5 * spectrum.bin_width))
    snr = p[0] / noise if noise > 0 else math.inf
    return FitResult(
        params={"amplitude": p[0], "center_hz": p[1], "hwhm_hz": hwhm, "offset": p[3]},
        errors={"amplitude": perr[0], "center_hz": perr[1], "hwhm_hz": perr[2], "offset": perr[3]},
        residual_norm=math.sqrt(cost),
        converged=bool(converged and snr >= 3.0),
        iterations=iters,
        extras={"snr": float(snr), "noise_floor": noise, "detected": bool(snr >= 3.0)},
    )


def fit_bessel_decay(times, contrasts):
    """Fit c(t) = c_max * J0(g t) * exp(-(t/T2)^b) + offset.

    ``g`` is seeded from the first zero crossing via J0's first root; without
    a crossing it falls back to the small-argument curvature and the result is
    flagged low-confidence.  Needs at least 6 points.
    """
    t = np.asarray(times, dtype=float)
    c = np.asarray(contrasts, dtype=float)
    if t.size < 6:
        raise ValueError("need at least 6 points for a Bessel-decay fit")
    order = np.argsort(t)
    t, c = t[order], c[order]

    cmax0 = float(np.max(np.abs(c)))
    offset0 = float(np.mean(c[-max(2, t.size // 8):]))
    sign_change = np.nonzero(np.diff(np.sign(c - offset0)) != 0)[0]
    low_confidence = sign_change.size == 0
    if not low_confidence:
        i = sign_change[0]
        t_zero = t[i] + (t[i + 1] - t[i]) * abs(c[i] - offset0) / (abs(c[i] - offset0) + abs(c[i + 1] - offset0) + 1e-300)
        g0 = BESSEL_J0_FIRST_ZERO / t_zero
    else:
        # J0(gt) ~ 1 - (gt)^2/4: curvature seed from the early decay
        head = slice(0, max(4, t.size // 3))
        denom = cmax0 * t[head] ** 2 + 1e-300
        curv = np.clip((cmax0 - np.abs(c[head] - offset0)) * 4.0 / denom, 0.0, None)
        g0 = float(np.sqrt(np.mean(curv[1:]))) if curv.size > 1 else 1.0 / t[-1]
        g0 = g0 if g0 > 0 else 1.0 / t[-1]
    t2_0 = t[-1] if t[-1] > 0 else 1.0
    p0 = np.array([cmax0, g0, t2_0, 1.0, offset0])

    def resid(p):
        cmax, g, t2, b, off = p
        envelope = np.exp(-np.power(np.abs(t / abs(t2)), np.clip(b, 0.2, 4.0)))
        return cmax * bessel_j0(abs(g) * t) * envelope + off - c

    p, perr, cost, iters, converged = levenberg_marquardt(resid, p0)
    names = ("c_max", "g_rad_s", "t2_s", "stretch", "offset")
    vals = (p[0], abs(p[1]), abs(p[2]), p[3], p[4])
    return FitResult(
        params=dict(zip(names, vals)),
        errors=dict(zip(names, perr)),
        residual_norm=math.sqrt(cost),
        converged=bool(converged and not low_confidence),
        iterations=iters,
        extras={"low_confidence": low_confidence},
    )


def fit_gaussian_decay(times, contrasts, kappa, gyro):
    """Fit c(t) = amp * exp(-(kappa * gyro * B_rms * t)^2 / 2) for B_rms with
    the attenuation factor and gyromagnetic ratio fixed."""
    t = np.asarray(times, dtype=float)
    c = np.asarray(contrasts, dtype=float)
    if t.size < 4:
        raise ValueError("need at least 4 points for a Gaussian-decay fit")
    amp0 = float(np.max(np.abs(c)))
    scale = kappa * gyro
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.clip(np.abs(c[1:]) / max(amp0, 1e-300), 1e-12, 1.0)
        est = np.sqrt(-2.0 * np.log(ratio)) / (scale * t[1:])
    b0 = float(np.nanmedian(est[np.isfinite(est) & (est > 0)])) if np.any(est > 0) else 0.0
    p0 = np.array([amp0, b0 if b0 > 0 else 1e-9])

    def resid(p):
        amp, brms = p
        return amp * np.exp(-0.5 * (scale * brms * t) ** 2) - c

    p, perr, cost, iters, converged = levenberg_marquardt(resid, p0)
    return FitResult(
        params={"amplitude": p[0], "b_rms_tesla": abs(p[1])},
        errors={"amplitude": perr[0], "b_rms_tesla": perr[1]},
        residual_norm=math.sqrt(cost),
        converged=bool(converged),
        iterations=iters,
    )


def fit_cosine(times, values):
    """Fit a * cos(w t + phi0) + offset; seeds w from the FFT peak, refines
    with the LM engine.  Used to read oscillation frequencies off time scans."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 8:
        raise ValueError("need at least 8 points for a cosine fit")
    dt = t[1] - t[0]
    spec = np.fft.rfft(y - y.mean())
    k = 1 + int(np.argmax(np.abs(spec[1:])))
    w0 = 2.0 * math.pi * k / (t.size * dt)
    # half-period traces put the energy in the lowest bin; refine from there
    a0 = 0.5 * (y.max() - y.min())
    p0 = np.array([a0, w0, float(np.angle(spec[k])), float(y.mean())])

    def resid(p):
        return p[0] * np.cos(p[1] * t + p[2]) + p[3] - y

    p, perr, cost, iters, converged = levenberg_marquardt(resid, p0)
    names = ("amplitude", "omega_rad_s", "phase", "offset")
    vals = (abs(p[0]), abs(p[1]), p[2], p[3])
    return FitResult(
        params=dict(zip(names, vals)),
        errors=dict(zip(names, perr)),
        residual_norm=math.sqrt(cost),
        converged=bool(converged),
        iterations=iters,
    )
