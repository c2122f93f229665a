# Figure rendering for the CLI report path (Agg backend, files only).

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_traces(results, path, title=""):
    """Stroboscopic population traces, one line per Rabi mismatch."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for res in results:
        label = "%.0f kHz" % (res.meta.get("rabi_mismatch_rad_s", 0.0) / (2 * np.pi * 1e3))
        ax.plot(np.asarray(res.x) * 1e6, res.mean, lw=1.0, label=label)
    ax.set_xlabel("interaction time (us)")
    ax.set_ylabel("population of |0>")
    ax.set_title(title)
    ax.legend(title="mismatch", fontsize=8)
    _finish(fig, path)


def plot_scan(result, path, xlabel, ylabel, title="", xscale=1.0, logy=False):
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.asarray(result.x) * xscale
    if np.any(result.stderr > 0):
        ax.errorbar(x, result.mean, yerr=result.stderr, fmt="o-", ms=2.5, lw=0.8, capsize=2)
    else:
        ax.plot(x, result.mean, "o-", ms=2.5, lw=0.8)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    _finish(fig, path)


def plot_overlay(results, labels, path, xlabel, ylabel, title="", xscale=1.0):
    fig, ax = plt.subplots(figsize=(7, 4))
    for res, lab in zip(results, labels):
        ax.plot(np.asarray(res.x) * xscale, res.mean, "o-", ms=2.5, lw=0.8, label=lab)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    _finish(fig, path)


def plot_map(carrier, mismatch, fid_map, path, title=""):
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    im = ax.pcolormesh(np.asarray(mismatch), np.asarray(carrier), fid_map,
                       vmin=0.0, vmax=1.0, shading="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label="fidelity")
    ax.set_xlabel("Rabi mismatch / target")
    ax.set_ylabel("carrier detuning / target")
    ax.set_title(title)
    _finish(fig, path)


def plot_spectrum(freqs, mags, path, peak_hz=None, title=""):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(np.asarray(freqs) / 1e3, np.maximum(mags, 1e-12), lw=0.6)
    if peak_hz is not None:
        ax.axvline(peak_hz / 1e3, color="tab:red", lw=0.8, ls="--")
    ax.set_xlabel("frequency (kHz)")
    ax.set_ylabel("magnitude (arb.)")
    ax.set_title(title)
    _finish(fig, path)


def plot_scaling(rows, slopes, path, title=""):
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.6))
    t = np.array([r["duration_s"] for r in rows])
    panels = (
        ("linewidth_hz", "linewidth 2*sigma (Hz)", "linewidth"),
        ("dnu0_hz", "freq. uncertainty (Hz)", "dnu0"),
        ("snr", "SNR", "snr"),
    )
    for ax, (key, label, slope_key) in zip(axes, panels):
        y = np.array([r[key] for r in rows])
        ax.loglog(t, y, "o", ms=4)
        coeffs = np.polyfit(np.log10(t), np.log10(y), 1)
        ax.loglog(t, 10 ** np.polyval(coeffs, np.log10(t)), "-", lw=0.8,
                  label="slope %.2f" % slopes[slope_key])
        ax.set_xlabel("measurement time (s)")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
    fig.suptitle(title)
    _finish(fig, path)
