# Exact 2x2 complex linear algebra for qubit propagators: Pauli matrices,
# axis rotations, closed-form Hermitian exponentials, composition with
# re-unitarization, and the half-trace fidelity measure.
#
# All operations accept stacked arrays with shape (..., 2, 2) and broadcast
# over the leading dimensions, which is what the batched scan engines rely on.

import numpy as np

SIGMA0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}

UNITARITY_TOL = 1e-10
_REUNITARIZE_DRIFT = 1e-12
_REUNITARIZE_EVERY = 1000


def expm_pauli(ax, ay, az, c=0.0, t=1.0):
    """exp(-i (c*I + ax*sx + ay*sy + az*sz) * t), exact and vectorized.

    Coefficients broadcast over leading dimensions; returns (..., 2, 2).
    """
    ax, ay, az, c, t = np.broadcast_arrays(ax, ay, az, c, t)
    r = np.sqrt(ax * ax + ay * ay + az * az)
    phi = r * t
    # sin(r t)/r, with the r -> 0 limit equal to t
    safe_r = np.where(r > 0, r, 1.0)
    sinc = np.where(r > 0, np.sin(phi) / safe_r, t)
    cosphi = np.cos(phi)
    u = np.empty(np.shape(ax) + (2, 2), dtype=complex)
    u[..., 0, 0] = cosphi - 1j * az * sinc
    u[..., 1, 1] = cosphi + 1j * az * sinc
    u[..., 0, 1] = (-ay - 1j * ax) * sinc
    u[..., 1, 0] = (ay - 1j * ax) * sinc
    if np.any(c) or np.any(np.iscomplexobj(c)):
        u = u * np.exp(-1j * c * t)[..., None, None]
    return u


def rotation_op(axis, angle):
    """Rotation exp(-i*angle*(n.sigma)/2) about a named axis or unit 3-vector.

    ``axis`` is 'x', 'y', 'z' (case-insensitive) or a length-3 unit vector
    (norm within 1e-12). ``angle`` may be an array; result broadcasts.
    """
    if isinstance(axis, str):
        try:
            n = _AXES[axis.lower()]
        except KeyError:
            raise ValueError(f"unknown rotation axis {axis!r}") from None
    else:
        n = np.asarray(axis, dtype=float)
        if n.shape != (3,):
            raise ValueError("vector axis must have shape (3,)")
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError(
                f"rotation axis must be unit length (got |n| = {np.linalg.norm(n)!r})"
            )
    angle = np.asarray(angle, dtype=float)
    if not np.all(np.isfinite(angle)):
        raise ValueError("rotation angle must be finite")
    half = 0.5 * angle
    return expm_pauli(n[0] * half, n[1] * half, n[2] * half, t=1.0)


def _pauli_decompose(h):
    """Hermitian H -> (c, ax, ay, az) with H = c*I + a.sigma."""
    h = np.asarray(h, dtype=complex)
    c = 0.5 * (h[..., 0, 0] + h[..., 1, 1]).real
    ax = h[..., 0, 1].real
    ay = -h[..., 0, 1].imag
    az = 0.5 * (h[..., 0, 0] - h[..., 1, 1]).real
    return c, ax, ay, az


def hermiticity_defect(h):
    """max |H - H^dag| over the trailing 2x2 block, relative to max(1, |H|)."""
    h = np.asarray(h, dtype=complex)
    scale = np.maximum(1.0, np.abs(h).max(axis=(-2, -1)))
    return np.abs(h - np.conj(np.swapaxes(h, -2, -1))).max(axis=(-2, -1)) / scale


def expm_hermitian(h, t=1.0):
    """exp(-i H t) for Hermitian H via the exact decomposition H = c*I + a.sigma.

    Raises ValueError when the (relative) hermiticity defect exceeds 1e-12.
    """
    h = np.asarray(h, dtype=complex)
    defect = hermiticity_defect(h)
    if np.any(defect > 1e-12):
        raise ValueError(f"matrix is not Hermitian (defect {np.max(defect):.3e})")
    c, ax, ay, az = _pauli_decompose(h)
    return expm_pauli(ax, ay, az, c=c, t=t)


def unitarity_defect(u):
    """max |U^dag U - I| over the trailing 2x2 block."""
    u = np.asarray(u, dtype=complex)
    prod = np.conj(np.swapaxes(u, -2, -1)) @ u
    return np.abs(prod - SIGMA0).max(axis=(-2, -1))


def reunitarize(u):
    """Project toward the nearest unitary by Gram-Schmidt on the two columns."""
    u = np.array(u, dtype=complex, copy=True)
    c0 = u[..., :, 0]
    c0 = c0 / np.linalg.norm(c0, axis=-1, keepdims=True)
    c1 = u[..., :, 1]
    overlap = np.sum(np.conj(c0) * c1, axis=-1, keepdims=True)
    c1 = c1 - overlap * c0
    c1 = c1 / np.linalg.norm(c1, axis=-1, keepdims=True)
    out = np.empty_like(u)
    out[..., :, 0] = c0
    out[..., :, 1] = c1
    return out


def compose(u_later, u_earlier):
    """Matrix product U_later @ U_earlier, re-unitarized when drift > 1e-12."""
    prod = np.asarray(u_later, dtype=complex) @ np.asarray(u_earlier, dtype=complex)
    if np.any(unitarity_defect(prod) > _REUNITARIZE_DRIFT):
        prod = reunitarize(prod)
    return prod


def compose_sequence(mats):
    """Time-ordered product of an iterable of propagators (first applied first).

    Re-unitarizes every 1000 factors and on exit, bounding drift on long runs.
    """
    u = None
    for k, m in enumerate(mats):
        u = np.asarray(m, dtype=complex) if u is None else m @ u
        if (k + 1) % _REUNITARIZE_EVERY == 0:
            u = reunitarize(u)
    if u is None:
        return SIGMA0.copy()
    if np.any(unitarity_defect(u) > _REUNITARIZE_DRIFT):
        u = reunitarize(u)
    return u


def fidelity(u, u0):
    """|Tr(U0^dag U)| / 2, in [0, 1]; invariant under global phases.

    The half-trace is complex in general; the magnitude keeps the measure
    real-valued and reproduces sqrt(1 - eps) for a single errored inversion.
    """
    u = np.asarray(u, dtype=complex)
    u0 = np.asarray(u0, dtype=complex)
    tr = np.einsum("...ij,...ij->...", np.conj(u0), u)
    return np.minimum(0.5 * np.abs(tr), 1.0)


def is_unitary(u, tol=UNITARITY_TOL):
    return bool(np.all(unitarity_defect(u) <= tol))


def global_phase_distance(u, v):
    """min over phi of max|U - e^{i phi} V|: distance up to a global phase."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    tr = np.einsum("...ij,...ij->...", np.conj(v), u)
    phase = np.where(np.abs(tr) > 0, tr / np.where(np.abs(tr) > 0, np.abs(tr), 1.0), 1.0)
    return np.abs(u - phase[..., None, None] * v).max(axis=(-2, -1))
