"""Numpy implementations of the hot kernels.

These are the reference semantics; ``_ckernels.pyx`` must agree with them.
"""
import numpy as np

WELL_CONDITIONED = 0
NEAR_AXIS = 1
DEGENERATE = 2
INVALID = 3


def _sample_times(n, fs):
    return np.arange(n, dtype=np.float64) / fs


def lockin_amplitudes(x, omega, fs):
    """Quadrature-correlation amplitude of every row of ``x`` at ``omega``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[1]
    wt = omega * _sample_times(n, fs)
    i = x @ np.sin(wt)
    q = x @ np.cos(wt)
    return 2.0 * np.sqrt(i * i + q * q) / n


def quantize(y, step, limit):
    """Round to the nearest multiple of ``step`` and clip to ``[-limit, limit]``.

    ``step == 0`` disables rounding. Returns (quantized, clipped_per_row).
    """
    y = np.asarray(y, dtype=np.float64)
    clipped = np.any(np.abs(y) > limit, axis=-1)
    if step > 0:
        y = np.floor(y / step + 0.5) * step
    return np.clip(y, -limit, limit), clipped


def chain_streams(amps, phases, noise, sigma, omega, fs, n, gain, step, limit, offsets=None):
    """Synthesize receiver streams: sinus + noise, DC block, gain, converter."""
    amps = np.asarray(amps, dtype=np.float64)
    wt = omega * _sample_times(n, fs)
    x = amps[:, None] * np.sin(wt[None, :] + np.asarray(phases, dtype=np.float64)[:, None])
    if sigma != 0.0 and noise is not None:
        x = x + sigma * np.asarray(noise, dtype=np.float64)
    if offsets is not None:
        x = x + np.asarray(offsets, dtype=np.float64)[:, None]
    x = x - x.mean(axis=1, keepdims=True)
    return quantize(gain * x, step, limit)


def chain_amplitudes(amps, phases, noise, sigma, omega, fs, n, gain, step, limit):
    """Run the full receiver chain and return (lock-in amplitudes, clipped)."""
    y, clipped = chain_streams(amps, phases, noise, sigma, omega, fs, n, gain, step, limit)
    return lockin_amplitudes(y, omega, fs), clipped


def localize_batch(quads, s, tol):
    """Vectorized bearing/distance inversion.

    Returns (alpha in radians, r in meters, quality code) per row; degenerate
    and invalid rows carry NaN.
    """
    q = np.asarray(quads, dtype=np.float64)
    a1, a2, a3, a4 = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    valid = (a1 > 0) & (a2 > 0) & (a3 > 0) & (a4 > 0) & np.all(np.isfinite(q), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq1 = np.sqrt(a1 / a3)
        sq2 = np.sqrt(a2 / a4)
        d1 = np.abs(sq1 - 1.0)
        d2 = np.abs(sq2 - 1.0)
        v1 = (sq1 - 1.0) / (sq1 + 1.0)
        v2 = (sq2 - 1.0) / (sq2 + 1.0)
        alpha = np.arctan2(v2, v1)
        r = np.where(d1 >= d2, s * np.cos(alpha) / v1, s * np.sin(alpha) / v2)
    code = np.where((d1 < tol) | (d2 < tol), NEAR_AXIS, WELL_CONDITIONED)
    degenerate = (d1 < tol) & (d2 < tol)
    code = np.where(degenerate, DEGENERATE, code)
    code = np.where(valid, code, INVALID)
    bad = degenerate | ~valid
    alpha = np.where(bad, np.nan, alpha)
    r = np.where(bad, np.nan, r)
    return alpha, r, code.astype(np.int8)


def linear_intensity_sum(positions, tx_db, attenuation, floor_db, emitting):
    """Linear intensity each robot receives from every other emitting robot.

    Contributions below ``floor_db`` are dropped.
    """
    p = np.asarray(positions, dtype=np.float64)
    n = p.shape[0]
    if n == 0:
        return np.zeros(0)
    diff = p[:, None, :] - p[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    level = np.asarray(tx_db, dtype=np.float64)[None, :] - attenuation * d
    mask = (level >= floor_db) & np.asarray(emitting, dtype=bool)[None, :]
    np.fill_diagonal(mask, False)
    return np.where(mask, 10.0 ** (level / 10.0), 0.0).sum(axis=1)
