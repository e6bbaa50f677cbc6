# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, floor, fabs, atan2, pow, NAN

cnp.import_array()

cdef int WELL_CONDITIONED = 0
cdef int NEAR_AXIS = 1
cdef int DEGENERATE = 2
cdef int INVALID = 3


cdef inline double _quantize(double y, double step, double limit) nogil:
    if step > 0:
        y = floor(y / step + 0.5) * step
    if y > limit:
        return limit
    if y < -limit:
        return -limit
    return y


# A standalone lock-in is two matrix-vector products; BLAS already does that
# better than a hand loop, so the compiled backend reuses the numpy version.
from ._pykernels import lockin_amplitudes  # noqa: E402


def chain_amplitudes(amps, phases, noise, double sigma, double omega, double fs,
                     Py_ssize_t n, double gain, double step, double limit):
    cdef double[::1] av = np.ascontiguousarray(amps, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(phases, dtype=np.float64)
    cdef Py_ssize_t rows = av.shape[0], i, k
    cdef bint use_noise = sigma != 0.0 and noise is not None
    cdef double[:, ::1] zv
    if use_noise:
        zv = np.ascontiguousarray(noise, dtype=np.float64)
        if zv.shape[0] != rows or zv.shape[1] != n:
            raise ValueError("noise must have shape (len(amps), n)")
    cdef double[::1] wt = omega * np.arange(n, dtype=np.float64) / fs
    cdef double[::1] sn = np.sin(wt)
    cdef double[::1] cs = np.cos(wt)
    cdef double[::1] buf = np.empty(n)
    out = np.empty(rows)
    clipped = np.zeros(rows, dtype=bool)
    cdef double[::1] ov = out
    cdef cnp.npy_bool[::1] cv = clipped
    cdef double mean, y, acc_i, acc_q
    with nogil:
        for i in range(rows):
            mean = 0.0
            for k in range(n):
                y = av[i] * sin(wt[k] + pv[i])
                if use_noise:
                    y = y + sigma * zv[i, k]
                buf[k] = y
                mean = mean + y
            mean = mean / n
            acc_i = 0.0
            acc_q = 0.0
            for k in range(n):
                y = gain * (buf[k] - mean)
                if fabs(y) > limit:
                    cv[i] = 1
                y = _quantize(y, step, limit)
                acc_i = acc_i + y * sn[k]
                acc_q = acc_q + y * cs[k]
            ov[i] = 2.0 * sqrt(acc_i * acc_i + acc_q * acc_q) / n
    return out, clipped


def localize_batch(quads, double s, double tol):
    cdef double[:, ::1] q = np.ascontiguousarray(quads, dtype=np.float64)
    cdef Py_ssize_t rows = q.shape[0], i
    alpha = np.empty(rows)
    r = np.empty(rows)
    code = np.empty(rows, dtype=np.int8)
    cdef double[::1] al = alpha
    cdef double[::1] rv = r
    cdef signed char[::1] cv = code
    cdef double a1, a2, a3, a4, sq1, sq2, d1, d2, v1, v2, ang
    with nogil:
        for i in range(rows):
            a1 = q[i, 0]
            a2 = q[i, 1]
            a3 = q[i, 2]
            a4 = q[i, 3]
            # also rejects NaN
            if not (a1 > 0 and a2 > 0 and a3 > 0 and a4 > 0) or not (
                    a1 < 1e308 and a2 < 1e308 and a3 < 1e308 and a4 < 1e308):
                al[i] = NAN
                rv[i] = NAN
                cv[i] = INVALID
                continue
            sq1 = sqrt(a1 / a3)
            sq2 = sqrt(a2 / a4)
            d1 = fabs(sq1 - 1.0)
            d2 = fabs(sq2 - 1.0)
            if d1 < tol and d2 < tol:
                al[i] = NAN
                rv[i] = NAN
                cv[i] = DEGENERATE
                continue
            v1 = (sq1 - 1.0) / (sq1 + 1.0)
            v2 = (sq2 - 1.0) / (sq2 + 1.0)
            ang = atan2(v2, v1)
            al[i] = ang
            if d1 >= d2:
                rv[i] = s * cos(ang) / v1
            else:
                rv[i] = s * sin(ang) / v2
            cv[i] = NEAR_AXIS if (d1 < tol or d2 < tol) else WELL_CONDITIONED
    return alpha, r, code


def linear_intensity_sum(positions, tx_db, double attenuation, double floor_db, emitting):
    cdef double[:, ::1] p = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
    cdef double[::1] tx = np.ascontiguousarray(tx_db, dtype=np.float64)
    cdef cnp.npy_bool[::1] em = np.ascontiguousarray(emitting, dtype=bool)
    cdef Py_ssize_t n = p.shape[0], i, j
    out = np.zeros(n)
    cdef double[::1] ov = out
    cdef double dx, dy, dz, level
    with nogil:
        for i in range(n):
            for j in range(n):
                if i == j or not em[j]:
                    continue
                dx = p[i, 0] - p[j, 0]
                dy = p[i, 1] - p[j, 1]
                dz = p[i, 2] - p[j, 2]
                level = tx[j] - attenuation * sqrt(dx * dx + dy * dy + dz * dz)
                if level >= floor_db:
                    ov[i] = ov[i] + pow(10.0, level / 10.0)
    return out
