# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels.  Contracts mirror :mod:`dtnull._kernels_py` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, fabs

cnp.import_array()


def quantize_phases(x, psi):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef double[::1] pv = np.ascontiguousarray(psi, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], L = pv.shape[0], i, k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double best, d, v
    for i in range(n):
        v = xv[i]
        best = fabs(v - pv[0])
        ov[i] = pv[0]
        # strict '<' keeps the smaller codebook value on ties
        for k in range(1, L):
            d = fabs(v - pv[k])
            if d < best:
                best = d
                ov[i] = pv[k]
    return out


cdef inline double _sinr(double complex[:, ::1] prefix, Py_ssize_t M, Py_ssize_t C,
                         double tx_power, double noise_power) nogil:
    cdef double complex z
    cdef double sig, intf = 0.0
    cdef Py_ssize_t c
    z = prefix[M, 0]
    sig = (z.real * z.real + z.imag * z.imag) * tx_power / M
    for c in range(1, C):
        z = prefix[M, c]
        intf += (z.real * z.real + z.imag * z.imag)
    return sig / (intf * tx_power / M + noise_power)


def sinr_scan(h, H, double tx_power, double noise_power, psi, bint fix_first=True,
              double rel_tol=1e-12):
    """Exhaustive SINR maximization over all codebook phase assignments.

    Odometer enumeration in mixed-radix order (antenna 0 most significant)
    with incrementally maintained prefix sums of ``conj(e^{j theta_m}) h_m``.
    Returns ``(index_vector, best_sinr)``; among beams within ``rel_tol`` of the
    maximum the smallest index vector wins.
    """
    hv = np.asarray(h, dtype=np.complex128).reshape(-1)
    Hm = np.asarray(H, dtype=np.complex128).reshape(-1, hv.shape[0])
    cdef Py_ssize_t M = hv.shape[0], K = Hm.shape[0], C = K + 1
    cdef Py_ssize_t L = len(psi)
    chans = np.empty((M, C), dtype=np.complex128)
    chans[:, 0] = hv
    if K:
        chans[:, 1:] = Hm.T
    # rot[m, l, c] = exp(-j psi_l) * chans[m, c]
    rot_np = np.exp(-1j * np.asarray(psi, dtype=np.float64))[None, :, None] * chans[:, None, :]
    cdef double complex[:, :, ::1] rot = np.ascontiguousarray(rot_np)
    cdef double complex[:, ::1] prefix = np.zeros((M + 1, C), dtype=np.complex128)
    cdef Py_ssize_t[::1] digits = np.zeros(M, dtype=np.intp)
    best_digits = np.zeros(M, dtype=np.intp)
    cdef Py_ssize_t[::1] bd = best_digits
    cdef Py_ssize_t start = 1 if fix_first else 0
    cdef Py_ssize_t m, c, p
    cdef double s, smax = -1.0, thresh
    cdef int npass
    cdef bint done

    for npass in range(2):
        for m in range(M):
            digits[m] = 0
        for m in range(M):
            for c in range(C):
                prefix[m + 1, c] = prefix[m, c] + rot[m, 0, c]
        if npass == 1:
            thresh = smax * (1.0 - rel_tol)
        with nogil:
            while True:
                s = _sinr(prefix, M, C, tx_power, noise_power)
                if npass == 0:
                    if s > smax:
                        smax = s
                elif s >= thresh:
                    for m in range(M):
                        bd[m] = digits[m]
                    break
                # advance odometer
                p = M - 1
                done = False
                while True:
                    if p < start:
                        done = True
                        break
                    digits[p] += 1
                    if digits[p] < L:
                        break
                    digits[p] = 0
                    p -= 1
                if done:
                    break
                for m in range(p, M):
                    for c in range(C):
                        prefix[m + 1, c] = prefix[m, c] + rot[m, digits[m], c]
    return best_digits, float(_recompute(hv, Hm, tx_power, noise_power, np.asarray(psi)[best_digits]))


def _recompute(h, H, tx_power, noise_power, theta):
    w = np.exp(1j * theta) / np.sqrt(len(theta))
    sig = abs(np.vdot(w, h)) ** 2 * tx_power
    intf = float(np.sum(np.abs(H.conj() @ w) ** 2)) * tx_power if H.shape[0] else 0.0
    return sig / (intf + noise_power)
