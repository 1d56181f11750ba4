# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled confusion-EM inner loop.

Mirrors ``_confcore_py.conf_stats`` bin by bin; the channel factors are laid
out as one row-major k*k block per bin (row = spoken word cell, column =
observed word cell), and cell 0 of every bin is its 1-best word.
"""

from libc.math cimport log
from libc.stdlib cimport free, malloc

import numpy as np


def conf_stats(
    double[:, ::1] Qw,
    double[:, ::1] St,
    double[::1] sposts,
    long[::1] bptr,
    double[::1] pc,
    long[::1] pptr,
    double[::1] lam,
    bint use_tf,
):
    cdef Py_ssize_t T = Qw.shape[0]
    cdef Py_ssize_t M = bptr.shape[0] - 1
    cdef Py_ssize_t i, a, b, t, f0, p0, k, kmax
    cdef double qa, den, sq, logsq, sb, sbar, w, loglik, binw

    kmax = 0
    for i in range(M):
        k = bptr[i + 1] - bptr[i]
        if k > kmax:
            kmax = k

    N_arr = np.zeros(T, dtype=np.float64)
    D_arr = np.zeros(T, dtype=np.float64)
    cdef double[::1] N = N_arr
    cdef double[::1] D = D_arr

    cdef double *qmix = <double *> malloc(kmax * sizeof(double))
    cdef double *ww = <double *> malloc(kmax * sizeof(double))
    if qmix == NULL or ww == NULL:
        free(qmix)
        free(ww)
        raise MemoryError()

    loglik = 0.0
    try:
        with nogil:
            for i in range(M):
                f0 = bptr[i]
                k = bptr[i + 1] - f0
                p0 = pptr[i]
                sq = 0.0
                for a in range(k):
                    qa = 0.0
                    for t in range(T):
                        qa += lam[t] * Qw[t, f0 + a]
                    qmix[a] = qa
                    sq += qa
                    ww[a] = 0.0
                logsq = log(sq)

                if use_tf:
                    sbar = 0.0
                    for b in range(k):
                        sb = sposts[f0 + b]
                        sbar += sb
                        den = 0.0
                        for a in range(k):
                            den += qmix[a] * pc[p0 + a * k + b]
                        if sb > 0.0:
                            loglik += sb * (log(den) - logsq)
                        if den > 0.0:
                            if sb > 0.0:
                                for a in range(k):
                                    ww[a] += sb * qmix[a] * pc[p0 + a * k + b] / den
                        else:
                            ww[b] += sb
                    binw = sbar
                else:
                    den = 0.0
                    for a in range(k):
                        den += qmix[a] * pc[p0 + a * k]
                    loglik += log(den) - logsq
                    if den > 0.0:
                        for a in range(k):
                            ww[a] = qmix[a] * pc[p0 + a * k] / den
                    else:
                        ww[0] = 1.0
                    binw = 1.0

                for a in range(k):
                    w = ww[a]
                    if w != 0.0:
                        qa = qmix[a]
                        for t in range(T):
                            N[t] += w * lam[t] * Qw[t, f0 + a] / qa
                for t in range(T):
                    D[t] += binw * St[t, i] / sq
    finally:
        free(qmix)
        free(ww)

    return N_arr, D_arr, loglik
