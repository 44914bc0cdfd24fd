# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for exponential pulse-comb evaluation.

These are the hot inner loops of the coincidence-histogram models: sums of
two-sided exponentials centered on a train of peak positions, evaluated on
every histogram bin for every fit iteration. The pure-NumPy twin in
``_pure.py`` implements the same contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()


def group_exp_comb(double[::1] tau, double[::1] centers, int[::1] group,
                   int n_groups, double scale):
    """Grouped exponential-comb sums.

    Returns ``(g0, g1)`` with shape ``(len(tau), n_groups)`` where
    ``g0[i, g] = sum_{j in group g} exp(-|tau[i] - centers[j]| / scale)``
    and ``g1`` carries an extra ``|tau[i] - centers[j]|`` factor (used for
    the gradient with respect to ``scale``).
    """
    cdef Py_ssize_t m = tau.shape[0]
    cdef Py_ssize_t k = centers.shape[0]
    if group.shape[0] != k:
        raise ValueError("group index must have one entry per center")
    g0_arr = np.zeros((m, n_groups), dtype=np.float64)
    g1_arr = np.zeros((m, n_groups), dtype=np.float64)
    cdef double[:, ::1] g0 = g0_arr
    cdef double[:, ::1] g1 = g1_arr
    cdef Py_ssize_t i, j
    cdef int g
    cdef double d, e, inv = 1.0 / scale
    with nogil:
        for i in range(m):
            for j in range(k):
                d = fabs(tau[i] - centers[j])
                e = exp(-d * inv)
                g = group[j]
                g0[i, g] += e
                g1[i, g] += d * e
    return g0_arr, g1_arr


def exp_comb(double[::1] tau, double[::1] centers, double scale):
    """Single-group comb: returns 1-D ``(s0, s1)`` summed over all centers."""
    cdef Py_ssize_t m = tau.shape[0]
    cdef Py_ssize_t k = centers.shape[0]
    s0_arr = np.zeros(m, dtype=np.float64)
    s1_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] s0 = s0_arr
    cdef double[::1] s1 = s1_arr
    cdef Py_ssize_t i, j
    cdef double d, e, inv = 1.0 / scale
    with nogil:
        for i in range(m):
            for j in range(k):
                d = fabs(tau[i] - centers[j])
                e = exp(-d * inv)
                s0[i] += e
                s1[i] += d * e
    return s0_arr, s1_arr
