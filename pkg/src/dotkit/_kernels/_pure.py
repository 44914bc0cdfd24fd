"""Pure-NumPy twin of the compiled comb kernels.

Same contract as ``_core.pyx``; used when the extension is not built or when
``DOTKIT_KERNELS=numpy`` forces it.
"""

import numpy as np


def group_exp_comb(tau, centers, group, n_groups, scale):
    tau = np.ascontiguousarray(tau, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    group = np.asarray(group)
    if group.shape[0] != centers.shape[0]:
        raise ValueError("group index must have one entry per center")
    d = np.abs(tau[:, None] - centers[None, :])
    e = np.exp(-d / scale)
    de = d * e
    g0 = np.zeros((tau.size, n_groups))
    g1 = np.zeros((tau.size, n_groups))
    for g in range(n_groups):
        sel = group == g
        if sel.any():
            g0[:, g] = e[:, sel].sum(axis=1)
            g1[:, g] = de[:, sel].sum(axis=1)
    return g0, g1


def exp_comb(tau, centers, scale):
    tau = np.ascontiguousarray(tau, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    d = np.abs(tau[:, None] - centers[None, :])
    e = np.exp(-d / scale)
    return e.sum(axis=1), (d * e).sum(axis=1)
