"""The compiled comb kernels and their pure-NumPy twin must agree."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dotkit import _kernels
from dotkit._kernels import _pure

try:
    from dotkit._kernels import _core
except ImportError:
    _core = None

needs_core = pytest.mark.skipif(_core is None,
                                reason="compiled kernel backend not built")


def _brute_force(tau, centers, group, n_groups, scale):
    g0 = np.zeros((len(tau), n_groups))
    g1 = np.zeros((len(tau), n_groups))
    for i, t in enumerate(tau):
        for c, g in zip(centers, group):
            d = abs(t - c)
            e = np.exp(-d / scale)
            g0[i, g] += e
            g1[i, g] += d * e
    return g0, g1


@given(
    tau=st.lists(st.floats(-1e5, 1e5), min_size=1, max_size=40),
    centers=st.lists(st.floats(-1e5, 1e5), min_size=1, max_size=15),
    scale=st.floats(1.0, 1e4),
    data=st.data(),
)
@settings(max_examples=40, deadline=None)
def test_pure_matches_brute_force(tau, centers, scale, data):
    n_groups = data.draw(st.integers(1, 4))
    group = np.array(
        data.draw(st.lists(st.integers(0, n_groups - 1),
                           min_size=len(centers), max_size=len(centers))),
        dtype=np.int32)
    tau = np.asarray(tau)
    centers = np.asarray(centers)
    expected = _brute_force(tau, centers, group, n_groups, scale)
    got = _pure.group_exp_comb(tau, centers, group, n_groups, scale)
    np.testing.assert_allclose(got[0], expected[0], rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(got[1], expected[1], rtol=1e-12, atol=1e-300)


@needs_core
@given(
    m=st.integers(1, 200),
    k=st.integers(1, 30),
    scale=st.floats(1.0, 1e4),
    seed=st.integers(0, 2**31),
)
@settings(max_examples=40, deadline=None)
def test_backends_agree(m, k, scale, seed):
    rng = np.random.default_rng(seed)
    tau = rng.uniform(-1e5, 1e5, m)
    centers = rng.uniform(-1e5, 1e5, k)
    group = rng.integers(0, 5, k).astype(np.int32)
    a = _core.group_exp_comb(tau, centers, group, 5, scale)
    b = _pure.group_exp_comb(tau, centers, group, 5, scale)
    # rtol covers summation-order differences, atol the denormal underflow
    # of peaks hundreds of decades away
    np.testing.assert_allclose(a[0], b[0], rtol=1e-10, atol=1e-270)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-10, atol=1e-270)
    sa = _core.exp_comb(tau, centers, scale)
    sb = _pure.exp_comb(tau, centers, scale)
    np.testing.assert_allclose(sa[0], sb[0], rtol=1e-10, atol=1e-270)
    np.testing.assert_allclose(sa[1], sb[1], rtol=1e-10, atol=1e-270)


def test_exp_comb_is_single_group_sum():
    tau = np.linspace(-10.0, 10.0, 101)
    centers = np.array([-3.0, 0.0, 5.0])
    group = np.zeros(3, dtype=np.int32)
    g0, g1 = _kernels.group_exp_comb(tau, centers, group, 1, 2.5)
    s0, s1 = _kernels.exp_comb(tau, centers, 2.5)
    np.testing.assert_allclose(g0[:, 0], s0, rtol=1e-15)
    np.testing.assert_allclose(g1[:, 0], s1, rtol=1e-15)


def test_group_index_length_mismatch_raises():
    with pytest.raises(ValueError):
        _kernels.group_exp_comb(np.zeros(4), np.zeros(3),
                                np.zeros(2, dtype=np.int32), 1, 1.0)
