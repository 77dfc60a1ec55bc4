import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coke import _pykernels, kernels

try:
    from coke import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")


def random_problem(rng, d):
    x = rng.normal(size=(40, d)) @ rng.normal(size=(d, d))
    xc = x - x.mean(axis=0)
    perm = rng.permutation(d)
    adj = _pykernels.full_dag_from_perm(perm) & (rng.random((d, d)) < 0.5)
    return np.ascontiguousarray(xc.T @ xc), adj, perm


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    if _ckernels is not None:
        assert kernels.BACKEND == "cython"


def test_python_kernels_examples():
    assert _pykernels.full_dag_from_perm([1, 0, 2]).tolist() == [
        [False, False, True],
        [True, False, True],
        [False, False, False],
    ]
    cyc = np.array([[0, 1], [1, 0]], bool)
    assert not _pykernels.is_acyclic(cyc)
    assert _pykernels.is_acyclic(np.zeros((3, 3), bool))


@needs_ext
@settings(max_examples=100, deadline=None)
@given(st.integers(1, 15), st.integers(0, 2**31))
def test_backends_agree(d, seed):
    rng = np.random.default_rng(seed)
    cov, adj, perm = random_problem(rng, d)
    assert np.array_equal(_ckernels.full_dag_from_perm(perm), _pykernels.full_dag_from_perm(perm))
    assert _ckernels.is_acyclic(adj) == _pykernels.is_acyclic(adj)
    noisy = adj | (rng.random((d, d)) < 0.2)
    np.fill_diagonal(noisy, False)
    assert _ckernels.is_acyclic(noisy) == _pykernels.is_acyclic(noisy)
    rc, fc = _ckernels.rss_from_gram(cov, adj, 1e-6)
    rp, fp = _pykernels.rss_from_gram(cov, adj, 1e-6)
    assert np.array_equal(fc, fp)
    assert np.allclose(rc, rp, rtol=1e-10, atol=1e-9)


@needs_ext
def test_singular_block_flagged():
    cov = np.zeros((3, 3))
    adj = np.zeros((3, 3), bool)
    adj[0, 2] = adj[1, 2] = True
    for impl in (_ckernels, _pykernels):
        rss, failed = impl.rss_from_gram(cov, adj, -1.0)
        assert failed[2] and not failed[:2].any()


def test_pure_python_switch(monkeypatch):
    import importlib

    monkeypatch.setenv("COKE_PURE_PYTHON", "1")
    reloaded = importlib.reload(kernels)
    try:
        assert reloaded.BACKEND == "python"
        assert reloaded.rss_from_gram is _pykernels.rss_from_gram
    finally:
        monkeypatch.delenv("COKE_PURE_PYTHON")
        importlib.reload(kernels)
