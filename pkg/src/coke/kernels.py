"""Backend selection for the hot kernels.

The compiled extension ``coke._ckernels`` is used when importable; otherwise,
or when the environment variable ``COKE_PURE_PYTHON`` is set to a non-empty
value other than ``0``, the numpy fallback in ``coke._pykernels`` is used.
Both expose the same three functions with identical semantics.
"""
import os

from . import _pykernels

_force_pure = os.environ.get("COKE_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

is_acyclic = _impl.is_acyclic
full_dag_from_perm = _impl.full_dag_from_perm
rss_from_gram = _impl.rss_from_gram

__all__ = ["BACKEND", "is_acyclic", "full_dag_from_perm", "rss_from_gram"]
