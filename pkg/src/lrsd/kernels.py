"""Backend selection for the hot entrywise/breakpoint kernels.

The compiled extension ``lrsd._kernels`` is used when it was built;
otherwise the numpy fallback ``lrsd._kernels_py`` is loaded.  Both expose
the same functions on flat arrays; the wrappers here deal with matrix
shapes and masks.
"""
from __future__ import annotations

import numpy as np

from lrsd import _kernels_py

try:
    from lrsd import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


def backend() -> str:
    return _impl.BACKEND


def use_backend(name: str) -> None:
    """Switch between ``"cython"`` and ``"python"`` at runtime."""
    global _impl
    if name == "python":
        _impl = _kernels_py
    elif name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available; rebuild the package")
        _impl = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")


def _flat(X):
    return np.ascontiguousarray(X, dtype=np.float64).reshape(-1)


def _obs(mask):
    if mask is None or mask.is_full:
        return None
    return np.ascontiguousarray(mask.array, dtype=np.uint8).reshape(-1)


def soft_threshold(X: np.ndarray, t: float) -> np.ndarray:
    return np.asarray(_impl.soft_threshold(_flat(X), float(t))).reshape(X.shape)


def alm_shrink(B: np.ndarray, mask, rho: float, nu: float, xi: float) -> np.ndarray:
    out = _impl.alm_shrink(_flat(B), _obs(mask), float(rho), float(nu), float(xi))
    return np.asarray(out).reshape(B.shape)


def pspg_assemble(q: np.ndarray, D: np.ndarray, mask, w: float, c1: float):
    L, S = _impl.pspg_assemble(_flat(q), _flat(D), _obs(mask), float(w), float(c1))
    return np.asarray(L).reshape(q.shape), np.asarray(S).reshape(q.shape)


def theta_bracket(a_sorted: np.ndarray, xi: float, rho: float, delta: float):
    jstar, kbar, p, s_lo, s_hi = _impl.theta_bracket(_flat(a_sorted), float(xi), float(rho),
                                                     float(delta))
    return int(jstar), int(kbar), float(p), float(s_lo), float(s_hi)


def theta_root(p: float, c: float, rho: float, delta: float, s_lo: float, s_hi: float) -> float:
    return float(_impl.theta_root(float(p), float(c), float(rho), float(delta),
                                  float(s_lo), float(s_hi)))


def level_search(a_sorted: np.ndarray, delta: float) -> float:
    return float(_impl.level_search(_flat(a_sorted), float(delta)))
