"""Backend selection for the hot scoring kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_kernels_py`` takes over. Setting
``QUATKG_PURE_PYTHON=1`` forces the numpy path.
"""

import os

import numpy as np

from . import _kernels_py

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _kernels_py}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if os.environ.get("QUATKG_PURE_PYTHON") or _ckernels is None:
    _impl = _kernels_py
else:
    _impl = _ckernels

BACKEND = _impl.BACKEND


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return _impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; have {sorted(BACKENDS)}") from None


def _idx(a):
    return np.ascontiguousarray(a, dtype=np.intp)


def _columns(triples):
    triples = np.asarray(triples)
    if triples.ndim != 2 or triples.shape[1] != 3:
        raise ValueError(f"triples must have shape (B, 3), got {triples.shape}")
    return _idx(triples[:, 0]), _idx(triples[:, 1]), _idx(triples[:, 2])


def score_triples(tables, triples, use1, use2, backend=None):
    h, r, t = _columns(triples)
    return get_backend(backend).score_triples(*tables, h, r, t, use1, use2)


def score_candidates(tables, triple, side, use1, use2, backend=None):
    h, r, t = (int(x) for x in triple)
    return get_backend(backend).score_candidates(*tables, h, r, t, int(side), use1, use2)


def score_grad(tables, triples, upstream, use1, use2, backend=None):
    h, r, t = _columns(triples)
    upstream = np.ascontiguousarray(upstream, dtype=tables[0].dtype)
    return get_backend(backend).score_grad(*tables, h, r, t, upstream, use1, use2)


def logistic_grad(tables, triples, labels, use1, use2, backend=None):
    h, r, t = _columns(triples)
    labels = np.ascontiguousarray(labels, dtype=tables[0].dtype)
    return get_backend(backend).logistic_grad(*tables, h, r, t, labels, use1, use2)
