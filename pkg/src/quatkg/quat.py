"""Batched quaternion-vector algebra.

A quaternion vector of dimension ``n`` is stored as an array whose last two
axes are ``(4, n)``: the component planes ``r, i, j, k`` in that order, each a
contiguous length-``n`` row. Any leading axes are batch axes.

Every forward operation has a matching ``*_backward`` that maps an upstream
gradient of the output to gradients of the inputs.
"""

from __future__ import annotations

import numpy as np

class ShapeError(ValueError):
    """Raised when quaternion operands have incompatible shapes."""


def _check(q: np.ndarray, name: str = "q") -> np.ndarray:
    q = np.asarray(q)
    if q.ndim < 2 or q.shape[-2] != 4:
        raise ShapeError(f"{name} must have shape (..., 4, n), got {q.shape}")
    if q.shape[-1] < 1:
        raise ShapeError(f"{name} must have n >= 1")
    return q


def _check_pair(q, p, same_shape=False):
    q = _check(q, "q")
    p = _check(p, "p")
    if q.shape[-1] != p.shape[-1]:
        raise ShapeError(f"dimension mismatch: {q.shape[-1]} vs {p.shape[-1]}")
    if same_shape and q.shape != p.shape:
        raise ShapeError(f"shape mismatch: {q.shape} vs {p.shape}")
    return q, p


def qvec(r, i, j, k) -> np.ndarray:
    """Stack four component planes into a quaternion vector."""
    return np.stack(np.broadcast_arrays(r, i, j, k), axis=-2).astype(float, copy=False)


def identity(n: int, dtype=np.float64) -> np.ndarray:
    """The multiplicative identity (1 + 0i + 0j + 0k) at every coordinate."""
    q = np.zeros((4, n), dtype=dtype)
    q[0] = 1.0
    return q


def conj(q: np.ndarray) -> np.ndarray:
    q = _check(q)
    out = -q
    out[..., 0, :] = q[..., 0, :]
    return out


def magnitude(q: np.ndarray) -> np.ndarray:
    """Per-coordinate quaternion modulus, shape ``(..., n)``."""
    q = _check(q)
    r, i, j, k = q[..., 0, :], q[..., 1, :], q[..., 2, :], q[..., 3, :]
    return np.sqrt(r * r + i * i + j * j + k * k)


def hamilton(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Coordinate-wise Hamilton product ``q ⊗ p``.

    Leading (batch) axes broadcast; the quaternion dimension must match.
    """
    q, p = _check_pair(q, p)
    qr, qi, qj, qk = q[..., 0, :], q[..., 1, :], q[..., 2, :], q[..., 3, :]
    pr, pi, pj, pk = p[..., 0, :], p[..., 1, :], p[..., 2, :], p[..., 3, :]
    return np.stack(
        [
            qr * pr - qi * pi - qj * pj - qk * pk,
            qi * pr + qr * pi - qk * pj + qj * pk,
            qj * pr + qk * pi + qr * pj - qi * pk,
            qk * pr - qj * pi + qi * pj + qr * pk,
        ],
        axis=-2,
    )


def _scaled(q):
    """Split every coordinate into ``m * s`` with ``m`` its largest absolute
    component; returns ``s``, ``|s|`` and ``m`` (``m = 0`` for zero coordinates)."""
    m = np.abs(q).max(axis=-2, keepdims=True)
    s = q / np.where(m > 0, m, 1)
    ns = np.sqrt((s * s).sum(axis=-2, keepdims=True))
    return s, ns, m


def normalize(q: np.ndarray) -> np.ndarray:
    """Scale every coordinate to a unit quaternion.

    The norm is computed on the coordinate divided by its largest absolute
    component, so tiny and huge coordinates normalize without underflow or
    overflow. An all-zero coordinate stays zero.
    """
    s, ns, _ = _scaled(_check(q))
    return s / np.where(ns > 0, ns, 1)


def qinner(q: np.ndarray, p: np.ndarray):
    """Quaternion inner product: sum of the four plane-wise dot products.

    Returns a float for single vectors and an array over the batch axes
    otherwise. Summation runs over the flattened ``4n`` axis so the result of
    one row does not depend on how many rows are reduced together.
    """
    q, p = _check_pair(q, p)
    prod = q * p
    out = prod.reshape(prod.shape[:-2] + (-1,)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def hamilton_backward(q, p, upstream):
    """Gradients of ``<upstream, q ⊗ p>`` w.r.t. ``q`` and ``p``.

    Uses ``d/dq = upstream ⊗ conj(p)`` and ``d/dp = conj(q) ⊗ upstream``.
    """
    q, p = _check_pair(q, p, same_shape=True)
    upstream = _check(upstream, "upstream")
    if upstream.shape != q.shape:
        raise ShapeError(f"upstream shape {upstream.shape} does not match {q.shape}")
    return hamilton(upstream, conj(p)), hamilton(conj(q), upstream)


def normalize_backward(q, upstream):
    """Tangent projection ``(g - y (y . g)) / |q|`` per coordinate, ``y = N(q)``.

    At an all-zero coordinate the gradient passes through unchanged.
    """
    q = _check(q)
    upstream = _check(upstream, "upstream")
    if upstream.shape != q.shape:
        raise ShapeError(f"upstream shape {upstream.shape} does not match {q.shape}")
    s, ns, m = _scaled(q)
    nonzero = m > 0
    ns = np.where(nonzero, ns, 1)
    y = s / ns
    radial = (y * upstream).sum(axis=-2, keepdims=True)
    norm = np.where(nonzero, m * ns, 1)
    return np.where(nonzero, (upstream - y * radial) / norm, upstream)


def qinner_backward(q, p, upstream):
    q, p = _check_pair(q, p, same_shape=True)
    u = np.asarray(upstream, dtype=q.dtype)
    if u.ndim:
        if u.shape != q.shape[:-2]:
            raise ShapeError(f"upstream shape {u.shape} does not match batch shape {q.shape[:-2]}")
        u = u[..., None, None]
    return u * p, u * q
