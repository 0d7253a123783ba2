"""Finite-difference oracle and scalar quaternion reference used across tests."""

import numpy as np

FD_STEP = 1e-6

# unit products e_a * e_b = sign * e_c over the basis (1, i, j, k)
_UNIT_TABLE = {
    (0, 0): (1, 0), (0, 1): (1, 1), (0, 2): (1, 2), (0, 3): (1, 3),
    (1, 0): (1, 1), (1, 1): (-1, 0), (1, 2): (1, 3), (1, 3): (-1, 2),
    (2, 0): (1, 2), (2, 1): (-1, 3), (2, 2): (-1, 0), (2, 3): (1, 1),
    (3, 0): (1, 3), (3, 1): (1, 2), (3, 2): (-1, 1), (3, 3): (-1, 0),
}


def scalar_qmul(q, p):
    """Product of two scalar quaternions (4-tuples) by expanding all 16 unit products."""
    out = [0.0, 0.0, 0.0, 0.0]
    for a in range(4):
        for b in range(4):
            sign, c = _UNIT_TABLE[a, b]
            out[c] += sign * q[a] * p[b]
    return out


def scalar_hamilton(q, p):
    """Coordinate-by-coordinate reference for a (4, n) Hamilton product."""
    n = q.shape[-1]
    out = np.zeros((4, n))
    for d in range(n):
        out[:, d] = scalar_qmul([float(x) for x in q[:, d]], [float(x) for x in p[:, d]])
    return out


def scalar_normalize(q):
    out = np.zeros_like(q, dtype=float)
    for d in range(q.shape[-1]):
        col = [float(x) for x in q[:, d]]
        norm = sum(x * x for x in col) ** 0.5
        out[:, d] = [x / norm for x in col]
    return out


def scalar_inner(q, p):
    return sum(float(a) * float(b) for a, b in zip(q.ravel(), p.ravel()))


def numeric_grad(f, x, h=FD_STEP):
    """Central differences of scalar ``f`` w.r.t. every entry of array ``x`` (modified in place, restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric):
    """Max-norm relative error, floored so that all-zero gradients compare absolutely."""
    analytic, numeric = np.asarray(analytic, float), np.asarray(numeric, float)
    scale = max(np.abs(numeric).max(initial=0.0), np.abs(analytic).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)
