"""Pure numpy implementation of the scoring kernels.

Mirrors ``_ckernels.pyx`` function for function. Parameter tables are
``(rows, 4, n)`` arrays; triples are passed as three index vectors.
"""

import numpy as np

from .quat import conj, hamilton, normalize, normalize_backward, qinner

BACKEND = "python"


def _rotations(rel, rot1, rot2, r, use1, use2):
    w = normalize(rel[r])
    w1 = normalize(rot1[r]) if use1 else None
    w2 = normalize(rot2[r]) if use2 else None
    return w, w1, w2


def _forward(ent, rel, rot1, rot2, h, r, t, use1, use2):
    w, w1, w2 = _rotations(rel, rot1, rot2, r, use1, use2)
    vh, vt = ent[h], ent[t]
    a = hamilton(vh, w1) if use1 else vh
    b = hamilton(a, w)
    c = hamilton(vt, w2) if use2 else vt
    return vh, vt, w, w1, w2, a, b, c


def score_triples(ent, rel, rot1, rot2, h, r, t, use1, use2):
    *_, b, c = _forward(ent, rel, rot1, rot2, h, r, t, use1, use2)
    return np.atleast_1d(qinner(b, c))


def score_candidates(ent, rel, rot1, rot2, h, r, t, side, use1, use2):
    """Scores of every entity substituted on ``side`` (0 head, 1 tail)."""
    w = normalize(rel[r])
    if side == 1:
        a = hamilton(ent[h], normalize(rot1[r])) if use1 else ent[h]
        b = hamilton(a, w)
        c = hamilton(ent, normalize(rot2[r])) if use2 else ent
        return qinner(np.broadcast_to(b, c.shape), c)
    c = hamilton(ent[t], normalize(rot2[r])) if use2 else ent[t]
    a = hamilton(ent, normalize(rot1[r])) if use1 else ent
    b = hamilton(a, w)
    return qinner(b, np.broadcast_to(c, b.shape))


def _backward(ent, rel, rot1, rot2, h, r, t, use1, use2, fwd, upstream):
    vh, vt, w, w1, w2, a, b, c = fwd
    u = upstream[:, None, None]
    gb = u * c
    gc = u * b
    zeros = np.zeros_like(gb)
    if use2:
        gt = hamilton(gc, conj(w2))
        grot2 = normalize_backward(rot2[r], hamilton(conj(vt), gc))
    else:
        gt, grot2 = gc, zeros
    ga = hamilton(gb, conj(w))
    grel = normalize_backward(rel[r], hamilton(conj(a), gb))
    if use1:
        gh = hamilton(ga, conj(w1))
        grot1 = normalize_backward(rot1[r], hamilton(conj(vh), ga))
    else:
        gh, grot1 = ga, zeros.copy()
    return gh, gt, grel, grot1, grot2


def score_grad(ent, rel, rot1, rot2, h, r, t, upstream, use1, use2):
    fwd = _forward(ent, rel, rot1, rot2, h, r, t, use1, use2)
    upstream = np.asarray(upstream, dtype=ent.dtype)
    return _backward(ent, rel, rot1, rot2, h, r, t, use1, use2, fwd, upstream)


def logistic_grad(ent, rel, rot1, rot2, h, r, t, labels, use1, use2):
    """Per-triple ``softplus(-l * f)`` and its gradients."""
    fwd = _forward(ent, rel, rot1, rot2, h, r, t, use1, use2)
    scores = np.atleast_1d(qinner(fwd[-2], fwd[-1]))
    labels = np.asarray(labels, dtype=scores.dtype)
    z = -labels * scores
    losses = np.logaddexp(0.0, z)
    # d softplus(z)/dz = sigmoid(z)
    upstream = -labels * np.exp(z - losses)
    grads = _backward(ent, rel, rot1, rot2, h, r, t, use1, use2, fwd, upstream)
    return (scores, losses) + grads
