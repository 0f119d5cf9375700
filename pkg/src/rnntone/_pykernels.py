"""NumPy reference versions of the recursion kernels in ``_ckernels.pyx``.

Same signatures and semantics; one Python-level iteration per time step.
"""
import numpy as np


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _order(start, stop, reverse):
    return range(stop - 1, start - 1, -1) if reverse else range(start, stop)


def recur_forward(zin, offsets, V, reverse):
    hs = np.empty_like(zin)
    for s in range(len(offsets) - 1):
        prev = None
        for t in _order(offsets[s], offsets[s + 1], reverse):
            z = zin[t] if prev is None else zin[t] + V @ prev
            hs[t] = prev = _sigmoid(z)
    return hs


def recur_backward(hs, dhs, offsets, V, reverse):
    dz = np.empty_like(hs)
    for s in range(len(offsets) - 1):
        carry = np.zeros(hs.shape[1])
        for t in reversed(_order(offsets[s], offsets[s + 1], reverse)):
            h = hs[t]
            dz[t] = (dhs[t] + carry) * h * (1.0 - h)
            carry = V.T @ dz[t]
    return dz


def pool_forward(hs, offsets, kind, reverse):
    S, H = len(offsets) - 1, hs.shape[1]
    c = np.empty((S, H))
    idx = np.zeros((S, H), dtype=np.int64)
    for s in range(S):
        start, stop = int(offsets[s]), int(offsets[s + 1])
        seg = hs[start:stop]
        if kind == 0:
            row = start if reverse else stop - 1
            c[s] = hs[row]
            idx[s] = row
        elif kind == 1:
            c[s] = seg.sum(axis=0) / (stop - start)
        else:
            arg = np.argmax(seg, axis=0)
            c[s] = seg[arg, np.arange(H)]
            idx[s] = start + arg
    return c, idx
