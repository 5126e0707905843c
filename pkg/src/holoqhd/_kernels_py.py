"""Numpy implementations of the compiled kernels (used when the extension is unavailable)."""
import numpy as np
from scipy.special import erf

_CHUNK = 2048


def _kernel_factor(r, inv_s2a):
    u = r * inv_s2a
    small = u < 1e-2
    out = np.empty_like(r)
    us = u[small]
    out[small] = (2.0 / np.sqrt(np.pi)) * (2.0 / 3.0 - 0.4 * us**2 + us**4 / 7.0) * inv_s2a**3 / (4 * np.pi)
    far = u > 6.5
    out[far] = 1.0 / (4 * np.pi * r[far] ** 3)
    mid = ~(small | far)
    ub = u[mid]
    h = erf(ub) - (2.0 / np.sqrt(np.pi)) * ub * np.exp(-ub * ub)
    out[mid] = h / (4 * np.pi * r[mid] ** 3)
    return out


def biot_savart(targets, mids, seg, reg):
    targets = np.ascontiguousarray(targets, dtype=float)
    inv_s2a = 1.0 / (np.sqrt(2.0) * reg)
    out = np.zeros((targets.shape[0], 3))
    for start in range(0, targets.shape[0], _CHUNK):
        t = targets[start:start + _CHUNK]
        r = t[:, None, :] - mids[None, :, :]
        f = _kernel_factor(np.sqrt(np.einsum("ijk,ijk->ij", r, r)), inv_s2a)
        out[start:start + _CHUNK] = np.einsum("ij,ijk->ik", f, np.cross(r, seg[None, :, :]))
    return out


def _weights(t):
    return np.stack([
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ], axis=-1)


def cubic_interp(values, idx):
    values = np.asarray(values, dtype=float)
    idx = np.asarray(idx, dtype=float)
    base = np.floor(idx)
    w = [_weights(idx[:, a] - base[:, a]) for a in range(3)]
    ind = [(base[:, a].astype(np.int64)[:, None] + np.arange(-1, 3)[None, :]) % values.shape[a]
           for a in range(3)]
    block = values[ind[0][:, :, None, None], ind[1][:, None, :, None], ind[2][:, None, None, :]]
    return np.einsum("pa,pb,pc,pabc->p", w[0], w[1], w[2], block)
