# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: regularized Biot-Savart sums and periodic cubic interpolation."""
import numpy as np

from libc.math cimport erf, exp, sqrt, floor

cdef double _INV_SQRT_PI = 0.5641895835477563
cdef double _INV_4PI = 0.07957747154594767


cdef inline double _kernel_factor(double r, double inv_s2a):
    # G'(r)/r for G(r) = -erf(r/(sqrt(2) a)) / (4 pi r); series below u = 1e-2,
    # bare kernel above u = 6.5 where the Gaussian correction is below 1e-17
    cdef double u = r * inv_s2a
    cdef double u2
    if u > 6.5:
        return _INV_4PI / (r * r * r)
    if u < 1e-2:
        u2 = u * u
        return 2.0 * _INV_SQRT_PI * (2.0 / 3.0 - 0.4 * u2 + u2 * u2 / 7.0) \
            * inv_s2a * inv_s2a * inv_s2a * _INV_4PI
    return (erf(u) - 2.0 * _INV_SQRT_PI * u * exp(-u * u)) * _INV_4PI / (r * r * r)


def biot_savart(double[:, ::1] targets, double[:, ::1] mids, double[:, ::1] seg, double reg):
    """Sum over segments of grad G_reg(x - mid) x seg at every target point."""
    cdef Py_ssize_t nt = targets.shape[0]
    cdef Py_ssize_t ns = mids.shape[0]
    cdef Py_ssize_t i, j
    cdef double inv_s2a = 1.0 / (sqrt(2.0) * reg)
    cdef double rx, ry, rz, r, f, ax, ay, az
    out = np.zeros((nt, 3))
    cdef double[:, ::1] o = out
    for i in range(nt):
        ax = 0.0
        ay = 0.0
        az = 0.0
        for j in range(ns):
            rx = targets[i, 0] - mids[j, 0]
            ry = targets[i, 1] - mids[j, 1]
            rz = targets[i, 2] - mids[j, 2]
            r = sqrt(rx * rx + ry * ry + rz * rz)
            f = _kernel_factor(r, inv_s2a)
            ax += f * (ry * seg[j, 2] - rz * seg[j, 1])
            ay += f * (rz * seg[j, 0] - rx * seg[j, 2])
            az += f * (rx * seg[j, 1] - ry * seg[j, 0])
        o[i, 0] = ax
        o[i, 1] = ay
        o[i, 2] = az
    return out


cdef inline void _weights(double t, double* w):
    w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0
    w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
    w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0
    w[3] = (t + 1.0) * t * (t - 1.0) / 6.0


def cubic_interp(double[:, :, ::1] values, double[:, ::1] idx):
    """Tensor-product 4-point Lagrange interpolation on a periodic 3-axis array.

    ``idx`` holds fractional node coordinates (position / spacing) per point.
    """
    cdef Py_ssize_t n0 = values.shape[0], n1 = values.shape[1], n2 = values.shape[2]
    cdef Py_ssize_t npts = idx.shape[0]
    cdef Py_ssize_t p, a, b, c, i0, i1, i2, j0, j1, j2
    cdef double w0[4]
    cdef double w1[4]
    cdef double w2[4]
    cdef double f0, f1, f2, acc, acc1, acc2
    out = np.empty(npts)
    cdef double[::1] o = out
    for p in range(npts):
        f0 = floor(idx[p, 0])
        f1 = floor(idx[p, 1])
        f2 = floor(idx[p, 2])
        _weights(idx[p, 0] - f0, w0)
        _weights(idx[p, 1] - f1, w1)
        _weights(idx[p, 2] - f2, w2)
        i0 = <Py_ssize_t>f0
        i1 = <Py_ssize_t>f1
        i2 = <Py_ssize_t>f2
        acc = 0.0
        for a in range(4):
            j0 = (i0 - 1 + a) % n0
            if j0 < 0:
                j0 += n0
            acc1 = 0.0
            for b in range(4):
                j1 = (i1 - 1 + b) % n1
                if j1 < 0:
                    j1 += n1
                acc2 = 0.0
                for c in range(4):
                    j2 = (i2 - 1 + c) % n2
                    if j2 < 0:
                        j2 += n2
                    acc2 += w2[c] * values[j0, j1, j2]
                acc1 += w1[b] * acc2
            acc += w0[a] * acc1
        o[p] = acc
    return out
