"""Periodic Cartesian grids and the spectral operators built on them.

Fields are plain numpy arrays whose trailing axes match ``Grid.dims``.  A
vector field stacks one component per grid axis along a new leading axis, so
a 3-axis vector field has shape ``(3, nx, ny, nz)``.  Extra leading axes (for
example the two spinor components) are carried through every operator.

Grid nodes sit at ``x_j = -L/2 + j*dx`` so the origin is always a node.
"""
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from holoqhd import kernels
from holoqhd.errors import DimensionalityError, GeometryError, ParameterError

_WORKERS = 1


def set_threads(n):
    """Set the worker count used by every FFT in the package."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def fftn(a, axes):
    return sfft.fftn(a, axes=axes, workers=_WORKERS)


def ifftn(a, axes):
    return sfft.ifftn(a, axes=axes, workers=_WORKERS)


class Grid:
    """Uniform periodic box with 1, 2 or 3 axes.

    Parameters
    ----------
    dims : sequence of int
        Nodes per axis; each must be even and at least 4.
    extents : sequence of float
        Box length per axis.
    """

    def __init__(self, dims, extents):
        dims = tuple(int(d) for d in np.atleast_1d(dims))
        extents = tuple(float(e) for e in np.atleast_1d(extents))
        if not 1 <= len(dims) <= 3:
            raise DimensionalityError(f"grid must have 1-3 axes, got {len(dims)}")
        if len(extents) != len(dims):
            raise DimensionalityError("dims and extents differ in length")
        for d in dims:
            if d < 4 or d % 2:
                raise ParameterError(f"grid dims must be even and >= 4, got {d}")
        for e in extents:
            if not np.isfinite(e) or e <= 0:
                raise ParameterError(f"grid extents must be positive, got {e}")
        self.dims = dims
        self.extents = extents

    def __repr__(self):
        return f"Grid(dims={self.dims}, extents={self.extents})"

    def __eq__(self, other):
        return isinstance(other, Grid) and self.dims == other.dims and self.extents == other.extents

    def __hash__(self):
        return hash((self.dims, self.extents))

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def shape(self):
        return self.dims

    @cached_property
    def spacing(self):
        return np.array(self.extents) / np.array(self.dims)

    @cached_property
    def origin(self):
        return -0.5 * np.array(self.extents)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod(self.extents))

    @property
    def axes(self):
        """Tuple of leading-axis indices occupied by the grid in an array of ``ndim + extra`` axes."""
        return tuple(range(-self.ndim, 0))

    def coordinates(self):
        """1D node coordinates per axis."""
        return [o + h * np.arange(n) for o, h, n in zip(self.origin, self.spacing, self.dims)]

    def mesh(self):
        """Node coordinates broadcast to full grid shape, stacked as a vector field."""
        return np.stack(np.meshgrid(*self.coordinates(), indexing="ij"))

    @cached_property
    def _k(self):
        ks = []
        for a, (n, h) in enumerate(zip(self.dims, self.spacing)):
            k = 2 * np.pi * np.fft.fftfreq(n, d=h)
            shape = [1] * self.ndim
            shape[a] = n
            ks.append(k.reshape(shape))
        return ks

    @cached_property
    def wavenumbers(self):
        """Derivative wavenumbers per axis with the Nyquist mode zeroed."""
        out = []
        for a, k in enumerate(self._k):
            k = k.copy()
            idx = [0] * self.ndim
            idx[a] = self.dims[a] // 2
            k[tuple(idx)] = 0.0
            out.append(k)
        return out

    @cached_property
    def k_squared(self):
        """Full |k|^2 including the Nyquist modes (Laplacian symbol)."""
        return sum(k**2 for k in self._k)

    def integrate(self, f):
        """Riemann sum over the grid axes (spectrally exact for periodic data)."""
        return np.sum(f, axis=self.axes) * self.cell_volume

    def wrap(self, points):
        """Map positions into the primary box ``[-L/2, L/2)``."""
        points = np.asarray(points, dtype=float)
        L = np.array(self.extents)
        return np.mod(points - self.origin, L) + self.origin

    def contains(self, points, margin=0.0):
        points = np.atleast_2d(points)
        half = 0.5 * np.array(self.extents) - margin
        return bool(np.all(np.abs(points) <= half + 1e-12))


def _check(grid, f, extra=0):
    f = np.asarray(f)
    if f.shape[f.ndim - grid.ndim:] != grid.dims or f.ndim < grid.ndim + extra:
        raise DimensionalityError(f"field shape {f.shape} does not match grid {grid.dims}")
    return f


def _finish(out, real):
    return out.real if real else out


def gradient(grid, f):
    """Spectral gradient; returns an array with a new leading axis of length ``grid.ndim``."""
    f = _check(grid, f)
    real = not np.iscomplexobj(f)
    fh = fftn(f, grid.axes)
    return np.stack([_finish(ifftn(1j * k * fh, grid.axes), real) for k in grid.wavenumbers])


def partial(grid, f, axis):
    """Spectral derivative along a single grid axis."""
    f = _check(grid, f)
    real = not np.iscomplexobj(f)
    fh = fftn(f, grid.axes)
    return _finish(ifftn(1j * grid.wavenumbers[axis] * fh, grid.axes), real)


def divergence(grid, v):
    """Spectral divergence of a vector field ``v`` of shape ``(ndim, ...)``."""
    v = _check(grid, v, extra=1)
    if v.shape[0] != grid.ndim:
        raise DimensionalityError("vector field needs one component per grid axis")
    real = not np.iscomplexobj(v)
    acc = 0
    for a, k in enumerate(grid.wavenumbers):
        acc = acc + 1j * k * fftn(v[a], grid.axes)
    return _finish(ifftn(acc, grid.axes), real)


def curl(grid, v):
    """Spectral curl; only defined on 3-axis grids."""
    if grid.ndim != 3:
        raise DimensionalityError("curl requires a 3-axis grid")
    v = _check(grid, v, extra=1)
    if v.shape[0] != 3:
        raise DimensionalityError("vector field needs one component per grid axis")
    real = not np.iscomplexobj(v)
    vh = [fftn(v[a], grid.axes) for a in range(3)]
    kx, ky, kz = grid.wavenumbers
    out = [
        1j * (ky * vh[2] - kz * vh[1]),
        1j * (kz * vh[0] - kx * vh[2]),
        1j * (kx * vh[1] - ky * vh[0]),
    ]
    return np.stack([_finish(ifftn(c, grid.axes), real) for c in out])


def laplacian(grid, f):
    f = _check(grid, f)
    real = not np.iscomplexobj(f)
    return _finish(ifftn(-grid.k_squared * fftn(f, grid.axes), grid.axes), real)


def inverse_laplacian(grid, f):
    """Solve ``laplacian(u) = f - mean(f)`` with the zero mode of ``u`` set to zero."""
    f = _check(grid, f)
    real = not np.iscomplexobj(f)
    k2 = grid.k_squared.copy()
    k2.flat[0] = 1.0
    inv = -1.0 / k2
    inv.flat[0] = 0.0
    return _finish(ifftn(inv * fftn(f, grid.axes), grid.axes), real)


def spectral_multiply(grid, f, symbol):
    """Apply a Fourier multiplier ``symbol`` (broadcastable to the grid) to ``f``."""
    f = _check(grid, f)
    real = not np.iscomplexobj(f)
    return _finish(ifftn(symbol * fftn(f, grid.axes), grid.axes), real)


# ---------------------------------------------------------------------------
# interpolation


def _as_points(grid, p):
    p = np.asarray(p, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != grid.ndim:
        raise DimensionalityError(f"points have {p.shape[1]} coordinates, grid has {grid.ndim} axes")
    return grid.wrap(p), single


def _cubic(grid, f, pts):
    idx = (pts - grid.origin) / grid.spacing
    idx3 = np.zeros((idx.shape[0], 3))
    idx3[:, :grid.ndim] = idx
    lead = f.shape[:f.ndim - grid.ndim]
    flat = f.reshape((-1,) + grid.dims + (1,) * (3 - grid.ndim))
    parts = []
    for comp in flat:
        if np.iscomplexobj(comp):
            re = kernels.cubic_interp(np.ascontiguousarray(comp.real), idx3)
            im = kernels.cubic_interp(np.ascontiguousarray(comp.imag), idx3)
            parts.append(re + 1j * im)
        else:
            parts.append(kernels.cubic_interp(np.ascontiguousarray(comp, dtype=float), idx3))
    return np.stack(parts, axis=-1).reshape((pts.shape[0],) + lead)


def _fourier_factors(grid, pts):
    facs = []
    for a, n in enumerate(grid.dims):
        k = 2 * np.pi * np.fft.fftfreq(n, d=grid.spacing[a])
        x = (pts[:, a] - grid.origin[a])[:, None]
        e = np.exp(1j * k[None, :] * x)
        e[:, n // 2] = np.cos(k[n // 2] * x[:, 0])
        facs.append(e / n)
    return facs


def _fourier(grid, f, pts):
    lead = f.shape[:f.ndim - grid.ndim]
    flat = f.reshape((-1,) + grid.dims)
    facs = _fourier_factors(grid, pts)
    real = not np.iscomplexobj(f)
    npts = pts.shape[0]
    out = []
    for comp in flat:
        fh = fftn(comp, tuple(range(grid.ndim)))
        m = facs[0] @ fh.reshape(grid.dims[0], -1)
        for a in range(1, grid.ndim):
            m = np.einsum("pj,pjr->pr", facs[a], m.reshape(npts, grid.dims[a], -1))
        val = m.reshape(npts)
        out.append(val.real if real else val)
    return np.stack(out, axis=-1).reshape((npts,) + lead)


def interpolate(grid, f, points, method="cubic"):
    """Evaluate a periodic field at arbitrary positions.

    Parameters
    ----------
    f : ndarray
        Field with trailing axes equal to ``grid.dims``; leading axes are
        treated as components.
    points : array_like, shape (n, ndim) or (ndim,)
        Positions, wrapped into the primary box.
    method : {"cubic", "fourier"}
        Tensor-product 4-point Lagrange interpolation (reproduces cubics) or
        exact evaluation of the trigonometric interpolant.

    Returns
    -------
    ndarray of shape ``(n,) + leading`` (or ``leading`` for a single point).
    """
    f = _check(grid, f)
    pts, single = _as_points(grid, points)
    if method == "cubic":
        out = _cubic(grid, f, pts)
    elif method == "fourier":
        out = _fourier(grid, f, pts)
    else:
        raise ParameterError(f"unknown interpolation method {method!r}")
    return out[0] if single else out


# ---------------------------------------------------------------------------
# loops


class Loop:
    """Closed curve given by ordered points; the last point connects to the first."""

    def __init__(self, points):
        points = np.array(points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 8:
            raise GeometryError("a loop needs at least 8 points")
        self.points = points

    def __len__(self):
        return self.points.shape[0]

    @classmethod
    def circle(cls, center, radius, normal=(0.0, 0.0, 1.0), n=128, turns=1):
        """Circle of ``radius`` about ``center``; ``turns`` < 0 reverses orientation."""
        center = np.asarray(center, dtype=float)
        t = 2 * np.pi * abs(turns) * np.arange(n) / n * np.sign(turns)
        if center.size == 2:
            return cls(center + radius * np.stack([np.cos(t), np.sin(t)], axis=1))
        e1, e2 = orthonormal_frame(normal)
        return cls(center + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2))

    def parameter_derivative(self):
        """dx/dsigma at each point for sigma uniformly spaced on [0, 2*pi), by FFT."""
        n = len(self)
        k = np.fft.fftfreq(n, d=1.0 / n)
        k[n // 2] = 0.0
        return np.fft.ifft(1j * k[:, None] * np.fft.fft(self.points, axis=0), axis=0).real

    def reversed(self):
        return Loop(self.points[::-1])

    def repeated(self, times):
        return Loop(np.concatenate([self.points] * times))


def orthonormal_frame(normal):
    """Two unit vectors spanning the plane orthogonal to ``normal`` (right-handed with it)."""
    nvec = np.asarray(normal, dtype=float)
    nvec = nvec / np.linalg.norm(nvec)
    helper = np.array([1.0, 0.0, 0.0]) if abs(nvec[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(nvec, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(nvec, e1)


def loop_integral_of_samples(values, loop, rule="spectral"):
    """Integrate sampled vectors ``values`` (n, d) along ``loop``.

    ``rule="spectral"`` applies the periodic trapezoid rule in the curve
    parameter with an FFT tangent, which is spectrally accurate for smooth
    loops.  ``rule="polygon"`` integrates along the straight chords.
    """
    values = np.asarray(values, dtype=float)
    if rule == "spectral":
        n = len(loop)
        return float(np.sum(values * loop.parameter_derivative()) * (2 * np.pi / n))
    if rule == "polygon":
        p = loop.points
        chords = np.roll(p, -1, axis=0) - p
        mid = 0.5 * (values + np.roll(values, -1, axis=0))
        return float(np.sum(mid * chords))
    raise ParameterError(f"unknown quadrature rule {rule!r}")


def line_integral(grid, v, loop, method="cubic", rule="spectral"):
    """Circulation of the vector field ``v`` around ``loop``."""
    if loop.points.shape[1] != grid.ndim:
        raise DimensionalityError("loop dimension does not match grid")
    if not grid.contains(loop.points):
        raise GeometryError("loop leaves the primary box")
    vals = interpolate(grid, v, loop.points, method=method)
    return loop_integral_of_samples(vals, loop, rule=rule)
