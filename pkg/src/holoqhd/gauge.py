"""Internal gauge potential: Biot-Savart construction, Coulomb projection,
Helmholtz decomposition, curvature and Stokes-flux holonomy."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from holoqhd import fields, kernels
from holoqhd.errors import DimensionalityError, ParameterError, ProximityError, TopologyError
from holoqhd.fields import Grid


@dataclass
class GaugeField:
    """Internal potential ``lam`` (1/length) and optional external potential ``external_a`` (momentum)."""

    grid: Grid
    lam: np.ndarray
    external_a: Optional[np.ndarray] = None

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if self.lam.shape != (self.grid.ndim,) + self.grid.dims:
            raise DimensionalityError(f"lambda shape {self.lam.shape} does not match grid")
        if self.external_a is not None:
            self.external_a = np.asarray(self.external_a, dtype=float)
            if self.external_a.shape != self.lam.shape:
                raise DimensionalityError("external_a shape does not match grid")

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros((grid.ndim,) + grid.dims))

    @classmethod
    def constant(cls, grid, vec, external_a=None):
        vec = np.asarray(vec, dtype=float).reshape((grid.ndim,) + (1,) * grid.ndim)
        return cls(grid, np.broadcast_to(vec, (grid.ndim,) + grid.dims).copy(), external_a)

    def connection(self, hbar):
        """Total U(1) connection hbar*lam + A."""
        c = hbar * self.lam
        return c if self.external_a is None else c + self.external_a

    def divergence_error(self):
        return float(np.max(np.abs(fields.divergence(self.grid, self.lam))))


@dataclass
class HelmholtzParts:
    """``nubar = grad(s_potential) + hbar*curl(beta) + mean``.

    On a periodic box a spatially uniform field is neither a gradient nor a
    curl, so it is carried separately as ``mean``.
    """

    s_potential: np.ndarray
    beta: np.ndarray
    mean: np.ndarray

    def reconstruct(self, grid, hbar):
        m = self.mean.reshape((3,) + (1,) * grid.ndim)
        return fields.gradient(grid, self.s_potential) + hbar * fields.curl(grid, self.beta) + m


def coulomb_project(grid, v):
    """Remove the longitudinal part of ``v`` so its spectral divergence vanishes."""
    axes = grid.axes
    vh = np.stack([fields.fftn(v[a], axes) for a in range(grid.ndim)])
    ks = grid.wavenumbers
    kd2 = sum(k**2 for k in ks)
    safe = np.where(kd2 == 0, 1.0, kd2)
    kdotv = sum(k * vh[a] for a, k in enumerate(ks)) / safe
    out = np.stack([vh[a] - ks[a] * kdotv for a in range(grid.ndim)])
    return np.stack([fields.ifftn(out[a], axes).real for a in range(grid.ndim)])


def _require_closed(fil):
    if not fil.closed:
        raise TopologyError("filament must be a closed curve")


def lambda_at_points(fil, points, m=1.0, hbar=1.0, reg=0.1):
    """Direct regularized Biot-Savart quadrature of the internal potential at arbitrary points."""
    _require_closed(fil)
    if reg <= 0:
        raise ParameterError("reg must be positive")
    mids, seg = fil.segments()
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    return (m / hbar) * fil.strength * kernels.biot_savart(pts, mids, seg, float(reg))


def curvature_at_points(fil, points, m=1.0, hbar=1.0, reg=0.1):
    """Analytic curl of the regularized potential at arbitrary points."""
    _require_closed(fil)
    mids, seg = fil.segments()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = pts[:, None, :] - mids[None, :, :]
    rn = np.sqrt(np.sum(r * r, axis=-1))
    s2a = np.sqrt(2.0) * reg
    u = rn / s2a
    sp = 1.0 / np.sqrt(np.pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(u < 1e-2, 2 * sp * u**3 * (2 / 3 - 0.4 * u**2 + u**4 / 7),
                     _erf(u) - 2 * sp * u * np.exp(-u * u))
        dh = np.where(u < 1e-2, sp * u**5 * (-1.6 + 8.0 / 7.0 * u**2),
                      4 * sp * u**3 * np.exp(-u * u) - 3 * h)
        # f = G'/r and r f' expressed through u to stay finite at r = 0
        f = np.where(u < 1e-2, 2 * sp * (2 / 3 - 0.4 * u**2 + u**4 / 7) / s2a**3, h / rn**3) / (4 * np.pi)
        rfp = np.where(u < 1e-2, sp * u**2 * (-1.6 + 8.0 / 7.0 * u**2) / s2a**3, dh / rn**3) / (4 * np.pi)
        rhat_dot = np.where(rn > 0, np.einsum("pjk,jk->pj", r, seg) / np.where(rn > 0, rn, 1.0) ** 2, 0.0)
    out = (rfp * rhat_dot)[..., None] * r - (2 * f + rfp)[..., None] * seg[None, :, :]
    return (m / hbar) * fil.strength * out.sum(axis=1)


def _erf(x):
    from scipy.special import erf
    return erf(x)


def _vorticity_hat(fil, g, width, exact=False):
    """Fourier coefficients (numpy FFT convention) of the Gaussian-mollified filament vorticity.

    Each segment contributes its straight-line measure.  With ``exact`` the
    segment transform carries the factor ``sinc(k . seg / 2)`` so that
    ``k . omega_hat`` telescopes to zero around the closed curve; otherwise
    segments are lumped at their midpoints (separable and much cheaper).
    Nyquist planes are dropped so the field stays real.
    """
    mids, seg = fil.segments()
    ks = [np.fft.fftfreq(n, d=h) * 2 * np.pi for n, h in zip(g.dims, g.spacing)]
    for k, n in zip(ks, g.dims):
        k[n // 2] = 0.0
    kx, ky, kz = np.meshgrid(*ks, indexing="ij", sparse=True)
    k2 = kx**2 + ky**2 + kz**2
    damp = np.exp(-0.5 * width**2 * k2) * (np.prod(g.dims) / g.volume)
    for a, n in enumerate(g.dims):
        idx = [slice(None)] * 3
        idx[a] = n // 2
        damp[tuple(idx)] = 0.0
    rel = mids - g.origin
    if exact:
        wh = np.zeros((3,) + g.dims, dtype=complex)
        for mp, sv in zip(rel, seg):
            f = (np.exp(-1j * kx * mp[0]) * np.exp(-1j * ky * mp[1]) * np.exp(-1j * kz * mp[2])
                 * np.sinc((kx * sv[0] + ky * sv[1] + kz * sv[2]) / (2 * np.pi)))
            for a in range(3):
                wh[a] += sv[a] * f
    else:
        shift = [np.exp(-1j * np.outer(rel[:, a], ks[a])) for a in range(3)]
        nx, ny, _ = g.dims
        pxy = (shift[0][:, :, None] * shift[1][:, None, :]).reshape(len(mids), nx * ny)
        wh = np.stack([((pxy * seg[:, a:a + 1]).T @ shift[2]).reshape(g.dims) for a in range(3)])
    return wh * damp, (kx, ky, kz), k2


def _periodic_lambda(fil, g, width):
    """Spectral Coulomb-gauge potential of the filament's Gaussian-mollified periodic vorticity.

    ``curl`` of the result returns minus the transverse part of the mollified
    vorticity (whose mean vanishes for closed curves).
    """
    wh, (kx, ky, kz), k2 = _vorticity_hat(fil, g, width)
    safe = np.where(k2 == 0, 1.0, k2)
    lam_h = -1j * np.stack([ky * wh[2] - kz * wh[1], kz * wh[0] - kx * wh[2], kx * wh[1] - ky * wh[0]]) / safe
    return np.stack([np.fft.ifftn(c).real for c in lam_h])


def biot_savart_lambda(fil, g, m=1.0, hbar=1.0, reg=0.1, project=True, resolution_floor=2.0,
                       boundary="free"):
    """Internal potential sourced by a closed vortex filament, sampled on ``g``.

    ``boundary="free"``: the regularized kernel is the Newton potential
    smoothed by a Gaussian of width ``reg``; node values come from direct
    quadrature over filament segments and are then projected onto the
    divergence-free subspace.  This is the free-space field, which is not
    periodic across the box faces.

    ``boundary="periodic"``: the Coulomb-gauge potential of the periodically
    repeated, Gaussian-mollified filament, built spectrally.  It is smooth
    on the torus and is what time evolution on the periodic grid needs.

    A core narrower than ``resolution_floor`` grid spacings cannot be
    represented by grid samples: its aliased divergence would be spread over
    the whole box by the projection.  Grid sampling therefore uses
    ``max(reg, resolution_floor * spacing)``; the two kernels agree to
    ``erfc(d / (sqrt(2) * width))`` at distance ``d`` from the core.
    Point evaluations (:func:`lambda_at_points`) always use ``reg``.
    """
    _require_closed(fil)
    if reg <= 0:
        raise ParameterError("reg must be positive")
    if g.ndim != 3:
        raise DimensionalityError("filament potentials need a 3-axis grid")
    if not g.contains(fil.nodes, margin=0.1 * max(g.extents)):
        raise ParameterError("filament must keep a margin of 10% of the box extent")
    width = max(reg, resolution_floor * float(np.max(g.spacing)))
    if boundary == "periodic":
        return GaugeField(g, (m / hbar) * fil.strength * _periodic_lambda(fil, g, width))
    if boundary != "free":
        raise ParameterError(f"unknown boundary {boundary!r}")
    pts = g.mesh().reshape(3, -1).T
    lam = lambda_at_points(fil, pts, m, hbar, width).T.reshape((3,) + g.dims)
    if project:
        lam = coulomb_project(g, lam)
    return GaugeField(g, lam)


def filament_vorticity(fil, g, moll):
    """Gaussian-mollified vorticity of the periodically repeated filament sampled on ``g``.

    Built from exact Fourier transforms of the polygon segments, so it is
    solenoidal and has zero mean to rounding.
    """
    _require_closed(fil)
    if g.ndim != 3:
        raise DimensionalityError("filament vorticity needs a 3-axis grid")
    if moll < 2 * np.max(g.spacing) - 1e-12:
        raise ParameterError("mollifier width must be at least two grid spacings")
    wh, _, _ = _vorticity_hat(fil, g, moll, exact=True)
    return fil.strength * np.stack([np.fft.ifftn(c).real for c in wh])


def helmholtz_decompose(g, nubar, hbar=1.0):
    if g.ndim != 3:
        raise DimensionalityError("Helmholtz decomposition needs a 3-axis grid")
    nubar = np.asarray(nubar, dtype=float)
    mean = nubar.reshape(3, -1).mean(axis=1)
    s = fields.inverse_laplacian(g, fields.divergence(g, nubar))
    beta = -fields.inverse_laplacian(g, fields.curl(g, nubar)) / hbar
    return HelmholtzParts(s, beta, mean)


def curvature(gf):
    return fields.curl(gf.grid, gf.lam)


def _min_distance(points, fil):
    a = fil.nodes
    b = np.roll(a, -1, axis=0)
    d = b - a
    rel = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("pjk,jk->pj", rel, d) / np.sum(d * d, axis=1), 0.0, 1.0)
    closest = a[None] + t[..., None] * d[None]
    return float(np.min(np.linalg.norm(points[:, None, :] - closest, axis=-1)))


def stokes_holonomy(fil, c, hbar=1.0, m=1.0, reg=None, grid=None, method="fourier"):
    """Return ``-hbar * (loop integral of lambda)`` around loop ``c``.

    Without ``grid`` the potential is evaluated at the loop points by direct
    quadrature; with ``grid`` it is built on the grid and interpolated.
    """
    _require_closed(fil)
    if reg is None:
        reg = fil.mean_spacing()
    if _min_distance(c.points, fil) <= reg:
        raise ProximityError("loop passes within the regularization width of the filament")
    if grid is None:
        vals = lambda_at_points(fil, c.points, m, hbar, reg)
        return -hbar * fields.loop_integral_of_samples(vals, c)
    gf = biot_savart_lambda(fil, grid, m, hbar, reg)
    return -hbar * fields.line_integral(grid, gf.lam, c, method=method)


def linking_number(curve_a, curve_b, view=(0.3141592653, 0.2718281828, 0.9)):
    """Linking number of two closed polygons counted from signed crossings in a planar projection."""
    a = np.asarray(curve_a, dtype=float)
    b = np.asarray(curve_b, dtype=float)
    d = np.asarray(view, dtype=float)
    d = d / np.linalg.norm(d)
    e1, e2 = fields.orthonormal_frame(d)

    def proj(p):
        return np.stack([p @ e1, p @ e2], axis=-1), p @ d

    a2, ha = proj(a)
    b2, hb = proj(b)
    ta = np.roll(a, -1, axis=0) - a
    tb = np.roll(b, -1, axis=0) - b
    pa, pb = a2, b2
    ra = np.roll(a2, -1, axis=0) - a2
    rb = np.roll(b2, -1, axis=0) - b2
    # solve pa_i + s ra_i = pb_j + u rb_j for every segment pair
    den = ra[:, None, 0] * rb[None, :, 1] - ra[:, None, 1] * rb[None, :, 0]
    diff = pb[None, :, :] - pa[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (diff[..., 0] * rb[None, :, 1] - diff[..., 1] * rb[None, :, 0]) / den
        u = (diff[..., 0] * ra[:, None, 1] - diff[..., 1] * ra[:, None, 0]) / den
    hit = (den != 0) & (s >= 0) & (s < 1) & (u >= 0) & (u < 1)
    total = 0.0
    for i, j in zip(*np.nonzero(hit)):
        za = ha[i] + s[i, j] * (ha[(i + 1) % len(a)] - ha[i])
        zb = hb[j] + u[i, j] * (hb[(j + 1) % len(b)] - hb[j])
        over, under = (ta[i], tb[j]) if za > zb else (tb[j], ta[i])
        sign = np.sign(np.dot(np.cross(over, under), d))
        total += sign
    return int(round(total / 2))
