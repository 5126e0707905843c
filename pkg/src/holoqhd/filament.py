"""Closed vortex filaments and their coupled dynamics.

A filament is an ordered ring of nodes ``R_i`` with parameter
``sigma_i = i/N`` on the unit interval, so tangents ``dR/dsigma`` have the
size of the curve length.
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from holoqhd import fields
from holoqhd.errors import DimensionalityError, GeometryError, NumericalAbort, ProximityError


@dataclass
class FilamentCurve:
    nodes: np.ndarray
    strength: float = 1.0
    kappa: float = 0.0
    closed: bool = True

    def __post_init__(self):
        self.nodes = np.array(self.nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise GeometryError("filament nodes must be an (N, 3) array")
        if self.nodes.shape[0] < 16:
            raise GeometryError("a filament needs at least 16 nodes")
        gaps = self.spacings()
        mean = gaps.mean()
        if gaps.min() < 0.25 * mean or gaps.max() > 4.0 * mean:
            raise GeometryError("node spacing outside [0.25, 4] x mean; resample the curve")

    def __len__(self):
        return self.nodes.shape[0]

    @classmethod
    def ring(cls, radius, center=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0), n=64, strength=1.0,
             kappa=0.0, phase=0.0):
        from holoqhd.fields import orthonormal_frame
        e1, e2 = orthonormal_frame(normal)
        t = 2 * np.pi * np.arange(n) / n + phase
        pts = np.asarray(center, dtype=float) + radius * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2)
        return cls(pts, strength, kappa)

    def with_nodes(self, nodes):
        return replace(self, nodes=nodes)

    def spacings(self):
        return np.linalg.norm(np.roll(self.nodes, -1, axis=0) - self.nodes, axis=1)

    def mean_spacing(self):
        return float(self.spacings().mean())

    def length(self):
        return float(self.spacings().sum())

    def segments(self):
        """Segment midpoints and vectors, node ``i`` to node ``i+1``."""
        nxt = np.roll(self.nodes, -1, axis=0)
        return np.ascontiguousarray(0.5 * (self.nodes + nxt)), np.ascontiguousarray(nxt - self.nodes)


def tangent(fil):
    """Centered periodic difference ``dR/dsigma`` at every node."""
    n = len(fil)
    return (np.roll(fil.nodes, -1, axis=0) - np.roll(fil.nodes, 1, axis=0)) * (n / 2.0)


def _spline(nodes):
    closed = np.vstack([nodes, nodes[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return CubicSpline(s, closed, bc_type="periodic"), s


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _arc_from(spline, lo, hi):
    """Arc length of the spline between parameters ``lo`` and ``hi`` (same piece), vectorized."""
    half = 0.5 * (hi - lo)
    t = lo[:, None] + half[:, None] * (_GL_X[None, :] + 1.0)
    speed = np.linalg.norm(spline(t.ravel(), 1), axis=1).reshape(t.shape)
    return half * (speed @ _GL_W)


def resample(fil, target_spacing, min_separation=None):
    """Resample by arc length on a periodic cubic spline through the nodes.

    The node count is ``round(length / target_spacing)`` (at least 16) and the
    first node is kept, so uniformly spaced input is reproduced.  A curve
    whose non-adjacent parts approach closer than ``min_separation`` raises
    :class:`GeometryError`.
    """
    if target_spacing <= 0:
        raise GeometryError("target spacing must be positive")
    spline, knots = _spline(fil.nodes)
    pieces = _arc_from(spline, knots[:-1], knots[1:])
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    length = cum[-1]
    n = max(16, int(round(length / target_spacing)))
    want = np.arange(n) * (length / n)
    k = np.clip(np.searchsorted(cum, want, side="right") - 1, 0, len(pieces) - 1)
    lo = knots[k]
    frac = (want - cum[k]) / pieces[k]
    t = lo + frac * (knots[k + 1] - lo)
    for _ in range(8):
        err = cum[k] + _arc_from(spline, lo, t) - want
        t = t - err / np.linalg.norm(spline(t, 1), axis=1)
        if np.max(np.abs(err)) < 1e-14 * length:
            break
    out = fil.with_nodes(spline(t))
    if min_separation is not None:
        check_self_approach(out, min_separation)
    return out


def check_self_approach(fil, min_separation, skip=None):
    """Raise when two nodes that are not neighbours along the curve come closer than ``min_separation``."""
    n = len(fil)
    if skip is None:
        skip = max(2, int(np.ceil(2 * min_separation / fil.mean_spacing())) + 1)
    tree = cKDTree(fil.nodes)
    for i, j in tree.query_pairs(min_separation):
        gap = min(abs(i - j), n - abs(i - j))
        if gap > skip:
            raise GeometryError(f"filament self-approach below {min_separation} between nodes {i} and {j}")


def dense_points(fil, per_node=32):
    """Points densely sampled on the periodic cubic spline through the nodes."""
    spline, knots = _spline(fil.nodes)
    t = np.linspace(0.0, knots[-1], per_node * len(fil), endpoint=False)
    return spline(t)


def _to_polyline(points, poly):
    """Distance from each point to the closed polyline ``poly`` (nearest vertex and its two edges)."""
    _, j = cKDTree(poly).query(points)
    n = len(poly)
    best = np.linalg.norm(points - poly[j], axis=1)
    for step in (-1, 1):
        a = poly[j]
        d = poly[(j + step) % n] - a
        t = np.clip(np.sum((points - a) * d, axis=1) / np.sum(d * d, axis=1), 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(points - a - t[:, None] * d, axis=1))
    return best


def hausdorff(fil_a, fil_b, per_node=32):
    """Hausdorff distance between the spline curves through two node sets."""
    pa = dense_points(fil_a, per_node)
    pb = dense_points(fil_b, per_node)
    return float(max(_to_polyline(pa, pb).max(), _to_polyline(pb, pa).max()))


# ---------------------------------------------------------------------------
# dynamics


def _node_density_check(d_nodes, d_max, threshold):
    if np.any(d_nodes < threshold * d_max):
        raise ProximityError("filament node sits on a wavefunction node")


def _lambda_at_nodes(fil, gf, params, lam_source, reg, method):
    if lam_source == "grid":
        return fields.interpolate(gf.grid, gf.lam, fil.nodes, method=method)
    from holoqhd.gauge import lambda_at_points
    return lambda_at_points(fil, fil.nodes, params.mass, params.hbar, reg)


def _current_velocity(grid, psi, lam_nodes, a_nodes, fil, hbar, method, threshold):
    from holoqhd.madelung import _current, density
    if grid.ndim != 3:
        raise DimensionalityError("filament dynamics need a 3-axis grid")
    d = density(psi, grid)
    d_nodes = fields.interpolate(grid, d, fil.nodes, method=method)
    _node_density_check(d_nodes, d.max(), threshold)
    j_nodes = fields.interpolate(grid, _current(grid, psi), fil.nodes, method=method)
    shift = lam_nodes if a_nodes is None else lam_nodes + a_nodes / hbar
    return hbar * (j_nodes - d_nodes[:, None] * shift) + fil.kappa * tangent(fil)


def filament_velocity_schrodinger(psi, gf, fil, params, lam_source="direct", reg=0.1,
                                  method="fourier", threshold=1e-10):
    """Node velocities ``hbar (Im(psi* grad psi) - |psi|^2 Lambda) + kappa R_sigma``.

    The current and density are interpolated from the grid.  ``lam_source``
    selects how Lambda is evaluated at the nodes: ``"direct"`` sums the
    regularized Biot-Savart kernel of ``fil`` itself with width ``reg``
    (the filament's own potential), ``"grid"`` interpolates ``gf.lam``.
    """
    lam = _lambda_at_nodes(fil, gf, params, lam_source, reg, method)
    return _current_velocity(gf.grid, psi, lam, None, fil, params.hbar, method, threshold)


def filament_velocity_pauli(psi, gf, fil, params, lam_source="direct", reg=0.1,
                            method="fourier", threshold=1e-10):
    """Spinor analogue: ``hbar (Im(Psi^dag grad Psi) - |Psi|^2 (Lambda + A/hbar)) + kappa R_sigma``."""
    lam = _lambda_at_nodes(fil, gf, params, lam_source, reg, method)
    a_nodes = None
    if gf.external_a is not None:
        a_nodes = fields.interpolate(gf.grid, gf.external_a, fil.nodes, method=method)
    return _current_velocity(gf.grid, psi, lam, a_nodes, fil, params.hbar, method, threshold)


def gaussian_density(points, center, sigma0):
    """Normalized isotropic Gaussian of width ``sigma0`` in three dimensions."""
    r2 = np.sum((np.atleast_2d(points) - np.asarray(center, dtype=float)) ** 2, axis=1)
    return (2 * np.pi * sigma0**2) ** -1.5 * np.exp(-r2 / (2 * sigma0**2))


def filament_velocity_bo(q, qdot, sigma0, fil, mass):
    """``M D0(R - q) qdot + kappa R_sigma`` with ``D0`` the frozen nuclear Gaussian."""
    w = gaussian_density(fil.nodes, q, sigma0)
    return mass * w[:, None] * np.asarray(qdot, dtype=float)[None, :] + fil.kappa * tangent(fil)


@dataclass
class CoupledSystem:
    """Wavefunction (scalar or spinor) co-evolving with a vortex filament.

    ``params`` supplies the grid, constants, potential and any external
    vector potential (through ``params.gauge.external_a``).  The internal
    potential is rebuilt from the filament at every Runge-Kutta stage.
    """

    psi: np.ndarray
    filament: FilamentCurve
    params: object
    reg: float = 0.1
    method: str = "fourier"
    min_separation: Optional[float] = None
    t: float = 0.0
    boundary: str = "periodic"

    def gauge_for(self, fil):
        from holoqhd.gauge import biot_savart_lambda
        p = self.params
        gf = biot_savart_lambda(fil, p.grid, p.mass, p.hbar, self.reg, boundary=self.boundary)
        if p.gauge is not None and p.gauge.external_a is not None:
            gf.external_a = p.gauge.external_a
        return gf

    def rates(self, psi, nodes):
        from holoqhd.hamiltonian import components
        from holoqhd.propagator import rhs
        fil = self.filament.with_nodes(nodes)
        gf = self.gauge_for(fil)
        p = self.params.with_gauge(gf)
        vel = filament_velocity_pauli if components(p.grid, psi) == 2 else filament_velocity_schrodinger
        return rhs(psi, p), vel(psi, gf, fil, p, reg=self.reg, method=self.method)


def step_coupled(system, dt=None):
    """One RK4 step of the joint (wavefunction, filament) state; returns a new system."""
    from holoqhd.propagator import rk4
    dt = system.params.dt if dt is None else dt
    psi, nodes = rk4(lambda y: system.rates(*y), (system.psi, system.filament.nodes), dt)
    t = system.t + dt
    if not (np.all(np.isfinite(psi)) and np.all(np.isfinite(nodes))):
        raise NumericalAbort(f"non-finite values in the coupled state at t={t:.6g}")
    fil = system.filament.with_nodes(nodes)
    check_self_approach(fil, system.reg if system.min_separation is None else system.min_separation)
    return replace(system, psi=psi, filament=fil, t=t)
