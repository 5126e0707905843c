"""Two-level Born-Oppenheimer surfaces, Gaussian smoothing by a frozen nuclear
density and classical nuclear trajectories with geometric magnetic forces.

The electronic Hamiltonian is ``a(r) + b(r).sigma``.  The adiabatic state is
the lower eigenvector, taken in the gauge whose first component is real and
non-negative (second component where the first vanishes).
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from holoqhd import fields
from holoqhd.errors import DimensionalityError, DomainExitError, ParameterError


def _finite_jacobian(fn, pts, h=1e-4):
    """Fourth-order central differences of a vector-valued callable, shape (n, 3, d)."""
    n, d = pts.shape
    out = np.empty((n, 3, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        out[:, :, i] = (8 * (fn(pts + e) - fn(pts - e)) - (fn(pts + 2 * e) - fn(pts - 2 * e))) / (12 * h)
    return out


@dataclass
class ElectronicModel:
    """``a`` maps points (n, d) to (n,); ``b`` maps points to (n, 3).

    ``b_jacobian`` (optional) returns ``d b_k / d r_i`` as (n, 3, d); without
    it a fourth-order finite difference of ``b`` is used.
    """

    a: Callable
    b: Callable
    b_jacobian: Optional[Callable] = None
    neglect_second_order_coupling: bool = False
    real_eigenstate: bool = False
    neglect_quantum_potential: bool = False
    gap_threshold: float = 1e-8

    def jacobian(self, pts):
        if self.b_jacobian is not None:
            return np.asarray(self.b_jacobian(pts), dtype=float)
        return _finite_jacobian(self.b, pts)

    @classmethod
    def spin_boson(cls, mass, omega, coupling, tunnel, **flags):
        """``a = M w^2 r^2 / 2`` and ``b = (tunnel, 0, coupling . r) / 2``."""
        c = np.asarray(coupling, dtype=float)

        def a(p):
            return 0.5 * mass * omega**2 * np.sum(p * p, axis=1)

        def b(p):
            return 0.5 * np.stack([np.full(len(p), float(tunnel)), np.zeros(len(p)), p @ c], axis=1)

        def jac(p):
            j = np.zeros((len(p), 3, c.size))
            j[:, 2, :] = 0.5 * c
            return j

        return cls(a, b, jac, **flags)

    @classmethod
    def cone(cls, slope=1.0, offset=0.0, mass=1.0, omega=0.0, **flags):
        """Conical intersection in the plane: ``b = (slope x, 0, slope y + offset)``.

        The two surfaces are ``a -+ |b|``; with ``offset = 0`` they touch at
        the origin with a cone of the given slope.  Only the first two
        coordinates enter ``b``.
        """
        def a(p):
            return 0.5 * mass * omega**2 * np.sum(p * p, axis=1)

        def b(p):
            return np.stack([slope * p[:, 0], np.zeros(len(p)), slope * p[:, 1] + offset], axis=1)

        def jac(p):
            j = np.zeros((len(p), 3, p.shape[1]))
            j[:, 0, 0] = slope
            j[:, 2, 1] = slope
            return j

        return cls(a, b, jac, **flags)

    @classmethod
    def hedgehog(cls, height=1.0, **flags):
        """``b = (x, y, height)``: a complex eigenvector field whose Bloch vector traces cones around z."""
        def a(p):
            return np.zeros(len(p))

        def b(p):
            return np.stack([p[:, 0], p[:, 1], np.full(len(p), float(height))], axis=1)

        def jac(p):
            j = np.zeros((len(p), 3, p.shape[1]))
            j[:, 0, 0] = 1.0
            j[:, 1, 1] = 1.0
            return j

        return cls(a, b, jac, **flags)


@dataclass
class EigenPair:
    e_minus: np.ndarray
    e_plus: np.ndarray
    phi_minus: np.ndarray
    phi_plus: np.ndarray
    degenerate: np.ndarray


def _one_plus_nz(b, bn, sign):
    """``1 + n_z`` for ``n = sign * b/|b|`` without cancellation."""
    sb = sign * b[:, 2]
    perp = b[:, 0] ** 2 + b[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        alt = perp / (bn * (bn - sb))
        out = np.where(sb >= 0, (bn + sb) / bn, alt)
    return np.where(bn > 0, out, 1.0)


def _gauge_fixed(b, bn, sign):
    """Spinor with Bloch vector ``sign * b/|b|``, first component real and non-negative."""
    n = len(b)
    opz = _one_plus_nz(b, bn, sign)
    omz = 2.0 - opz
    safe = np.where(bn > 0, bn, 1.0)
    nxy = sign * (b[:, 0] + 1j * b[:, 1]) / safe
    phi = np.zeros((n, 2), dtype=complex)
    first = np.sqrt(0.5 * opz)
    use_first = first > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        phi[:, 0] = np.where(use_first, first, np.conj(nxy) / np.sqrt(2 * omz))
        phi[:, 1] = np.where(use_first, nxy / np.sqrt(2 * opz), np.sqrt(0.5 * omz))
    return phi


def _points(r):
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    return np.atleast_2d(r), single


def electronic_eigen(model, r):
    """Eigenvalues ``a -+ |b|`` and gauge-fixed eigenvectors at points ``r`` ((n, d) or (d,)).

    Points with ``|b| < gap_threshold * max|b|`` (over the batch) are flagged
    degenerate and get the eigenvectors ``(0, 1)`` and ``(1, 0)``.
    """
    pts, single = _points(r)
    a = np.asarray(model.a(pts), dtype=float)
    b = np.asarray(model.b(pts), dtype=float)
    bn = np.linalg.norm(b, axis=1)
    scale = bn.max() if bn.size else 0.0
    degenerate = bn <= model.gap_threshold * scale
    phi_m = _gauge_fixed(b, bn, -1.0)
    phi_p = _gauge_fixed(b, bn, 1.0)
    phi_m[degenerate] = (0.0, 1.0)
    phi_p[degenerate] = (1.0, 0.0)
    out = EigenPair(a - bn, a + bn, phi_m, phi_p, degenerate)
    if single:
        out = EigenPair(*(x[0] for x in (out.e_minus, out.e_plus, out.phi_minus, out.phi_plus,
                                         out.degenerate)))
    return out


def _geometry(model, pts, hbar):
    """Berry connection of the lower state and ``||grad phi||^2`` at points."""
    b = np.asarray(model.b(pts), dtype=float)
    jac = model.jacobian(pts)  # jac[p, k, i] = d_i b_k
    bn = np.linalg.norm(b, axis=1)
    safe = np.where(bn > 0, bn, 1.0)
    bh = b / safe[:, None]
    # Bloch vector of the lower state is n = -b/|b|
    proj = jac - bh[:, :, None] * np.einsum("pk,pki->pi", bh, jac)[:, None, :]
    dn = -proj / safe[:, None, None]
    n = -bh
    opz = _one_plus_nz(b, bn, -1.0)
    cross = n[:, 0, None] * dn[:, 1, :] - n[:, 1, None] * dn[:, 0, :]
    use_first = np.sqrt(0.5 * opz) > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        berry = np.where(use_first[:, None], cross / (2 * opz[:, None]), -cross / (2 * (2.0 - opz[:, None])))
    berry = hbar * np.where(bn[:, None] > 0, berry, 0.0)
    metric = 0.25 * np.sum(dn * dn, axis=(1, 2)) + np.sum((berry / hbar) ** 2, axis=1)
    return berry, np.where(bn > 0, metric, 0.0)


def berry_connection_points(model, r, hbar=1.0):
    """Berry connection ``<phi| -i hbar grad phi>`` of the gauge-fixed lower state at points."""
    pts, single = _points(r)
    if model.real_eigenstate:
        out = np.zeros_like(pts)
    else:
        out = _geometry(model, pts, hbar)[0]
    return out[0] if single else out


def _grid_points(grid):
    return grid.mesh().reshape(grid.ndim, -1).T


def berry_connection_surface(model, grid, hbar=1.0):
    """Berry connection of the lower state sampled on ``grid`` (one component per axis)."""
    vals = berry_connection_points(model, _grid_points(grid), hbar)
    return vals.T.reshape((grid.ndim,) + grid.dims)


def gradient_norm_sq(model, r, hbar=1.0):
    """``||grad phi||^2 = |grad n|^2 / 4 + |A/hbar|^2`` for the lower eigenvector."""
    pts, single = _points(r)
    out = _geometry(model, pts, hbar)[1]
    return out[0] if single else out


def effective_potential_points(model, r, hbar=1.0, mass=1.0):
    """``E + (hbar^2/2M)||grad phi||^2 - |A|^2/2M`` with terms dropped per the model flags."""
    pts, single = _points(r)
    e = electronic_eigen(model, pts).e_minus
    berry, metric = _geometry(model, pts, hbar)
    if model.real_eigenstate:
        # A real eigenvector has no Berry connection and no phase contribution to the metric
        metric = metric - np.sum((berry / hbar) ** 2, axis=1)
        berry = np.zeros_like(berry)
    out = e.copy()
    if not model.neglect_second_order_coupling:
        out = out + (hbar**2 / (2 * mass)) * metric
    out = out - np.sum(berry**2, axis=1) / (2 * mass)
    return out[0] if single else out


def effective_potential(model, grid, hbar=1.0, mass=1.0):
    return effective_potential_points(model, _grid_points(grid), hbar, mass).reshape(grid.dims)


def smooth(grid, f, sigma0):
    """Periodic convolution with a normalized Gaussian of width ``sigma0`` (spectral)."""
    if sigma0 < 2 * float(np.max(grid.spacing)) - 1e-12:
        raise ParameterError("sigma0 must be at least two grid spacings")
    return fields.spectral_multiply(grid, f, np.exp(-0.5 * sigma0**2 * grid.k_squared))


def _curl_scalar_or_vector(grid, v):
    if grid.ndim == 3:
        return fields.curl(grid, v)
    if grid.ndim == 2:
        return fields.partial(grid, v[1], 0) - fields.partial(grid, v[0], 1)
    raise DimensionalityError("magnetic-type forces need two or three axes")


@dataclass
class SmoothedSurfaces:
    """Surfaces averaged over the frozen nuclear Gaussian, with curls and gradients precomputed."""

    grid: fields.Grid
    sigma0: float
    E_bar: np.ndarray
    A_bar: np.ndarray
    Lambda_bar: np.ndarray
    eps_bar: np.ndarray
    mass: float = 1.0
    hbar: float = 1.0
    gap: Optional[np.ndarray] = None
    method: str = "fourier"
    _derived: dict = field(default_factory=dict, repr=False)

    def _get(self, name):
        if name not in self._derived:
            g = self.grid
            if name == "grad_eps":
                self._derived[name] = fields.gradient(g, self.eps_bar)
            elif name == "curl_lambda":
                self._derived[name] = _curl_scalar_or_vector(g, self.Lambda_bar)
            elif name == "curl_berry":
                self._derived[name] = _curl_scalar_or_vector(g, self.A_bar)
        return self._derived[name]

    def at(self, name, q):
        f = self.eps_bar if name == "eps" else self.gap if name == "gap" else self._get(name)
        return fields.interpolate(self.grid, f, q, method=self.method)

    def has_lambda(self):
        return bool(np.any(self.Lambda_bar != 0))

    def has_berry(self):
        return bool(np.any(self.A_bar != 0))


def build_surfaces(model, grid, sigma0=None, hbar=1.0, mass=1.0, lam=None, method="fourier"):
    """Smoothed energy, Berry connection, internal potential and ``eps_bar = E_bar - |A_bar|^2/2M``.

    ``E_bar`` smooths the lower surface plus, unless neglected, the
    second-order coupling ``(hbar^2/2M)||grad phi||^2``.  ``lam`` is an
    optional internal gauge potential on ``grid``; ``sigma0`` defaults to ten
    grid spacings.
    """
    if sigma0 is None:
        sigma0 = 10 * float(np.max(grid.spacing))
    pts = _grid_points(grid)
    eig = electronic_eigen(model, pts)
    berry, metric = _geometry(model, pts, hbar)
    if model.real_eigenstate:
        metric = metric - np.sum((berry / hbar) ** 2, axis=1)
        berry = np.zeros_like(berry)
    e = eig.e_minus
    if not model.neglect_second_order_coupling:
        e = e + (hbar**2 / (2 * mass)) * metric
    e_bar = smooth(grid, e.reshape(grid.dims), sigma0)
    a_bar = smooth(grid, berry.T.reshape((grid.ndim,) + grid.dims), sigma0)
    lam_bar = np.zeros_like(a_bar) if lam is None else smooth(grid, lam, sigma0)
    eps_bar = e_bar - np.sum(a_bar**2, axis=0) / (2 * mass)
    gap = (eig.e_plus - eig.e_minus).reshape(grid.dims)
    return SmoothedSurfaces(grid, sigma0, e_bar, a_bar, lam_bar, eps_bar, mass, hbar, gap, method)


def conical_points(model, grid):
    """Grid nodes flagged as degenerate (``|b|`` below threshold)."""
    return electronic_eigen(model, _grid_points(grid)).degenerate.reshape(grid.dims)


@dataclass
class NuclearTrajectory:
    q: np.ndarray
    qdot: np.ndarray
    mass: float = 1.0
    t: float = 0.0
    filament: Optional[object] = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)
        if self.q.shape != self.qdot.shape:
            raise ParameterError("q and qdot must have the same shape")


def _cross(v, w):
    """``v x w`` with ``w`` a 3-vector or (in 2D) the scalar out-of-plane component."""
    if np.ndim(w) == 0:
        return np.array([v[1] * w, -v[0] * w])
    return np.cross(v, w)


def filament_lambda_curl(fil, q, sigma0, mass=1.0, hbar=1.0, reg=0.1):
    """Curl of the Gaussian-smoothed filament potential at ``q``.

    Smoothing the regularized kernel of width ``reg`` by the frozen density
    of width ``sigma0`` gives the same kernel with width
    ``sqrt(reg^2 + sigma0^2)``, so the smoothed curvature is evaluated
    directly at the point.
    """
    from holoqhd.gauge import curvature_at_points
    width = float(np.hypot(reg, sigma0))
    return curvature_at_points(fil, np.asarray(q, dtype=float)[None], mass, hbar, width)[0]


def filament_lambda_smoothed(fil, q, sigma0, mass=1.0, hbar=1.0, reg=0.1):
    from holoqhd.gauge import lambda_at_points
    return lambda_at_points(fil, np.atleast_2d(q), mass, hbar, float(np.hypot(reg, sigma0)))


def nuclear_force(surfaces, q, qdot, fil=None, reg=0.1):
    """``hbar qdot x curl(Lambda_bar) - qdot x curl(A_bar) - grad(eps_bar)`` at ``q``."""
    s = surfaces
    force = -s.at("grad_eps", q)
    if s.has_lambda():
        force = force + s.hbar * _cross(qdot, s.at("curl_lambda", q))
    if fil is not None:
        if s.grid.ndim != 3:
            raise DimensionalityError("filament coupling needs a 3-axis grid")
        force = force + s.hbar * np.cross(qdot, filament_lambda_curl(fil, q, s.sigma0, s.mass, s.hbar, reg))
    if s.has_berry():
        force = force - _cross(qdot, s.at("curl_berry", q))
    return force


def _check_domain(surfaces, q, t):
    g = surfaces.grid
    margin = 4 * surfaces.sigma0
    lo = g.origin + margin
    hi = g.origin + g.extents - margin
    if np.any(q < lo) or np.any(q > hi):
        raise DomainExitError(f"nuclear position {q} left the sampled domain at t={t:.6g}")


def trajectory_energy(surfaces, traj):
    kin = 0.5 * traj.mass * float(traj.qdot @ traj.qdot)
    pot = float(surfaces.at("eps", traj.q))
    return kin, pot, kin + pot


def nuclear_step(traj, surfaces, dt, reg=0.1):
    """One RK4 step of the nuclear equation of motion, with the filament (if any) co-evolving."""
    from holoqhd.filament import filament_velocity_bo
    from holoqhd.propagator import rk4
    _check_domain(surfaces, traj.q, traj.t)
    m = traj.mass
    fil0 = traj.filament

    if fil0 is None:
        def f(y):
            q, v = y
            return v, nuclear_force(surfaces, q, v) / m
        q, v = rk4(f, (traj.q, traj.qdot), dt)
        nodes = None
    else:
        def f(y):
            q, v, r = y
            fil = fil0.with_nodes(r)
            return v, nuclear_force(surfaces, q, v, fil, reg) / m, \
                filament_velocity_bo(q, v, surfaces.sigma0, fil, m)
        q, v, nodes = rk4(f, (traj.q, traj.qdot, fil0.nodes), dt)
    t = traj.t + dt
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
        from holoqhd.errors import NumericalAbort
        raise NumericalAbort(f"non-finite nuclear state at t={t:.6g}")
    _check_domain(surfaces, q, t)
    fil = None if nodes is None else fil0.with_nodes(nodes)
    return NuclearTrajectory(q, v, m, t, fil, traj.history)


def smoothed_geometric_phase(grid, lambda_bar, loop, hbar=1.0, method="cubic"):
    """``-hbar`` times the loop integral of the smoothed internal potential."""
    return -hbar * fields.line_integral(grid, lambda_bar, loop, method=method)
