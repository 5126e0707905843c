"""Method-of-lines time integration of the Schrodinger and Pauli equations
with an internal gauge potential.

Space is discretized spectrally on a periodic grid and time with classical
fourth-order Runge-Kutta.  Norm is never renormalized unless asked for.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from holoqhd import fields
from holoqhd.errors import ComponentCountError, NumericalAbort, ParameterError, ProximityError
from holoqhd.gauge import GaugeField
from holoqhd.hamiltonian import Hamiltonian, components


@dataclass
class PropagatorParams:
    grid: fields.Grid
    hbar: float = 1.0
    mass: float = 1.0
    potential: Optional[np.ndarray] = None
    gauge: Optional[GaugeField] = None
    magnetic_b: Optional[np.ndarray] = None
    dt: float = 1e-3
    t_end: float = 1.0
    output_stride: int = 1
    stability_c: float = 0.5
    renormalize: bool = False
    # analytic grad V for potentials that are not smooth on the torus (diagnostics only)
    potential_gradient: Optional[np.ndarray] = None
    _ham: Optional[Hamiltonian] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        if self.t_end < 0:
            raise ParameterError("t_end must be non-negative")
        if self.output_stride < 1:
            raise ParameterError("output_stride must be at least 1")
        if self.hbar <= 0 or self.mass <= 0:
            raise ParameterError("hbar and mass must be positive")
        if self.dt > self.stability_bound() * (1 + 1e-12):
            raise ParameterError(
                f"dt={self.dt} exceeds the stability bound {self.stability_bound():.3e}")
        if self.magnetic_b is not None:
            check_magnetic_consistency(self.grid, self.gauge, self.magnetic_b)

    def stability_bound(self):
        """``C * m / (hbar * sum_i 1/dx_i^2)``; reduces to ``C dx^2 m / hbar`` on one axis."""
        return self.stability_c * self.mass / (self.hbar * float(np.sum(1.0 / self.grid.spacing**2)))

    @property
    def hamiltonian(self):
        if self._ham is None:
            self._ham = Hamiltonian(self.grid, self.hbar, self.mass, self.gauge, self.potential,
                                    self.magnetic_b)
        return self._ham

    def with_gauge(self, gauge):
        """Copy sharing everything but the gauge field (Hamiltonian rebuilt lazily)."""
        p = object.__new__(PropagatorParams)
        p.__dict__.update(self.__dict__)
        p.gauge = gauge
        p._ham = None
        return p

    @property
    def steps(self):
        return int(round(self.t_end / self.dt))


def _curl_of_potential(grid, a):
    """Components of curl(A) that a potential on ``grid`` can produce (3-vector field)."""
    out = np.zeros((3,) + grid.dims)
    if grid.ndim == 3:
        return fields.curl(grid, a)
    if grid.ndim == 2:
        out[2] = fields.partial(grid, a[1], 0) - fields.partial(grid, a[0], 1)
    return out


def check_magnetic_consistency(grid, gauge, b, tol=1e-8):
    """Fluctuating part of B must equal curl(A); a uniform background needs no potential."""
    b = np.asarray(b, dtype=float)
    if b.shape == (3,):
        b = np.broadcast_to(b.reshape((3,) + (1,) * grid.ndim), (3,) + grid.dims)
    if b.shape != (3,) + grid.dims:
        raise ParameterError("magnetic_b must be a 3-vector or a 3-component grid field")
    fluct = b - b.reshape(3, -1).mean(axis=1).reshape((3,) + (1,) * grid.ndim)
    a = None if gauge is None else gauge.external_a
    target = np.zeros_like(fluct) if a is None else _curl_of_potential(grid, a)
    err = float(np.max(np.abs(fluct - target)))
    if err > tol * max(1.0, float(np.max(np.abs(b)))):
        raise ParameterError(f"magnetic_b is inconsistent with curl(external_a) (max error {err:.2e})")


def rhs_schrodinger(psi, p):
    if components(p.grid, psi) != 1:
        raise ComponentCountError("rhs_schrodinger needs a scalar wavefunction")
    return (-1j / p.hbar) * p.hamiltonian.apply(psi)


def rhs_pauli(psi, p):
    if components(p.grid, psi) != 2:
        raise ComponentCountError("rhs_pauli needs a two-component spinor")
    return (-1j / p.hbar) * p.hamiltonian.apply(psi)


def rhs(psi, p):
    return rhs_pauli(psi, p) if components(p.grid, psi) == 2 else rhs_schrodinger(psi, p)


def rk4(f, y, dt):
    """One classical RK4 step for ``dy/dt = f(y)``; ``y`` may be an array or a tuple of arrays."""
    if isinstance(y, tuple):
        def axpy(a, x, z):
            return tuple(xi + a * zi for xi, zi in zip(x, z))
        k1 = f(y)
        k2 = f(axpy(0.5 * dt, y, k1))
        k3 = f(axpy(0.5 * dt, y, k2))
        k4 = f(axpy(dt, y, k3))
        return tuple(yi + (dt / 6.0) * (a + 2 * b + 2 * c + d)
                     for yi, a, b, c, d in zip(y, k1, k2, k3, k4))
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def norm(grid, psi):
    return float(np.sum(np.abs(psi) ** 2) * grid.cell_volume)


def normalize(grid, psi):
    return psi / np.sqrt(norm(grid, psi))


def check_finite(psi, t):
    if not np.all(np.isfinite(psi)):
        raise NumericalAbort(f"non-finite values in the state at t={t:.6g}")


def step(psi, p):
    out = rk4(lambda y: rhs(y, p), psi, p.dt)
    if p.renormalize:
        out = normalize(p.grid, out) * np.sqrt(norm(p.grid, psi))
    return out


def run(psi0, p):
    """Yield ``(step_index, time, state)`` at t=0 and every ``output_stride`` steps."""
    psi = np.array(psi0, dtype=complex)
    components(p.grid, psi)
    yield 0, 0.0, psi
    for n in range(1, p.steps + 1):
        psi = step(psi, p)
        t = n * p.dt
        check_finite(psi, t)
        if n % p.output_stride == 0 or n == p.steps:
            yield n, t, psi


def appendix_a_identity(psi, gf, hbar=1.0, mass=1.0, region=None, threshold=1e-10):
    """Relative L2 mismatch between the hydrodynamic assembly of the kinetic
    term and its direct operator form, over ``region`` (default: whole grid).

    Hydrodynamic side: ``[-(i hbar/m) (grad R/R).nubar - (i hbar/2m) div nubar
    + |nubar|^2/2m + V_Q] psi``; operator side: ``-(hbar^2/2m) lap psi +
    (i hbar^2/m) Lambda.grad psi + (hbar^2/2m)|Lambda|^2 psi``.
    """
    g = gf.grid
    if components(g, psi) != 1:
        raise ComponentCountError("the reconstruction identity is for scalar states")
    d = np.abs(psi) ** 2
    if region is None:
        region = np.ones(g.dims, dtype=bool)
    if np.any(d[region] < threshold * d.max()):
        raise ProximityError("evaluation region contains wavefunction nodes")
    grad = fields.gradient(g, psi)
    quot = grad * np.conj(psi) / d
    grad_r_over_r = quot.real
    nubar = hbar * quot.imag - hbar * gf.lam
    sqrt_d = np.sqrt(d)
    vq = -(hbar**2 / (2 * mass)) * fields.laplacian(g, sqrt_d) / sqrt_d
    hydro = (-(1j * hbar / mass) * np.sum(grad_r_over_r * nubar, axis=0)
             - (0.5j * hbar / mass) * fields.divergence(g, nubar)
             + np.sum(nubar**2, axis=0) / (2 * mass) + vq) * psi
    lam = gf.lam
    direct = (-(hbar**2 / (2 * mass)) * fields.laplacian(g, psi)
              + (1j * hbar**2 / mass) * np.sum(lam * grad, axis=0)
              + (hbar**2 / (2 * mass)) * np.sum(lam * lam, axis=0) * psi)
    num = np.linalg.norm((hydro - direct)[region])
    den = np.linalg.norm(direct[region])
    return float(num / den) if den > 0 else float(num)
