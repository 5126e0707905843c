"""Minimal-coupling Hamiltonian applied with spectral derivatives.

Scalar states have the grid shape; spinors carry a leading axis of length 2.
"""
import numpy as np

from holoqhd import fields
from holoqhd.errors import ComponentCountError


def components(grid, psi):
    if psi.shape == grid.dims:
        return 1
    if psi.shape == (2,) + grid.dims:
        return 2
    raise ComponentCountError(f"state shape {psi.shape} is neither scalar nor spinor on {grid.dims}")


def pauli_dot(b, psi):
    """(b . sigma) psi for a 3-vector field ``b`` (uniform or on the grid)."""
    bx, by, bz = b[0], b[1], b[2]
    return np.stack([bz * psi[0] + (bx - 1j * by) * psi[1],
                     (bx + 1j * by) * psi[0] - bz * psi[1]])


class Hamiltonian:
    """``H = (-i hbar grad - C)^2 / 2m + V - (hbar/2m) B.sigma`` with ``C = hbar*Lambda + A``.

    Static pieces (connection, its divergence and square) are computed once.
    """

    def __init__(self, grid, hbar=1.0, mass=1.0, gauge=None, potential=None, magnetic_b=None):
        self.grid = grid
        self.hbar = float(hbar)
        self.mass = float(mass)
        self.potential = None if potential is None else np.asarray(potential, dtype=float)
        self.magnetic_b = None
        if magnetic_b is not None:
            b = np.asarray(magnetic_b, dtype=float)
            self.magnetic_b = b.reshape((3,) + (1,) * grid.ndim) if b.shape == (3,) else b
        self.conn = None
        if gauge is not None:
            c = gauge.connection(self.hbar)
            if np.any(c != 0):
                self.conn = c
                self.div_conn = fields.divergence(grid, c)
                self.conn_sq = np.sum(c * c, axis=0)

    def kinetic(self, psi):
        g = self.grid
        axes = g.axes
        ph = fields.fftn(psi, axes)
        h2m = self.hbar**2 / (2 * self.mass)
        out = -h2m * fields.ifftn(-g.k_squared * ph, axes)
        if self.conn is not None:
            cdotgrad = 0
            for a, k in enumerate(g.wavenumbers):
                cdotgrad = cdotgrad + self.conn[a] * fields.ifftn(1j * k * ph, axes)
            ih = 1j * self.hbar / self.mass
            out = out + ih * cdotgrad + (0.5 * ih * self.div_conn + self.conn_sq / (2 * self.mass)) * psi
        return out

    def apply(self, psi):
        out = self.kinetic(psi)
        if self.potential is not None:
            out = out + self.potential * psi
        if self.magnetic_b is not None and psi.shape[0] == 2 and psi.ndim == self.grid.ndim + 1:
            out = out - (self.hbar / (2 * self.mass)) * pauli_dot(self.magnetic_b, psi)
        return out

    def energy(self, psi):
        """<psi|H|psi> summed over components (complex; imaginary part is round-off)."""
        return np.sum(np.conj(psi) * self.apply(psi)) * self.grid.cell_volume
