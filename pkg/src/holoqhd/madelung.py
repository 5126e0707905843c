"""Hydrodynamic variables and diagnostics extracted from wavefunctions."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from holoqhd import fields
from holoqhd.errors import DimensionalityError, ProximityError
from holoqhd.hamiltonian import Hamiltonian, components

NODE_THRESHOLD = 1e-10


@dataclass
class HydroState:
    density: np.ndarray
    velocity: np.ndarray
    nubar: np.ndarray
    phase_rate: np.ndarray
    quantum_potential: np.ndarray
    node_mask: np.ndarray
    spin_density: Optional[np.ndarray] = None


@dataclass
class MadelungDecomposition:
    amplitude: np.ndarray
    phase_factor: np.ndarray


def density(psi, grid):
    return np.abs(psi) ** 2 if components(grid, psi) == 1 else np.sum(np.abs(psi) ** 2, axis=0)


def node_mask(d, threshold=NODE_THRESHOLD):
    return d < threshold * d.max()


def madelung_decompose(psi, threshold=NODE_THRESHOLD):
    """Split a scalar state into amplitude and unit phase factor (phase factor 1 at nodes)."""
    amp = np.abs(psi)
    mask = node_mask(amp**2, threshold)
    theta = np.where(mask, 1.0 + 0j, psi / np.where(mask, 1.0, amp))
    return MadelungDecomposition(amp, theta)


def _current(grid, psi):
    """Im(psi^dagger grad psi), summed over components."""
    grad = fields.gradient(grid, psi)
    if psi.ndim == grid.ndim:
        return np.imag(np.conj(psi) * grad)
    return np.sum(np.imag(np.conj(psi)[None] * grad), axis=1)


def quantum_potential(grid, d, m=1.0, hbar=1.0, threshold=NODE_THRESHOLD):
    """``-(hbar^2/2m) lap(sqrt D)/sqrt D``, set to zero on masked nodes."""
    mask = node_mask(d, threshold)
    r = np.sqrt(d)
    lap = fields.laplacian(grid, r)
    return np.where(mask, 0.0, -(hbar**2 / (2 * m)) * lap / np.where(mask, 1.0, r))


def mechanical_momentum(grid, psi, gf, hbar=1.0, threshold=NODE_THRESHOLD):
    """``hbar Im(psi^dagger grad psi)/D - hbar Lambda - A`` and the node mask.

    For a scalar state without external potential this is the shifted
    momentum of the hydrodynamic picture; for spinors it additionally
    contains the Berry connection of the spin state.
    """
    d = density(psi, grid)
    mask = node_mask(d, threshold)
    j = _current(grid, psi)
    nub = hbar * j / np.where(mask, 1.0, d)
    if gf is not None:
        nub = nub - gf.connection(hbar)
    return np.where(mask, 0.0, nub), d, mask


def to_hydrodynamic(psi, gf, m=1.0, hbar=1.0, potential=None, threshold=NODE_THRESHOLD):
    grid = gf.grid
    nub, d, mask = mechanical_momentum(grid, psi, gf, hbar, threshold)
    vq = quantum_potential(grid, d, m, hbar, threshold)
    xi = np.sum(nub * nub, axis=0) / (2 * m) + vq
    if potential is not None:
        xi = xi + potential
    spin = None
    if components(grid, psi) == 2:
        spin = spin_density(psi, hbar, threshold)[1]
    return HydroState(d, nub / m, nub, np.where(mask, 0.0, xi), vq, mask, spin)


def _loop_mask_check(grid, mask, loop):
    if mask is None or not np.any(mask):
        return
    near = fields.interpolate(grid, mask.astype(float), loop.points, method="cubic")
    if np.any(near > 1e-3):
        raise ProximityError("loop passes through masked wavefunction nodes")


def circulation(grid, v, loop, mask=None, method="cubic"):
    """Loop integral of a velocity field, refusing loops that touch masked nodes."""
    _loop_mask_check(grid, mask, loop)
    return fields.line_integral(grid, v, loop, method=method)


def holonomy_phase(gf, loop, hbar=1.0, method="cubic"):
    """Unit complex number ``exp(-i * loop integral of Lambda)``."""
    return complex(np.exp(-1j * fields.line_integral(gf.grid, gf.lam, loop, method=method)))


def helicity(grid, v):
    if grid.ndim != 3:
        raise DimensionalityError("helicity needs a 3-axis grid")
    return float(grid.integrate(np.sum(v * fields.curl(grid, v), axis=0)))


def helicity_scale(grid, v):
    """``integral |v| |curl v|``; a natural yardstick for relative helicity drift."""
    w = fields.curl(grid, v)
    return float(grid.integrate(np.linalg.norm(v, axis=0) * np.linalg.norm(w, axis=0)))


def total_energy(psi, gf, potential=None, hbar=1.0, mass=1.0, magnetic_b=None):
    """``Re <psi|H|psi>`` for the minimally coupled (Pauli) Hamiltonian."""
    ham = Hamiltonian(gf.grid, hbar, mass, gf, potential, magnetic_b)
    return float(ham.energy(psi).real)


def spin_density(psi, hbar=1.0, threshold=NODE_THRESHOLD):
    """Return ``(s, s_tilde, bloch)``: spin vector, spin density and Bloch vector.

    Spin vectors have three components regardless of the grid dimension.
    """
    a, b = psi[0], psi[1]
    d = np.abs(a) ** 2 + np.abs(b) ** 2
    mask = node_mask(d, threshold)
    ab = np.conj(a) * b
    dens = np.stack([2 * ab.real, 2 * ab.imag, np.abs(a) ** 2 - np.abs(b) ** 2])
    s_tilde = 0.5 * hbar * dens
    n = np.where(mask, 0.0, dens / np.where(mask, 1.0, d))
    return 0.5 * hbar * n, s_tilde, n


def berry_connection(grid, phi, hbar=1.0):
    """``<phi| -i hbar grad phi>`` for a pointwise-normalized spinor field."""
    grad = fields.gradient(grid, phi)
    return hbar * np.sum(np.imag(np.conj(phi)[None] * grad), axis=1)


def takabayasi_vector(grid, n):
    """``T_c = eps_ijk eps_abc n_i d_a n_j d_b n_k`` on a 3-axis grid."""
    if grid.ndim != 3:
        raise DimensionalityError("the Takabayasi vector needs a 3-axis grid")
    dn = fields.gradient(grid, n)  # dn[a, j] = d_a n_j
    out = np.zeros((3,) + grid.dims)
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        # eps_abc d_a n x d_b n summed over the cyclic and anticyclic pair
        cross = np.cross(dn[a], dn[b], axis=0) - np.cross(dn[b], dn[a], axis=0)
        out[c] = np.sum(n * cross, axis=0)
    return out


def mermin_ho_error(grid, phi, hbar=1.0):
    """Max deviation between the Berry curvature and its spin-texture form, and max |T|.

    With ``T`` as in :func:`takabayasi_vector` the identity reads
    ``curl(A) = (hbar/4) T``.
    """
    conn = berry_connection(grid, phi, hbar)
    n = spin_density(phi, 1.0)[2]
    t = takabayasi_vector(grid, n)
    err = np.max(np.abs(fields.curl(grid, conn) - 0.25 * hbar * t))
    return float(err), float(np.max(np.abs(t)))


# ---------------------------------------------------------------------------
# residuals of the hydrodynamic equations


def _vec3(grid, v):
    """Pad a grid-axis vector field with zero components up to three."""
    if v.shape[0] == 3:
        return v
    return np.concatenate([v, np.zeros((3 - v.shape[0],) + grid.dims)])


def curl3(grid, v):
    """Curl of a grid vector field as a 3-vector field (z-only on 2 axes, zero on 1 axis)."""
    if grid.ndim == 3:
        return fields.curl(grid, v)
    out = np.zeros((3,) + grid.dims)
    if grid.ndim == 2:
        out[2] = fields.partial(grid, v[1], 0) - fields.partial(grid, v[0], 1)
    return out


def _cross_grid(grid, v, w):
    """Grid-axis components of ``v x w`` for grid vector ``v`` and 3-vector ``w``."""
    return np.cross(_vec3(grid, v), w, axis=0)[:grid.ndim]


def quotient_gradient(grid, num, d, mask):
    """``grad(num / d)`` by the quotient rule, zero on masked points.

    Ratios such as ``Im(psi* grad psi) / D`` need not be periodic even when
    ``psi`` is (a spreading packet has a velocity linear in ``x``), so their
    spectral derivatives would ring across the box.  Differentiating only the
    smooth numerator and denominator avoids that.  Returns ``out[a, ...] =
    d_a (num / d)[...]``.
    """
    safe = np.where(mask, 1.0, d)
    gnum = fields.gradient(grid, num)
    gd = fields.gradient(grid, d).reshape((grid.ndim,) + (1,) * (num.ndim - grid.ndim) + grid.dims)
    out = (gnum - (num / safe)[None] * gd) / safe
    return np.where(mask, 0.0, out)


def momentum_jacobian(grid, psi, gf, hbar, d, mask):
    """``J[a, i] = d_a nubar_i`` with the density quotient taken by :func:`quotient_gradient`."""
    jac = hbar * quotient_gradient(grid, _current(grid, psi), d, mask)
    if gf is not None:
        jac = jac - fields.gradient(grid, gf.connection(hbar))
    return jac


def _curl_from_jacobian(grid, jac):
    out = np.zeros((3,) + grid.dims)
    if grid.ndim >= 2:
        out[2] = jac[0, 1] - jac[1, 0]
    if grid.ndim == 3:
        out[0] = jac[1, 2] - jac[2, 1]
        out[1] = jac[2, 0] - jac[0, 2]
    return out


def _rel(res, terms, mask):
    keep = ~mask
    num = np.sqrt(np.sum(np.abs(res[..., keep]) ** 2))
    den = max(np.sqrt(np.sum(np.abs(t[..., keep]) ** 2)) for t in terms)
    return float(num / den) if den > 0 else float(num)


def _quantum_force(grid, d, mask, m, hbar):
    """``grad V_Q`` through the quotient rule on ``lap(sqrt D) / sqrt D``."""
    r = np.sqrt(d)
    return -(hbar**2 / (2 * m)) * quotient_gradient(grid, fields.laplacian(grid, r), r, mask)


def _potential_force(grid, p):
    if p.potential is None:
        return None
    if p.potential_gradient is not None:
        return p.potential_gradient
    return fields.gradient(grid, p.potential)


def _scalar_parts(grid, psi, gf, p):
    hb, m = p.hbar, p.mass
    nub, d, mask = mechanical_momentum(grid, psi, gf, hb)
    v = nub / m
    jac = momentum_jacobian(grid, psi, gf, hb, d, mask)
    flux = fields.divergence(grid, (hb * _current(grid, psi) - d * gf.connection(hb)) / m)
    # density-weighted momentum balance, as for spinors
    adv = d * np.sum(v[:, None] * jac, axis=0)
    lorentz = d * _cross_grid(grid, v, _curl_from_jacobian(grid, jac))
    force_q = d * _quantum_force(grid, d, mask, m, hb)
    gv = _potential_force(grid, p)
    force_v = np.zeros_like(force_q) if gv is None else d * gv
    return dict(d=d, v=v, mask=mask, flux=flux, adv=adv, lorentz=lorentz, force_q=force_q,
                force_v=force_v, diff=(hb / (2 * m)) * fields.laplacian(grid, d))


def _spinor_parts(grid, psi, gf, p, form="pauli"):
    hb, mm = p.hbar, p.mass
    nub, d, mask = mechanical_momentum(grid, psi, gf, hb)
    v = nub / mm
    jac = momentum_jacobian(grid, psi, gf, hb, d, mask)
    st = spin_density(psi, hb)[1]
    conn = gf.connection(hb)
    bvec = np.zeros((3,) + grid.dims)
    if p.magnetic_b is not None:
        b = np.asarray(p.magnetic_b, dtype=float)
        bvec = bvec + (b.reshape((3,) + (1,) * grid.ndim) if b.shape == (3,) else b)
    dst = fields.gradient(grid, st)  # dst[j, k] = d_j s_k
    stress = 0
    spin_div = 0
    for j in range(grid.ndim):
        dq = quotient_gradient(grid, dst[j], d, mask)  # dq[i, k] = d_i (d_j s_k / D)
        stress = stress + fields.partial(grid, np.sum(st[None] * dq, axis=1), j)
        spin_div = spin_div + dq[j]
    stress = stress / mm
    if form == "ef":
        # two-level variables: H = a + b.sigma with a = V, b = -(hbar/2M) B
        gv = _potential_force(grid, p)
        bb = -(hb / (2 * mm)) * bvec
        zeeman = -(2.0 / hb) * np.sum(fields.gradient(grid, bb) * st[None], axis=1)
        pot_force = 0 if gv is None else d * gv
        torque = np.cross(st, hb * spin_div - 2 * mm * bb, axis=0)
        scale = hb
    else:
        zeeman = np.sum(fields.gradient(grid, bvec) * st[None], axis=1) / mm
        gv = _potential_force(grid, p)
        pot_force = 0 if gv is None else d * gv
        torque = np.cross(st, spin_div + bvec, axis=0)
        scale = 1.0
    flux = fields.divergence(grid, (hb * _current(grid, psi) - d * conn) / mm)
    adv = d * np.sum(v[:, None] * jac, axis=0)
    lorentz = d * _cross_grid(grid, v, curl3(grid, conn))
    spin_flux = scale * mm * sum(fields.partial(grid, v[j] * st, j) for j in range(grid.ndim))
    return dict(d=d, v=v, st=st, mask=mask, flux=flux, adv=adv, lorentz=lorentz,
                pot_force=pot_force, zeeman=zeeman, stress=stress, spin_flux=spin_flux,
                torque=torque, scale=scale, diff=(hb / (2 * mm)) * fields.laplacian(grid, d))


def hydro_residuals(psi0, psi1, dt, params, form="pauli"):
    """Time-discrete residuals of the hydrodynamic equations between two states ``dt`` apart.

    Time derivatives are centred at the midpoint, ``(X1 - X0)/dt``, and spatial
    terms are averaged over the two states, so exact solutions leave an
    ``O(dt^2)`` residual.  Each entry is an L2 norm over non-node points
    relative to the largest term of its equation.

    Scalar states give ``continuity`` and ``momentum``.  Spinor states add
    ``spin``; ``form="ef"`` assembles the momentum and spin equations in the
    two-level ``a + b.sigma`` variables (``a = V``, ``b = -(hbar/2M) B``)
    instead of the Pauli variables.  The two assemblies agree when no
    external vector potential is present.
    """
    grid = params.grid
    gf = params.gauge
    if gf is None:
        from holoqhd.gauge import GaugeField
        gf = GaugeField.zero(grid)
    if components(grid, psi0) == 1:
        s0, s1 = (_scalar_parts(grid, x, gf, params) for x in (psi0, psi1))
        mask = s0["mask"] | s1["mask"]
        m = params.mass
        dtd = (s1["d"] - s0["d"]) / dt
        flux = 0.5 * (s0["flux"] + s1["flux"])
        acc = m * 0.5 * (s0["d"] + s1["d"]) * (s1["v"] - s0["v"]) / dt
        rest = {k: 0.5 * (s0[k] + s1[k]) for k in ("adv", "lorentz", "force_q", "force_v")}
        mom = acc + rest["adv"] + rest["lorentz"] + rest["force_q"] + rest["force_v"]
        return {
            "continuity": _rel(dtd + flux, [dtd, flux, 0.5 * (s0["diff"] + s1["diff"])], mask),
            "momentum": _rel(mom, [acc] + list(rest.values()), mask),
        }
    if form == "ef" and gf.external_a is not None:
        raise ValueError("the two-level form assumes no external vector potential")
    s0, s1 = (_spinor_parts(grid, x, gf, params, form) for x in (psi0, psi1))
    mask = s0["mask"] | s1["mask"]
    mm = params.mass
    avg = {k: 0.5 * (s0[k] + s1[k]) for k in s0 if k not in ("mask", "scale")}
    dtd = (s1["d"] - s0["d"]) / dt
    acc = mm * avg["d"] * (s1["v"] - s0["v"]) / dt
    dts = (s1["st"] - s0["st"]) / dt
    mom_terms = [acc, avg["adv"], avg["lorentz"], avg["pot_force"], avg["zeeman"], avg["stress"]]
    mom = acc + avg["adv"] - avg["lorentz"] + avg["pot_force"] - avg["zeeman"] - avg["stress"]
    rate = s0["scale"] * mm * dts
    spin = rate + avg["spin_flux"] - avg["torque"]
    spin_terms = [rate, avg["spin_flux"], avg["torque"]]
    mom_terms = [t for t in mom_terms if not np.isscalar(t)]
    return {
        "continuity": _rel(dtd + avg["flux"], [dtd, avg["flux"], avg["diff"]], mask),
        "momentum": _rel(mom, mom_terms, mask),
        "spin": _rel(spin, spin_terms, mask),
    }
