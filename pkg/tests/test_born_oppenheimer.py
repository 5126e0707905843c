import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import smooth_random_field
from holoqhd import born_oppenheimer as bo
from holoqhd import gauge
from holoqhd.errors import DomainExitError, ParameterError
from holoqhd.fields import Grid, Loop
from holoqhd.filament import FilamentCurve


def _const_b_model(k=1.0, beta=0.5):
    return bo.ElectronicModel(lambda p: 0.5 * k * np.sum(p * p, axis=1),
                              lambda p: np.tile([0.0, 0.0, beta], (len(p), 1)))


def _fd_grad_norm_sq(model, r, h=1e-5):
    # ||grad phi||^2 of the gauge-fixed lower eigenvector by central differences
    r = np.asarray(r, dtype=float)
    tot = 0.0
    for i in range(len(r)):
        e = np.zeros(len(r))
        e[i] = h
        dphi = (bo.electronic_eigen(model, r + e).phi_minus - bo.electronic_eigen(model, r - e).phi_minus) / (2 * h)
        tot += np.sum(np.abs(dphi) ** 2)
    return tot


class TestEigen:
    def test_diagonal(self):
        m = bo.ElectronicModel(lambda p: np.full(len(p), 0.3), lambda p: np.tile([0, 0, 0.8], (len(p), 1)))
        e = bo.electronic_eigen(m, [0.1, 0.2])
        assert e.e_minus == pytest.approx(0.3 - 0.8) and e.e_plus == pytest.approx(1.1)
        assert np.allclose(e.phi_minus, [0, 1]) and np.allclose(e.phi_plus, [1, 0])
        assert not e.degenerate

    def test_degenerate(self):
        m = bo.ElectronicModel.cone()
        e = bo.electronic_eigen(m, [0.0, 0.0])
        assert e.degenerate and e.e_minus == e.e_plus

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 2.0), st.floats(0.2, 2.0))
    def test_spin_boson_against_dense_solver(self, x, y, tunnel, c):
        m = bo.ElectronicModel.spin_boson(1.3, 0.7, [c, 0.4], tunnel)
        r = np.array([x, y])
        e = bo.electronic_eigen(m, r)
        a, b = m.a(r[None])[0], m.b(r[None])[0]
        h = a * np.eye(2) + np.array([[b[2], b[0] - 1j * b[1]], [b[0] + 1j * b[1], -b[2]]])
        ev = np.linalg.eigvalsh(h)
        assert abs(e.e_minus - ev[0]) < 1e-12 and abs(e.e_plus - ev[1]) < 1e-12
        assert abs((e.e_plus - e.e_minus) - np.sqrt(tunnel**2 + (c * x + 0.4 * y) ** 2)) < 1e-12
        for vec, val in ((e.phi_minus, e.e_minus), (e.phi_plus, e.e_plus)):
            assert np.allclose(h @ vec, val * vec, atol=1e-12)
            assert abs(np.linalg.norm(vec) - 1) < 1e-14
            assert vec[0].real >= 0 and abs(vec[0].imag) < 1e-15


class TestBerry:
    def test_real_models(self):
        g = Grid((16, 16), (6.0, 6.0))
        sb = bo.ElectronicModel.spin_boson(1.0, 1.0, [1.0, 0.5], 0.3)
        assert np.max(np.abs(bo.berry_connection_surface(sb, g))) < 1e-10
        const = bo.ElectronicModel(lambda p: np.zeros(len(p)), lambda p: np.tile([0.3, -0.4, 0.5], (len(p), 1)))
        assert np.max(np.abs(bo.berry_connection_surface(const, g))) < 1e-10

    @pytest.mark.parametrize("rho,height", [(0.5, 1.0), (1.0, 1.0), (2.0, 0.5)])
    def test_solid_angle(self, rho, height):
        model = bo.ElectronicModel.hedgehog(height)
        n = 512
        t = 2 * np.pi * np.arange(n) / n
        pts = rho * np.stack([np.cos(t), np.sin(t)], axis=1)
        tang = rho * np.stack([-np.sin(t), np.cos(t)], axis=1)
        hbar = 0.8
        phase = np.sum(bo.berry_connection_points(model, pts, hbar) * tang) * (2 * np.pi / n)
        # Bloch vector -b/|b| encloses solid angle 2 pi (1 - cos theta) about the south pole
        half = np.pi * (1 - height / np.hypot(rho, height))
        assert min(abs(abs(phase) - hbar * half), abs(abs(phase) - hbar * (2 * np.pi - half))) < 0.01 * hbar * half


class TestSmooth:
    def test_constant(self):
        g = Grid((32, 32), (8.0, 8.0))
        assert np.max(np.abs(bo.smooth(g, np.full(g.dims, 2.5), 1.0) - 2.5)) < 1e-12

    def test_floor(self):
        g = Grid((32, 32), (8.0, 8.0))
        with pytest.raises(ParameterError):
            bo.smooth(g, np.zeros(g.dims), 0.3)

    def test_translation(self, rng):
        g = Grid((32, 24), (8.0, 6.0))
        f = smooth_random_field(g, rng, 5)
        a = bo.smooth(g, np.roll(f, (3, -5), axis=(0, 1)), 0.6)
        b = np.roll(bo.smooth(g, f, 0.6), (3, -5), axis=(0, 1))
        assert np.max(np.abs(a - b)) < 1e-10

    def test_cone_gradient_symmetric(self):
        g = Grid((256, 256), (16.0, 16.0))
        model = bo.ElectronicModel.cone(neglect_second_order_coupling=True)
        s = bo.build_surfaces(model, g, sigma0=1.0)
        assert np.linalg.norm(s.at("grad_eps", [0.0, 0.0])) < 1e-8
        assert np.all(np.isfinite(s.E_bar))

    def test_bounded_gradient_over_intersection(self):
        g = Grid((128, 128), (16.0, 16.0))
        model = bo.ElectronicModel.cone(neglect_second_order_coupling=True)
        s = bo.build_surfaces(model, g, sigma0=0.5)
        from holoqhd import fields
        grad = np.linalg.norm(fields.gradient(g, s.E_bar), axis=0)
        x, y = g.mesh()
        inner = np.hypot(x, y) < 6
        # |grad E| = 1 away from the intersection; smoothing cannot increase it
        assert grad[inner].max() <= 1.0 + 1e-6


class TestEffectivePotential:
    def test_all_flags(self):
        g = Grid((16, 16), (6.0, 6.0))
        m = bo.ElectronicModel.hedgehog(0.7, neglect_second_order_coupling=True, real_eigenstate=True,
                                        neglect_quantum_potential=True)
        eps = bo.effective_potential(m, g)
        e = bo.electronic_eigen(m, g.mesh().reshape(2, -1).T).e_minus.reshape(g.dims)
        assert np.max(np.abs(eps - e)) == 0

    @pytest.mark.parametrize("point", [[0.4, -0.3], [1.5, 0.2], [-0.7, 1.1]])
    def test_gradient_norm_against_finite_differences(self, point):
        for model in (bo.ElectronicModel.spin_boson(1.0, 1.0, [1.0, 0.3], 0.4),
                      bo.ElectronicModel.hedgehog(0.6)):
            assert abs(bo.gradient_norm_sq(model, point) - _fd_grad_norm_sq(model, point)) < 1e-6

    def test_flag_terms(self):
        pts = np.array([[0.4, -0.3], [1.5, 0.2], [-0.7, 1.1]])
        hbar, mass = 0.9, 1.7
        full = bo.ElectronicModel.hedgehog(0.6)
        e = bo.electronic_eigen(full, pts).e_minus
        berry = bo.berry_connection_points(full, pts, hbar)
        metric = bo.gradient_norm_sq(full, pts, hbar)
        a2 = np.sum(berry**2, axis=1)
        eps = bo.effective_potential_points(full, pts, hbar, mass)
        assert np.allclose(eps, e + hbar**2 / (2 * mass) * metric - a2 / (2 * mass), atol=1e-13)
        no2 = bo.ElectronicModel.hedgehog(0.6, neglect_second_order_coupling=True)
        assert np.allclose(bo.effective_potential_points(no2, pts, hbar, mass), e - a2 / (2 * mass), atol=1e-13)
        real = bo.ElectronicModel.hedgehog(0.6, real_eigenstate=True)
        # a real section keeps only the Bloch-vector part of the metric
        assert np.allclose(bo.effective_potential_points(real, pts, hbar, mass),
                           e + hbar**2 / (2 * mass) * (metric - a2 / hbar**2), atol=1e-13)


class TestTrajectories:
    def test_harmonic_period(self):
        g = Grid((128, 128), (16.0, 16.0))
        k, mass = 1.0, 2.0
        s = bo.build_surfaces(_const_b_model(k), g, sigma0=0.5, mass=mass)
        tr = bo.NuclearTrajectory([2.0, 0.0], [0.0, 0.0], mass)
        period = 2 * np.pi * np.sqrt(mass / k)
        steps = 1000
        for _ in range(steps):
            tr = bo.nuclear_step(tr, s, period / steps)
        assert np.linalg.norm(tr.q - [2.0, 0.0]) < 1e-5

    def test_magnetic_only(self):
        g = Grid((64, 64), (16.0, 16.0))
        x, y = g.mesh()
        lam = np.stack([0 * x, 0.8 * np.sin(2 * np.pi * x / 16.0)])
        model = bo.ElectronicModel(lambda p: np.zeros(len(p)), lambda p: np.tile([0, 0, 1.0], (len(p), 1)))
        s = bo.build_surfaces(model, g, sigma0=0.5, lam=lam)
        tr = bo.NuclearTrajectory([0.5, 0.0], [0.6, 0.8], 1.0)
        for _ in range(400):
            tr = bo.nuclear_step(tr, s, 0.01)
        assert abs(np.linalg.norm(tr.qdot) - 1.0) < 1e-8
        assert np.linalg.norm(tr.q - [0.5 + 4.0 * 0.6, 3.2]) > 1e-3  # the force did bend the path

    def test_energy_conservation(self):
        g = Grid((128, 128), (16.0, 16.0))
        model = bo.ElectronicModel.hedgehog(0.5)
        model.a = lambda p: 0.5 * np.sum(p * p, axis=1)
        s = bo.build_surfaces(model, g, sigma0=0.5)
        tr = bo.NuclearTrajectory([1.5, 0.0], [0.0, 0.7], 1.0)
        e0 = bo.trajectory_energy(s, tr)[2]
        for _ in range(int(2 * np.pi / 0.01)):
            tr = bo.nuclear_step(tr, s, 0.01)
        assert abs(bo.trajectory_energy(s, tr)[2] - e0) < 1e-6 * abs(e0)

    def test_domain_exit(self):
        g = Grid((64, 64), (16.0, 16.0))
        s = bo.build_surfaces(_const_b_model(0.0), g, sigma0=0.5)
        tr = bo.NuclearTrajectory([5.9, 0.0], [1.0, 0.0], 1.0)
        with pytest.raises(DomainExitError):
            for _ in range(100):
                tr = bo.nuclear_step(tr, s, 0.01)


class TestGeometricPhase:
    def test_zero_and_shrinking(self):
        g = Grid((48,) * 3, (8.0,) * 3)
        assert bo.smoothed_geometric_phase(g, np.zeros((3,) + g.dims), Loop.circle((0, 0, 0), 1.0)) == 0
        fil = FilamentCurve.ring(1.5, n=96)
        lam = gauge.biot_savart_lambda(fil, g, reg=0.3, boundary="periodic").lam
        lam_bar = bo.smooth(g, lam, 0.4)
        phases = [abs(bo.smoothed_geometric_phase(g, lam_bar, Loop.circle((1.5, 0, 0), r, (0, 1, 0)), method="fourier"))
                  for r in (0.4, 0.2, 0.1, 0.05)]
        assert phases[0] > phases[1] > phases[2] > phases[3]
        assert phases[3] < 0.05 * phases[0]

    def test_matches_stokes_far_from_core(self):
        g = Grid((64,) * 3, (8.0,) * 3)
        fil = FilamentCurve.ring(1.5, n=128, strength=0.7)
        m, hbar, sigma0 = 1.3, 0.9, 0.25
        lam = gauge.biot_savart_lambda(fil, g, m, hbar, reg=0.25, boundary="periodic").lam
        lam_bar = bo.smooth(g, lam, sigma0)
        loop = Loop.circle((1.5, 0, 0), 5 * sigma0 + 0.05, (0, 1, 0), n=256)
        phase = bo.smoothed_geometric_phase(g, lam_bar, loop, hbar, method="fourier")
        oracle = gauge.stokes_holonomy(fil, loop, hbar, m, reg=0.02)
        assert abs(phase - oracle) < 0.02 * abs(oracle)
