import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from beamstab import geometry
from beamstab.admissibility import constant_schedule
from beamstab.discretization import (SimState, assemble, compatibility_residuals,
                                     export_operator, interpolate,
                                     project_initial_data, rhs)
from beamstab.errors import InvalidArgumentError
from beamstab.fields import Field, linear_field, make_field, sine_field
from beamstab.feedback import identity_law

from conftest import make_conservative_system, make_system


class TestAssembly:
    def test_hand_stiffness_three_nodes(self):
        system = make_system(nodes=3)
        K = system.stiffness.toarray()[np.ix_(system.free, system.free)]
        assert np.allclose(K, [[4.0, -2.0], [-2.0, 2.0]], atol=1e-14)

    def test_mass_total_is_domain_measure(self):
        system = make_system(nodes=17)
        assert system.mass.sum() == pytest.approx(1.0, abs=1e-14)
        rect = make_system(mesh=geometry.build_rect_mesh(2.0, 3.0, 3, 4),
                           x0=np.array([-0.1, -0.1]))
        assert rect.mass.sum() == pytest.approx(6.0, abs=1e-12)

    def test_symmetry(self):
        system = make_system(mesh=geometry.build_rect_mesh(1.0, 1.0, 3, 3),
                             x0=np.array([-0.1, -0.1]))
        for op in (system.mass, system.stiffness, system.sigma_op):
            d = op - op.T
            assert abs(d).max() <= 1e-14 * max(abs(op).max(), 1.0)

    def test_gauss_identity_2d(self):
        # C + C^T equals the boundary matrix weighted by sum of normal components
        system = make_system(mesh=geometry.build_rect_mesh(1.0, 1.0, 2, 2),
                             x0=np.array([-0.1, -0.1]))
        defect = (system.coupling + system.coupling.T - system.boundary_sum_nu).toarray()
        assert np.max(np.abs(defect)) <= 1e-12

    def test_gauss_identity_1d(self):
        system = make_system(nodes=7)
        defect = (system.coupling + system.coupling.T - system.boundary_sum_nu).toarray()
        assert np.max(np.abs(defect)) <= 1e-14

    def test_stiffness_positive_definite_on_free_dofs(self):
        system = make_system(nodes=9)
        K = system.stiffness.toarray()[np.ix_(system.free, system.free)]
        assert np.all(np.linalg.eigvalsh(K) > 0)

    def test_sigma_default_matches_partition_normals(self):
        system = make_system(nodes=5, alpha2=2.0)
        assert np.allclose(system.sigma_values, 2.0)

    def test_requires_feedback_boundary(self, interval3):
        part = geometry.classify_boundary(interval3, np.array([0.0]))
        broken = type(part)(part.mesh, part.x0, ("Gamma0", "Gamma0"),
                            part.m_dot_nu, part.m_dot_nu_centroid)
        with pytest.raises(InvalidArgumentError):
            assemble(interval3, broken, 0.1, 0.1, constant_schedule(1.0),
                     identity_law(), identity_law())


class TestRhs:
    def test_zero_state_is_equilibrium(self):
        system = make_system(nodes=9)
        n = system.n_nodes
        state = SimState(0.0, *(np.zeros(n) for _ in range(4)))
        d2u, d2v = rhs(system, state)
        assert np.all(d2u == 0.0) and np.all(d2v == 0.0)

    def test_decoupled_wave_acceleration(self):
        system = make_conservative_system(nodes=9)
        u = interpolate(system, sine_field(system.mesh))
        state = SimState(0.0, u, np.zeros_like(u), np.zeros_like(u), np.zeros_like(u))
        d2u, d2v = rhs(system, state)
        expected = system.solve_mass(-(system.stiffness @ u))
        assert np.allclose(d2u, expected, atol=1e-14)
        assert np.allclose(d2v, 0.0, atol=1e-14)

    def test_hand_acceleration_three_nodes(self):
        system = make_conservative_system(nodes=3)
        u = np.array([0.0, 1.0, 0.0])
        state = SimState(0.0, u, np.zeros(3), np.zeros(3), np.zeros(3))
        d2u, _ = rhs(system, state)
        K = system.stiffness.toarray()[np.ix_(system.free, system.free)]
        M = system.mass.toarray()[np.ix_(system.free, system.free)]
        expected = np.linalg.solve(M, -K @ u[system.free])
        assert np.allclose(d2u[system.free], expected, atol=1e-12)

    @given(seed=st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_clamped_nodes_stay_clamped(self, seed):
        system = make_system(nodes=7)
        rng = np.random.default_rng(seed)
        vecs = [rng.standard_normal(system.n_nodes) for _ in range(4)]
        for v in vecs:
            v[system.fixed] = 0.0
        d2u, d2v = rhs(system, SimState(0.0, *vecs))
        assert np.all(d2u[system.fixed] == 0.0)
        assert np.all(d2v[system.fixed] == 0.0)


class TestInitialData:
    def test_sine_data_is_compatible(self):
        system = make_system(nodes=21, alpha2=0.1)
        u0 = sine_field(system.mesh)
        zero = make_field("zero", system.mesh)
        r_u, _ = compatibility_residuals(system, u0, zero, zero, zero)
        assert np.allclose(r_u, 0.0, atol=1e-14)

    def test_exact_cancellation(self):
        # du0/dnu = -1 at x=1 cancels (m.nu) p1(u1) with u1 = 1 there
        system = make_system(nodes=11, alpha2=0.1)
        u0 = linear_field(system.mesh, amplitude=-1.0)
        ones = Field("ones", lambda x: np.ones(len(x)),
                     lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                     lambda x: np.zeros(len(x)))
        zero = make_field("zero", system.mesh)
        r_u, _ = compatibility_residuals(system, u0, zero, ones, zero)
        assert np.allclose(r_u, 0.0, atol=1e-14)

    def test_quadratic_data_flagged_not_fatal(self, caplog):
        system = make_system(nodes=11)
        u0 = make_field("quadratic", system.mesh)
        zero = make_field("zero", system.mesh)
        with caplog.at_level("WARNING"):
            state, info = project_initial_data(system, u0, zero, zero, zero)
        # residual = du0/dnu(1) = 2, plus the sigma coupling on the v equation
        assert info["residual_u"][0] == pytest.approx(2.0)
        assert info["norm"] > 1e-10
        assert any("compatibility" in rec.message for rec in caplog.records)
        assert state.t == 0.0

    def test_interpolation_pins_clamped_nodes(self):
        system = make_system(nodes=9)
        vals = interpolate(system, Field("shift", lambda x: np.sum(x, axis=1) + 1.0))
        assert np.all(vals[system.fixed] == 0.0)
        assert vals[system.free[-1]] == pytest.approx(2.0)


def test_export_operator_roundtrip(tmp_path):
    system = make_system(nodes=5)
    path = tmp_path / "stiffness.txt"
    export_operator(system.stiffness, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# coo 5 5 ")
    assert int(lines[0].split()[-1]) == len(lines) - 1
    data = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    dense = np.zeros((5, 5))
    dense[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2]
    assert np.allclose(dense, system.stiffness.toarray(), atol=0.0)
