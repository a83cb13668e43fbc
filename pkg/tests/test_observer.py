import math

import numpy as np
import pytest

from proxreg.errors import (
    HypothesisViolation,
    NotPD,
    QualificationFailure,
    RadiusViolation,
    SingularMap,
)
from proxreg.geometry import Ball, LevelSetPolyhedral, Orthant, SphereShell
from proxreg.observer import (
    LipschitzMap,
    LureSystem,
    ObserverSetup,
    build_coupled_field,
    design_linear_gain,
    find_passivity_matrix,
    fit_log_slope,
    lure_inclusion_residual,
    ndcs_build,
    observer_run,
    simulate_lure,
    stability_radius,
    symmetric_sqrt,
    transform,
    validate_observer,
    verify_passivity,
)
from proxreg.solver import IntegratorConfig, affine_field, constant_field, integrate, rotation_field

I2 = np.eye(2)


class TestPassivity:
    def test_identity_system(self):
        assert verify_passivity(I2, -I2, I2, I2, 1.0).passed

    def test_equality_residual(self):
        rep = verify_passivity(I2, -I2, I2, 2 * I2, 1.0)
        assert not rep.equality_ok and rep.equality_residual == pytest.approx(1.0)

    def test_lmi_eigenvalue(self):
        # A^T + A + I = [[-1, 2], [2, -1]] has eigenvalues -3 and 1
        rep = verify_passivity(I2, [[-1.0, 2.0], [0.0, -1.0]], I2, I2, 1.0)
        assert not rep.lmi_ok and rep.lmi_max_eig == pytest.approx(1.0)

    def test_asymmetric_P(self):
        with pytest.raises(ValueError):
            verify_passivity([[1.0, 1.0], [0.0, 1.0]], -I2, I2, I2, 1.0)

    def test_search_determined(self):
        assert np.allclose(find_passivity_matrix(-I2, I2, I2, 1.0), I2)

    def test_search_free_entry(self):
        A, B, D = np.diag([-1.0, -2.0]), [[1.0], [0.0]], [[1.0, 0.0]]
        P = find_passivity_matrix(A, B, D, 1.0)
        assert P is not None and verify_passivity(P, A, B, D, 1.0).passed

    def test_search_infeasible(self):
        assert find_passivity_matrix(I2, I2, I2, 1.0) is None


class TestTransform:
    def test_identity(self):
        ts = transform(LureSystem(-I2, I2, I2, Orthant(2)), I2)
        assert np.allclose(ts.R, I2) and np.allclose(ts.field.matrix, -I2)
        assert np.allclose(ts.set_prime.project([-1.0, 2.0]), [0.0, 2.0])

    def test_diagonal_root(self):
        R, R_inv = symmetric_sqrt(np.diag([4.0, 1.0]))
        assert np.allclose(R, np.diag([2.0, 1.0])) and np.allclose(R_inv, np.diag([0.5, 1.0]))

    def test_full_root(self):
        P = np.array([[2.0, 1.0], [1.0, 2.0]])
        R, _ = symmetric_sqrt(P)
        assert np.max(np.abs(R @ R - P)) <= 1e-12
        assert np.allclose(np.linalg.eigvalsh(R), [1.0, math.sqrt(3)])

    def test_not_pd(self):
        with pytest.raises(NotPD):
            symmetric_sqrt(np.diag([1.0, -1.0]))

    def test_shapes(self):
        from proxreg.errors import DimensionMismatch
        with pytest.raises(DimensionMismatch):
            LureSystem(-I2, I2, np.eye(3), Orthant(2))


class TestRadius:
    def test_unit(self):
        system = LureSystem(-I2, I2, I2, SphereShell([0, 0], 1, 2))
        assert stability_radius(system, I2, 1.0) == pytest.approx(0.5)

    def test_scaled(self):
        system = LureSystem(-I2, I2, I2, SphereShell([0, 0], 1, 2))
        assert stability_radius(system, np.diag([4.0, 1.0]), 1.0) == pytest.approx(0.25)

    def test_convex_is_unbounded(self):
        assert stability_radius(LureSystem(-I2, I2, I2, Orthant(2)), I2, 1.0) == math.inf

    def test_degenerate(self):
        with pytest.raises(SingularMap):
            stability_radius(LureSystem(-I2, I2, np.zeros((2, 2)), Orthant(2)), I2, 1.0)

    def test_scaling_P(self):
        # rho is homogeneous of degree 1/2 in P
        system = LureSystem(-I2, I2, I2, SphereShell([0, 0], 1, 2))
        P = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert stability_radius(system, 4 * P, 1.0) == pytest.approx(
            2 * stability_radius(system, P, 1.0))


class TestSimulateLure:
    def test_orthant_decay(self):
        system = LureSystem(-I2, I2, I2, Orthant(2), [0.2, 0.1])
        run = simulate_lure(system, I2, IntegratorConfig(1e-3, 5.0), 1.0)
        assert run.passed
        exact = np.exp(-run.trajectory.times)[:, None] * np.array([0.2, 0.1])
        assert np.max(np.abs(run.states - exact)) <= 1e-3
        assert lure_inclusion_residual(system, run.states, 1e-3) <= 1e-2

    def test_equilibrium(self):
        system = LureSystem(-I2, I2, I2, Orthant(2), [0.0, 0.0])
        run = simulate_lure(system, I2, IntegratorConfig(1e-2, 1.0), 1.0)
        assert np.all(run.states == 0.0)

    def test_radius_guard(self):
        system = LureSystem(-I2, I2, I2, SphereShell([0, 0], 1, 2), [1.0, 0.0])
        with pytest.raises(RadiusViolation):
            simulate_lure(system, I2, IntegratorConfig(1e-2, 1.0), 1.0)

    def test_face_is_held(self):
        # drift into the face x_1 = 0 is cancelled by the multiplier
        A = [[-1.0, -1.0], [0.0, -1.0]]
        assert verify_passivity(I2, A, I2, I2, 1.0).passed
        system = LureSystem(A, I2, I2, Orthant(2), [0.0, 0.5])
        run = simulate_lure(system, I2, IntegratorConfig(1e-3, 1.0), 1.0)
        assert np.all(run.states[:, 0] == 0.0)
        assert np.allclose(run.states[:, 1], 0.5 * (1 - 1e-3) ** np.arange(len(run.states)))


class TestCoupledField:
    def test_decoupled(self):
        f = rotation_field(1.0)
        F = build_coupled_field(f, np.zeros((2, 2)), I2)
        y = np.array([1.0, 2.0, 3.0, 4.0])
        assert np.allclose(F(y), np.concatenate([f(y[:2]), f(y[2:])]))

    def test_injection(self):
        f = affine_field(-I2)
        F = build_coupled_field(f, 3 * I2, I2)
        z, x = np.array([1.0, 0.0]), np.array([0.0, 2.0])
        assert np.allclose(F(np.concatenate([z, x]))[:2], f(z) - 3 * z + 3 * x)

    def test_rotation_example(self):
        F = build_coupled_field(rotation_field(1.0), I2, I2)
        assert np.allclose(F([1.0, 0.0, 0.0, 1.0]), [-1.0, 2.0, -1.0, 0.0])

    def test_nonlinear_matches_linear(self):
        f = rotation_field(1.0)
        lin = build_coupled_field(f, 2 * I2, I2)
        nonlin = build_coupled_field(f, LipschitzMap(lambda y: 2 * y, 2.0), LipschitzMap(lambda x: x, 1.0),
                                     dim=2)
        y = np.array([0.3, -0.2, 0.5, 0.1])
        assert np.allclose(lin(y), nonlin(y)) and lin.kappa == nonlin.kappa


def bundled_setup(delta, epsilon=0.6, eta=0.1, G=None, L=None):
    return ObserverSetup(G, L, delta, epsilon, eta)


class TestObserver:
    def test_one_dimensional(self):
        C, f = Orthant(1), affine_field([[-1.0]])
        zero = np.zeros((1, 1))
        rep = observer_run(C, f, zero, zero, [1.0], [1.05], bundled_setup(1.0, G=zero, L=zero),
                           IntegratorConfig(1e-3, 5.0))
        assert rep.passed and rep.beta == 1.0
        # exact error decays like e^{-t}
        assert np.allclose(rep.errors, 0.05 * np.exp(-rep.times), rtol=1e-2)

    def test_identical_start(self):
        C, f = Orthant(1), affine_field([[-1.0]])
        zero = np.zeros((1, 1))
        rep = observer_run(C, f, zero, zero, [1.0], [1.0], bundled_setup(1.0, G=zero, L=zero),
                           IntegratorConfig(1e-2, 1.0))
        assert np.all(rep.errors == 0.0)

    def test_two_dimensional(self, tmp_path):
        C, f = Ball([0, 0], 2), rotation_field(1.0)
        rep = observer_run(C, f, 2 * I2, I2, [1.0, 0.0], [1.05, 0.05],
                           bundled_setup(2.0, G=I2, L=2 * I2), IntegratorConfig(1e-3, 5.0))
        assert rep.passed and rep.slope <= -rep.beta / 2 + 0.05
        rep.to_csv(tmp_path / "o.csv")
        assert (tmp_path / "o.csv").read_text().splitlines()[0] == "t,e,bound,x_0,x_1,xhat_0,xhat_1"

    def test_eta_guard(self):
        C, f = Ball([0, 0], 2), rotation_field(1.0)
        with pytest.raises(HypothesisViolation) as info:
            observer_run(C, f, 2 * I2, I2, [1.0, 0.0], [1.5, 0.0], bundled_setup(2.0, G=I2, L=2 * I2),
                         IntegratorConfig(1e-2, 1.0))
        assert info.value.condition == "eta_guard"

    def test_weak_gain_fails_dissipativity(self):
        C, f = Ball([0, 0], 2), rotation_field(1.0)
        checks = validate_observer(C, f, 0.5 * I2, I2, [1.0, 0.0], [1.05, 0.0],
                                   ObserverSetup(I2, 0.5 * I2, 2.0, 0.6, 0.1, 1.1, 2.2))
        status = {c.name: c.passed for c in checks}
        assert not status["strong_dissipativity"] and status["eta_guard"]

    def test_nonconvex_beta(self):
        setup = ObserverSetup(I2, I2, 3.0, 0.5, 0.1, 2.0, 1.5)
        assert setup.beta(1.0) == pytest.approx(1.0)
        assert setup.beta(math.inf) == 3.0

    def test_log_slope(self):
        t = np.linspace(0, 5, 501)
        assert fit_log_slope(t, 2 * np.exp(-0.7 * t)) == pytest.approx(-0.7)
        assert fit_log_slope(t, np.zeros_like(t)) == -math.inf


class TestGain:
    def test_skew(self):
        _, rep = design_linear_gain([[0.0, 1.0], [-1.0, 0.0]], I2, 0.7, 0.7)
        assert rep.passed and rep.max_eig == pytest.approx(0.0, abs=1e-12)

    def test_too_weak(self):
        _, rep = design_linear_gain(I2, I2, 0.5, 1.0)
        assert not rep.passed and rep.max_eig == pytest.approx(1.5)

    def test_damped(self):
        L, rep = design_linear_gain([[0.0, 1.0], [-1.0, -0.1]], I2, 1.0, 0.9, epsilon=0.6)
        assert rep.passed and rep.max_eig == pytest.approx(-0.1)
        assert np.allclose(L, I2) and isinstance(rep.eta, float)


class TestComplementarity:
    def test_ramp(self):
        setC, extract = ndcs_build(constant_field([-1.0]), [[1.0]], [0.0])
        traj = integrate(setC, constant_field([-1.0]), [0.5], IntegratorConfig(1e-3, 1.5))
        rep = extract(traj)
        assert rep.passed(1e-6)
        assert abs(rep.activation_time - 0.5) <= 2e-3
        assert np.allclose(rep.multipliers[600:], 1.0)

    def test_interior(self):
        f = constant_field([1.0])
        setC, extract = ndcs_build(f, [[1.0]], [0.0])
        rep = extract(integrate(setC, f, [0.5], IntegratorConfig(1e-2, 1.0)))
        assert np.allclose(rep.multipliers, 0.0) and rep.activation_time == math.inf

    def test_rank_deficient(self):
        with pytest.raises(QualificationFailure):
            ndcs_build(constant_field([0.0, 0.0]), [[1.0, 1.0], [1.0, 1.0]], [0.0, 0.0])

    def test_two_constraints(self):
        f = constant_field([-1.0, -1.0])
        setC, extract = ndcs_build(f, I2, [0.0, 0.0])
        assert isinstance(setC, LevelSetPolyhedral)
        rep = extract(integrate(setC, f, [0.5, 2.0], IntegratorConfig(1e-3, 3.0)))
        assert rep.passed() and abs(rep.activation_time - 0.5) <= 2e-3
