import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxreg.errors import ConditionFailed, DomainViolation, SubsetViolation
from proxreg.geometry import Ball, Box, Orthant, Sphere
from proxreg.lyapunov import (
    CERTIFIED,
    INCONCLUSIVE,
    VIOLATED,
    LyapunovCandidate,
    SamplerSpec,
    certify_on_samples,
    draw_samples,
    indicator_candidate,
    invariance_certificate,
    linear_candidate,
    lyapunov_radius_check,
    pointwise_certificate,
    quadratic_candidate,
    trajectory_decay_check,
)
from proxreg.solver import IntegratorConfig, affine_field, integrate, rotation_field, zero_field

BALL = Ball([0.0, 0.0], 1.0)
ROT = rotation_field(1.0)
DECAY = affine_field(-np.eye(2))
SEGMENT = Box([1.0, 0.0], [1.0, 1.0])
disc = st.tuples(st.floats(0, 2 * math.pi), st.floats(0, 1)).map(
    lambda p: p[1] * np.array([math.cos(p[0]), math.sin(p[0])]))


class TestPointwise:
    @given(disc)
    def test_rotation_margin_is_zero(self, x):
        assert pointwise_certificate(BALL, ROT, quadratic_candidate(), x) == pytest.approx(0, abs=1e-12)

    @given(disc)
    def test_decay_margin(self, x):
        margin = pointwise_certificate(BALL, DECAY, quadratic_candidate(a=1.0), x)
        # -x points into the ball everywhere, so the right derivative is -x
        assert margin == pytest.approx(-0.5 * float(x @ x), abs=1e-12)

    def test_linear_candidate_at_bottom(self):
        assert pointwise_certificate(BALL, ROT, linear_candidate([1.0, 0.0]), [0.0, -1.0]) == \
            pytest.approx(1.0)

    def test_counterexample_margin_without_guard(self):
        cand = indicator_candidate(SEGMENT)
        assert pointwise_certificate(BALL, ROT, cand, [1.0, 0.0], guard=False) <= 0.0

    def test_counterexample_guard(self):
        with pytest.raises(DomainViolation):
            pointwise_certificate(BALL, ROT, indicator_candidate(SEGMENT), [1.0, 0.0])

    def test_indicator_leaving_direction_is_infinite(self):
        cand = indicator_candidate(Box([0.0, 0.0], [0.5, 0.0]))
        assert pointwise_certificate(BALL, ROT, cand, [0.25, 0.0], guard=False) == math.inf

    def test_point_outside_set(self):
        with pytest.raises(DomainViolation):
            pointwise_certificate(BALL, ROT, quadratic_candidate(), [2.0, 0.0])

    def test_negative_dissipation_rejected(self):
        cand = LyapunovCandidate(lambda x: 0.0, lambda x: np.zeros(2), W=lambda x: -1.0)
        with pytest.raises(ValueError):
            pointwise_certificate(BALL, ROT, cand, [0.0, 0.0])

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            quadratic_candidate(a=-1.0)


class TestCertify:
    def test_decay_certified_strict(self):
        rep = certify_on_samples(BALL, DECAY, quadratic_candidate(a=1.0),
                                 SamplerSpec("grid", 0.05), strict=True)
        assert rep.verdict == CERTIFIED and rep.witness is None

    def test_rotation_linear_violated_near_bottom(self):
        rep = certify_on_samples(BALL, ROT, linear_candidate([1.0, 0.0]), SamplerSpec("grid", 0.05))
        assert rep.verdict == VIOLATED
        # sampled boundary points come within a few 1e-3 of (0, -1), where the margin is 1
        assert rep.worst_margin == pytest.approx(1.0, abs=5e-3)
        assert np.linalg.norm(rep.witness - [0.0, -1.0]) <= 0.1

    def test_constant_dissipation_violated_everywhere(self):
        cand = LyapunovCandidate(lambda x: 0.0, lambda x: np.zeros(2), W=lambda x: 0.5)
        rep = certify_on_samples(BALL, zero_field(2), cand)
        assert rep.verdict == VIOLATED
        assert np.allclose(rep.margins, 0.5)

    def test_neutral_margin_band(self):
        spec = SamplerSpec("grid", 0.1)
        assert certify_on_samples(BALL, ROT, quadratic_candidate(), spec).verdict == CERTIFIED
        assert certify_on_samples(BALL, ROT, quadratic_candidate(), spec,
                                  strict=True).verdict == INCONCLUSIVE

    def test_guard_before_sampling(self):
        with pytest.raises(DomainViolation):
            certify_on_samples(BALL, ROT, indicator_candidate(SEGMENT))

    def test_report_outputs(self, tmp_path):
        rep = certify_on_samples(BALL, ROT, linear_candidate([1.0, 0.0]), SamplerSpec("grid", 0.2))
        text = rep.to_text()
        assert "verdict: Violated" in text and "witness:" in text
        rep.to_csv(tmp_path / "c.csv")
        data = np.loadtxt(tmp_path / "c.csv", delimiter=",", skiprows=1)
        assert data.shape == (len(rep.points), 3)

    def test_deterministic(self):
        spec = SamplerSpec("sobol", n=64, seed=7)
        a = certify_on_samples(BALL, ROT, linear_candidate([1.0, 0.0]), spec)
        b = certify_on_samples(BALL, ROT, linear_candidate([1.0, 0.0]), spec)
        assert np.array_equal(a.points, b.points) and np.array_equal(a.witness, b.witness)


class TestSamplers:
    @pytest.mark.parametrize("method", ["grid", "sobol", "random"])
    def test_members_and_sorted(self, method):
        pts = draw_samples(BALL, SamplerSpec(method, 0.1, n=128))
        assert all(BALL.contains(p) for p in pts)
        assert np.array_equal(pts, pts[np.lexsort(pts.T[::-1])])

    def test_grid_density(self):
        pts = draw_samples(Box([0, 0], [1, 1]), SamplerSpec("grid", 0.1, include_boundary=False))
        assert len(pts) == 100

    def test_bad_method(self):
        with pytest.raises(ValueError):
            SamplerSpec("halton")


class TestDecay:
    def test_certified_pair_decreases(self):
        traj = integrate(BALL, DECAY, [0.5, 0.5], IntegratorConfig(1e-3, 3.0))
        rep = trajectory_decay_check(traj, quadratic_candidate(a=1.0))
        assert rep.passed and np.all(np.diff(rep.values) <= 0)

    def test_constant_candidate(self):
        traj = integrate(BALL, ROT, [1.0, 0.0], IntegratorConfig(1e-2, 1.0))
        cand = LyapunovCandidate(lambda x: 2.0, lambda x: np.zeros(2))
        assert np.all(trajectory_decay_check(traj, cand).values == 2.0)

    def test_rotation_norm_preserved(self):
        traj = integrate(BALL, ROT, [1.0, 0.0], IntegratorConfig(1e-3, 2 * math.pi))
        rep = trajectory_decay_check(traj, quadratic_candidate())
        assert np.max(np.abs(rep.values - rep.values[0])) <= 1e-6

    def test_growth_is_reported(self):
        traj = integrate(Ball([0, 0], 10), affine_field(np.eye(2)), [1.0, 0.0],
                         IntegratorConfig(1e-2, 1.0))
        assert not trajectory_decay_check(traj, quadratic_candidate()).passed

    def test_rule(self):
        traj = integrate(BALL, DECAY, [0.5, 0.0], IntegratorConfig(1e-2, 1.0))
        with pytest.raises(ValueError):
            trajectory_decay_check(traj, quadratic_candidate(), rule="simpson")


class TestInvariance:
    def test_circle_invariant_under_rotation(self):
        rep = invariance_certificate(BALL, Sphere([0, 0], 1), ROT, SamplerSpec("grid", 0.1))
        assert rep.verdict == CERTIFIED and rep.extras["dual_vote_agrees"]

    def test_equilibrium(self):
        origin = Box([0.0, 0.0], [0.0, 0.0])
        rep = invariance_certificate(BALL, origin, DECAY, SamplerSpec("grid", 0.1))
        assert rep.verdict == CERTIFIED

    def test_circle_not_invariant_under_decay(self):
        rep = invariance_certificate(BALL, Sphere([0, 0], 1), DECAY, SamplerSpec("grid", 0.1))
        assert rep.verdict == VIOLATED and rep.extras["dual_vote_agrees"]

    def test_subset_outside_set(self):
        with pytest.raises(SubsetViolation):
            invariance_certificate(BALL, Box([1.0, 0.0], [1.0, 0.5]), ROT)

    def test_orthant_face(self):
        face = Box([0.0, 0.0], [0.0, 2.0])
        drift = affine_field(np.zeros((2, 2)), [-1.0, 0.0])
        rep = invariance_certificate(Orthant(2), face, drift, SamplerSpec("grid", 0.1))
        assert rep.verdict == CERTIFIED


class TestRadius:
    def test_decay_on_ball(self):
        rep = lyapunov_radius_check(BALL, DECAY, 1.0, 1.0, 1.0, n_starts=5,
                                    cfg=IntegratorConfig(1e-3, 3.0))
        assert rep.passed and rep.max_ratio <= 1 + 1e-3
        assert rep.condition_margin <= 0

    def test_convex_radius_is_epsilon(self):
        rep = lyapunov_radius_check(BALL, DECAY, 1.0, 0.3, 7.0, n_starts=2,
                                    cfg=IntegratorConfig(1e-2, 1.0))
        assert rep.radius == 0.3
        assert np.all(np.linalg.norm(rep.starts, axis=1) < 0.3)

    def test_rotation_fails_condition(self):
        with pytest.raises(ConditionFailed) as info:
            lyapunov_radius_check(BALL, ROT, 0.1, 1.0, 1.0)
        assert np.linalg.norm(info.value.witness) > 0 and info.value.margin > 0
