import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxreg.errors import NoSolutionInGrid
from proxreg.geometry import Ball, BallComplement, Orthant, SphereShell, sample_boundary
from proxreg.monotone import (
    CAP_START,
    ShiftedOperator,
    cap_inequality,
    choose_cap,
    dim_integrate,
    equivalence_check,
    resolvent,
)
from proxreg.solver import (
    IntegratorConfig,
    affine_field,
    constant_field,
    integrate,
    rotation_field,
    zero_field,
)

SHELL = SphereShell([0.0, 0.0], 1.0, 2.0)
LINE = BallComplement([0.0], 1.0)
angles = st.floats(0.0, 2 * math.pi)
vectors = st.tuples(st.floats(-5, 5), st.floats(-5, 5)).map(np.array)


def shell_point(angle, outer):
    radius = 2.0 if outer else 1.0
    return radius * np.array([math.cos(angle), math.sin(angle)])


class TestShiftedOperator:
    def test_shift(self):
        assert ShiftedOperator(Ball([0, 0], 1), 3.0).shift == 0.0
        assert ShiftedOperator(SHELL, 3.0).shift == 3.0

    def test_cap_must_be_positive(self):
        with pytest.raises(ValueError):
            ShiftedOperator(SHELL, 0.0)

    @given(angles, st.booleans(), vectors)
    def test_sandwich(self, angle, outer, w):
        op = ShiftedOperator(SHELL, 1.5)
        x = shell_point(angle, outer)
        n = op.capped_normal(x, w)
        assert np.linalg.norm(n) <= op.m * (1 + 1e-12)
        assert op.graph_residual(x, op.shift * x + n) <= 1e-12

    @settings(max_examples=50)
    @given(angles, st.booleans(), angles, st.booleans(), vectors, vectors)
    def test_shifted_selection_is_monotone(self, a1, o1, a2, o2, w1, w2):
        op = ShiftedOperator(SHELL, 1.0)
        x1, x2 = shell_point(a1, o1), shell_point(a2, o2)
        y1 = op.shift * x1 + op.capped_normal(x1, w1)
        y2 = op.shift * x2 + op.capped_normal(x2, w2)
        assert float((y1 - y2) @ (x1 - x2)) >= -1e-9

    def test_residual_detects_points_off_the_graph(self):
        op = ShiftedOperator(SHELL, 1.0)
        x = np.array([1.0, 0.0])
        # the outward direction is not normal at the inner circle
        assert op.graph_residual(x, op.shift * x + np.array([0.5, 0.0])) == pytest.approx(0.5)


class TestCap:
    def test_zero_field(self):
        cap = choose_cap(Ball([0, 0], 1), zero_field(2), [0.5, 0.0], 1.0)
        assert cap.m == CAP_START and cap.pieces == 1

    def test_constant_field(self):
        cap = choose_cap(SHELL, constant_field([0.0, 1.0]), [1.0, 0.0], 1.0)
        assert cap.m == 1.0 and cap.T0 == 1.0

    def test_rotation_on_shell_needs_splitting(self):
        f = rotation_field(1.0)
        # on the whole horizon 1 + (e^{1 + m} + 1) <= m has no solution of moderate size
        assert all(cap_inequality(m, 1.0, 1.0, 1.0, 1.0) > m for m in 2.0 ** np.arange(-10, 10))
        cap = choose_cap(SHELL, f, [1.0, 0.0], 1.0)
        assert (cap.m, cap.T0, cap.pieces) == (4.0, 1 / 16, 16)
        worst = math.exp(1.0)
        assert cap_inequality(cap.m, worst, 1.0, 1.0, cap.T0) <= cap.m

    def test_horizon_must_be_positive(self):
        with pytest.raises(ValueError):
            choose_cap(SHELL, zero_field(2), [1.0, 0.0], 0.0)


def line_oracle(op, lam, z, step=1e-6):
    """Smallest merit over a 1-D scan of both branches at the given resolution."""
    mu = 1 + lam * op.shift
    inner = np.arange(1.0 + step, 3.0, step)
    xs = np.concatenate([inner, -inner])
    interior = float(np.min(np.abs(z - mu * xs)))
    # at x = 1 the normal cone is (-inf, 0], at x = -1 it is [0, inf); both capped at m
    w_plus, w_minus = (z - mu) / lam, (z + mu) / lam
    faces = min(abs(w_plus - np.clip(w_plus, -op.m, 0.0)),
                abs(w_minus - np.clip(w_minus, 0.0, op.m)))
    return min(interior, lam * faces)


class TestResolvent:
    def test_convex_is_projection(self, rng):
        op = ShiftedOperator(Ball([0, 0], 1), 1.0)
        for z in rng.uniform(-3, 3, (10, 2)):
            assert np.allclose(resolvent(op, 0.1, z), op.set.project(z))

    def test_closed_form_on_shell(self):
        op = ShiftedOperator(SHELL, 2.0)
        lam, z = 0.1, np.array([1.1, 0.0])
        x = resolvent(op, lam, z)
        assert op.graph_residual(x, (z - x) / lam) <= 1e-9

    def test_search_matches_closed_form(self):
        op = ShiftedOperator(SHELL, 2.0)
        z = np.array([0.5, 1.0])
        closed = resolvent(op, 0.1, z, method="closed")
        searched = resolvent(op, 0.1, z, method="search")
        assert np.allclose(closed, searched, atol=1e-5)

    def test_line_without_solution(self):
        op = ShiftedOperator(LINE, 1.0)
        with pytest.raises(NoSolutionInGrid) as info:
            resolvent(op, 0.1, [0.5])
        assert np.allclose(info.value.best, [1.0])
        assert info.value.residual == pytest.approx(0.5, abs=1e-6)
        assert line_oracle(op, 0.1, 0.5) == pytest.approx(0.5, abs=1e-5)

    def test_line_with_solution(self):
        op = ShiftedOperator(LINE, 1.0)
        assert np.allclose(resolvent(op, 0.1, [1.05]), [1.0])
        assert line_oracle(op, 0.1, 1.05) <= 1e-6

    def test_closed_only_reports_rejection(self):
        with pytest.raises(NoSolutionInGrid):
            resolvent(ShiftedOperator(LINE, 1.0), 0.1, [0.5], method="closed")

    def test_bad_lambda(self):
        with pytest.raises(ValueError):
            resolvent(ShiftedOperator(SHELL, 1.0), 0.0, [1.0, 0.0])

    @settings(max_examples=40)
    @given(angles, st.floats(1.01, 2.3))
    def test_inclusion_holds(self, angle, radius):
        # with m = 4 and lam = 0.05 only radii >= 1 are reachable from the shell
        op = ShiftedOperator(SHELL, 4.0)
        lam = 0.05
        z = radius * np.array([math.cos(angle), math.sin(angle)])
        x = resolvent(op, lam, z)
        assert SHELL.contains(x)
        assert op.graph_residual(x, (z - x) / lam) <= 1e-6 / lam


class TestEquivalence:
    def test_convex_rotation_identical(self):
        cfg = IntegratorConfig(1e-3, 2.0)
        rep = equivalence_check(Ball([0, 0], 1), rotation_field(1.0), [1.0, 0.0], cfg)
        assert rep.sup_gap <= 1e-2 and rep.passed

    def test_zero_field(self):
        rep = equivalence_check(SHELL, zero_field(2), [1.5, 0.0], IntegratorConfig(0.01, 1.0))
        assert rep.sup_gap == 0.0

    def test_orthant_ramp(self):
        cfg = IntegratorConfig(1e-3, 3.0)
        rep = equivalence_check(Orthant(2), constant_field([-1.0, -1.0]), [0.5, 2.0], cfg)
        assert rep.sup_gap <= 5 * cfg.h

    def test_shell(self, tmp_path):
        f = affine_field([[-0.5, -1.0], [1.0, -0.5]])
        rep = equivalence_check(SHELL, f, [1.0, 0.0], IntegratorConfig(1e-3, 1.0))
        assert rep.passed and rep.verdict().startswith("equivalence: PASS")
        rep.to_csv(tmp_path / "gap.csv")
        data = np.loadtxt(tmp_path / "gap.csv", delimiter=",", skiprows=1)
        assert data.shape == (len(rep.times), 2)

    def test_dim_gap_is_first_order(self, rng):
        f = affine_field([[-0.5, -1.0], [1.0, -0.5]])
        cap = choose_cap(SHELL, f, [1.0, 0.0], 1.0)
        for x0 in sample_boundary(SHELL, 3, rng):
            gaps = []
            for h in (1e-2, 5e-3):
                traj = dim_integrate(SHELL, f, x0, IntegratorConfig(h, 1.0), cap.m)
                assert all(SHELL.contains(x) for x in traj.states)
                ref = integrate(SHELL, f, x0, IntegratorConfig(h, 1.0))
                gaps.append(np.max(np.linalg.norm(ref.states - traj.states, axis=1)))
            assert 1.6 <= gaps[0] / gaps[1] <= 2.4
