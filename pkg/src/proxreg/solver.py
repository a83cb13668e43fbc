"""Catching-up time stepping for ``x' in f(x) - N_C(x)`` and solution diagnostics.

The default scheme is ``x_{k+1} = P_C(x_k + h f(x_k))``. Every run records,
per step, the orthogonality residual ``|<v_k, f(x_k) - v_k>|`` and the slack
of the a priori speed and drift bounds, so the analytic properties of exact
solutions can be checked on the discrete path.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DimensionMismatch, DomainViolation, IntegrationError, StepTooLarge
from .geometry import TOL_MEM, TOL_ORTH, as_point, cone_project

SCHEMES = ("catching_up", "semi_implicit")


@dataclass(frozen=True)
class VectorField:
    """A Lipschitz map ``f: R^n -> R^n`` with its declared constant ``kappa``.

    ``matrix`` and ``offset`` are set for affine fields ``A x + b`` and let
    downstream code (observer coupling, Lur'e transforms) stay linear.
    """

    func: object
    kappa: float
    label: str = "field"
    matrix: np.ndarray = None
    offset: np.ndarray = None

    def __post_init__(self):
        if not self.kappa >= 0:
            raise ValueError("Lipschitz constant must be nonnegative")

    def __call__(self, x):
        return np.asarray(self.func(x), dtype=float)

    def norm(self, x):
        return float(np.linalg.norm(self(x)))


def affine_field(A, b=None, label="affine"):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch("affine field needs a square matrix")
    b = np.zeros(A.shape[0]) if b is None else as_point(b, A.shape[0])
    kappa = float(np.linalg.norm(A, 2))
    return VectorField(lambda x: A @ x + b, kappa, label, A, b)


def zero_field(dim):
    return affine_field(np.zeros((dim, dim)), label="zero")


def constant_field(c):
    c = as_point(c)
    return affine_field(np.zeros((c.size, c.size)), c, label="constant")


def rotation_field(omega=1.0):
    """Planar rotation ``omega * (-y, x)``."""
    return affine_field(omega * np.array([[0.0, -1.0], [1.0, 0.0]]), label="rotation")


def spiral_field(omega=1.0, alpha=1.0):
    """``omega * J x + alpha * x``: rotation plus radial expansion (alpha > 0)."""
    A = np.array([[alpha, -omega], [omega, alpha]])
    return affine_field(A, label="spiral")


def push_pull_field(dim=2, inward=1.0, outward=2.0):
    """``-inward * x + outward * x / ||x||``, Lipschitz with ``inward + outward`` off the unit ball."""

    def func(x):
        n = np.linalg.norm(x)
        return -inward * x + (outward * x / n if n > 0 else 0.0 * x)

    return VectorField(func, inward + outward, "push_pull")


def lipschitz_ratio(f, points, pairs=200, rng=None):
    """Largest observed ``||f(x)-f(y)|| / ||x-y||`` over random pairs of ``points``."""
    rng = np.random.default_rng(0) if rng is None else rng
    pts = np.asarray(points, dtype=float)
    worst = 0.0
    for _ in range(pairs):
        i, j = rng.integers(0, len(pts), size=2)
        d = np.linalg.norm(pts[i] - pts[j])
        if d > 1e-12:
            worst = max(worst, np.linalg.norm(f(pts[i]) - f(pts[j])) / d)
    return worst


@dataclass(frozen=True)
class Tolerances:
    tol_orth: float = TOL_ORTH
    tol_mem: float = TOL_MEM
    bound_abs: float = 1e-6
    bound_rel: float = 1e-6

    def bound(self, value):
        return self.bound_abs + self.bound_rel * abs(value)


@dataclass(frozen=True)
class IntegratorConfig:
    h: float
    T: float
    scheme: str = "catching_up"
    tol: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.T >= self.h:
            raise ValueError("need T >= h")
        if self.T / self.h > 2 ** 53:
            raise ValueError("T/h exceeds the integer range")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self):
        return int(math.ceil(self.T / self.h - 1e-9))


@dataclass
class Trajectory:
    """Discrete solution with per-step diagnostics.

    ``orth_residual`` and ``speed_slack`` have one entry per step,
    ``drift_slack`` one entry per state.
    """

    times: np.ndarray
    states: np.ndarray
    velocities: np.ndarray
    field_norms: np.ndarray
    orth_residual: np.ndarray
    speed_slack: np.ndarray
    drift_slack: np.ndarray
    h: float
    kappa: float = 0.0
    r: float = math.inf

    @property
    def final(self):
        return self.states[-1]

    def __len__(self):
        return len(self.times)

    def to_csv(self, path):
        n = self.states.shape[1]
        pad = np.full((1, n), np.nan)
        cols = [
            self.times[:, None],
            self.states,
            np.vstack([self.velocities, pad]),
            np.append(self.orth_residual, np.nan)[:, None],
            np.append(self.speed_slack, np.nan)[:, None],
            self.drift_slack[:, None],
        ]
        header = ",".join(["t"] + [f"x_{i}" for i in range(n)] + [f"v_{i}" for i in range(n)]
                          + ["orth_residual", "speed_slack", "drift_slack"])
        np.savetxt(path, np.hstack(cols), fmt="%.17g", delimiter=",", header=header,
                   comments="")


def _require_member(set_, x, tol_mem=TOL_MEM):
    if not set_.contains(x, tol_mem):
        raise DomainViolation(f"point {x} is not in the set (tol {tol_mem:g})")


def catching_up_step(set_, f, x, h, fx=None):
    """One step ``P_C(x + h f(x))``; refuses steps that could leave the projection tube."""
    x = as_point(x, set_.dim)
    fx = f(x) if fx is None else fx
    if not set_.convex and h * np.linalg.norm(fx) >= set_.r / 2:
        raise StepTooLarge(
            f"h*||f(x)|| = {h * np.linalg.norm(fx):.4g} >= r/2 = {set_.r / 2:.4g}")
    return set_.project(x + h * fx)


def semi_implicit_step(set_, f, x, h, fx=None):
    """Re-evaluate f at the projected predictor, then take a catching-up step."""
    pred = catching_up_step(set_, f, x, h, fx)
    return catching_up_step(set_, f, x, h, f(pred))


def integrate(set_, f, x0, cfg, n_steps=None):
    """Integrate on the uniform grid ``t_k = k h`` for ``ceil(T/h)`` steps.

    A failing step raises IntegrationError carrying the partial trajectory.
    """
    step = catching_up_step if cfg.scheme == "catching_up" else semi_implicit_step
    return run_scheme(set_, f, x0, cfg, step, n_steps)


def run_scheme(set_, f, x0, cfg, step, n_steps=None):
    """Drive ``step(set, f, x, h, f(x))`` over the grid and record diagnostics."""
    x0 = as_point(x0, set_.dim)
    _require_member(set_, x0, cfg.tol.tol_mem)
    h, tol = cfg.h, cfg.tol
    N = cfg.n_steps if n_steps is None else int(n_steps)

    states = np.empty((N + 1, set_.dim))
    fnorms = np.empty(N + 1)
    orth = np.empty(N)
    speed = np.empty(N)
    drift = np.empty(N + 1)
    states[0] = x0
    fx = f(x0)
    f0 = float(np.linalg.norm(fx))
    kappa = f.kappa

    def growth(t):
        return f0 * math.exp(kappa * t)

    drift[0] = tol.bound(0.0)
    for k in range(N):
        x = states[k]
        fn = float(np.linalg.norm(fx))
        fnorms[k] = fn
        try:
            x_next = step(set_, f, x, h, fx)
        except Exception as exc:
            partial = _assemble(states[: k + 1], fnorms[: k + 1], orth[:k], speed[:k],
                                drift[: k + 1], h, kappa, set_.r)
            raise IntegrationError(str(exc), k, partial, exc) from exc
        v = (x_next - x) / h
        t = k * h
        orth[k] = abs(float(v @ (fx - v)))
        b = min(fn, growth(t))
        speed[k] = b + tol.bound(b) - float(np.linalg.norm(v))
        states[k + 1] = x_next
        t1 = (k + 1) * h
        bd = t1 * growth(t1)
        drift[k + 1] = bd + tol.bound(bd) - float(np.linalg.norm(x_next - x0))
        fx = f(x_next)
    fnorms[N] = float(np.linalg.norm(fx))
    return _assemble(states, fnorms, orth, speed, drift, h, kappa, set_.r)


def _assemble(states, fnorms, orth, speed, drift, h, kappa, r):
    times = np.arange(len(states)) * h
    vel = np.diff(states, axis=0) / h
    return Trajectory(times, states, vel, fnorms, orth, speed, drift, h, kappa, r)


def right_derivative(set_, f, x, h_fd=None):
    """Minimal-norm element of ``f(x) - N_C(x)``, i.e. the tangent-cone projection of f(x)."""
    x = as_point(x, set_.dim)
    _require_member(set_, x)
    kw = {} if h_fd is None else {"h_fd": h_fd}
    return cone_project(set_, x, f(x), **kw).tangent_part


@dataclass
class OrthogonalityReport:
    residuals: np.ndarray
    max_residual: float
    flagged_steps: list
    tol_orth: float

    @property
    def clean(self):
        return not self.flagged_steps

    def within(self, budget):
        return self.max_residual <= budget


def check_velocity_orthogonality(traj, tol_orth=TOL_ORTH):
    """Per-step ``|<v_k, f(x_k) - v_k>|``; flags steps above ``tol_orth (1 + ||f||^2)``."""
    res = traj.orth_residual
    if res.size == 0:
        raise ValueError("trajectory has no steps")
    thresh = tol_orth * (1.0 + traj.field_norms[:-1] ** 2)
    flagged = [int(k) for k in np.flatnonzero(res > thresh)]
    return OrthogonalityReport(res, float(res.max()), flagged, tol_orth)


@dataclass
class GrowthReport:
    speed_slack: np.ndarray
    drift_slack: np.ndarray
    min_speed_slack: float
    min_drift_slack: float
    flagged_steps: list
    failed_steps: list

    @property
    def strict(self):
        """Every step satisfies the continuous bounds plus tol_bound."""
        return self.min_speed_slack >= 0 and self.min_drift_slack >= 0

    @property
    def passed(self):
        return not self.failed_steps


def check_growth_bounds(traj):
    """Speed bound ``||v_k|| <= min(||f(x_k)||, ||f(x_0)|| e^{kappa t_k})`` and drift bound.

    Steps that miss the continuous bound by less than the discrete allowance
    ``h ||f||^2 / r + kappa h ||f||`` are flagged; larger misses fail.
    """
    if traj.speed_slack.size == 0:
        raise ValueError("trajectory has no steps")
    fn = traj.field_norms[:-1]
    curv = 0.0 if math.isinf(traj.r) else 1.0 / traj.r
    allowance = traj.h * fn ** 2 * curv + traj.kappa * traj.h * fn
    s = traj.speed_slack
    flagged = [int(k) for k in np.flatnonzero((s < 0) & (s >= -allowance))]
    failed = [int(k) for k in np.flatnonzero(s < -allowance)]
    drift_alloc = np.concatenate([[0.0], np.cumsum(allowance) * traj.h])
    d = traj.drift_slack
    flagged += [int(k) for k in np.flatnonzero((d < 0) & (d >= -drift_alloc))]
    failed += [int(k) for k in np.flatnonzero(d < -drift_alloc)]
    return GrowthReport(s, d, float(s.min()), float(d.min()), sorted(set(flagged)),
                        sorted(set(failed)))


def contraction_bound(sep0, t, kappa, f0_sum, r):
    """``sep0 * exp(kappa t + f0_sum (e^{kappa t} - 1) / (kappa r))`` with the kappa -> 0 limit."""
    t = np.asarray(t, dtype=float)
    growth = np.expm1(kappa * t) / kappa if kappa > 0 else t
    extra = 0.0 if math.isinf(r) else f0_sum * growth / r
    return sep0 * np.exp(kappa * t + extra)


@dataclass
class ContractionReport:
    separation: np.ndarray
    bound: np.ndarray
    min_slack: float
    max_ratio: float

    @property
    def passed(self):
        return self.min_slack >= 0


def check_contraction(set_, f, x0, y0, cfg):
    """Integrate from two starts and compare their separation with the contraction bound."""
    tx = integrate(set_, f, x0, cfg)
    ty = integrate(set_, f, y0, cfg)
    sep = np.linalg.norm(tx.states - ty.states, axis=1)
    f0_sum = f.norm(tx.states[0]) + f.norm(ty.states[0])
    bound = contraction_bound(sep[0], tx.times, f.kappa, f0_sum, set_.r)
    slack = bound + cfg.tol.bound_abs + cfg.tol.bound_rel * bound - sep
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, sep / bound, 0.0)
    return ContractionReport(sep, bound, float(slack.min()), float(ratio.max()))


@dataclass
class SemigroupReport:
    discrepancy: float
    steps_first: int
    steps_second: int
    snapped: bool
    tol: float

    @property
    def passed(self):
        return self.discrepancy <= self.tol


def check_semigroup(set_, f, x0, s, t, cfg, tol_sg=1e-12):
    """Compare ``x(t; x(s; x0))`` with ``x(s + t; x0)`` on the step lattice.

    ``s`` and ``t`` are rounded to the nearest multiple of h; ``snapped``
    records whether that changed them by more than rounding noise.
    """
    h = cfg.h
    ks, kt = int(round(s / h)), int(round(t / h))
    snapped = abs(ks * h - s) > 1e-9 * max(1.0, s) or abs(kt * h - t) > 1e-9 * max(1.0, t)
    mid = integrate(set_, f, x0, cfg, n_steps=ks).final
    restarted = integrate(set_, f, mid, cfg, n_steps=kt).final
    direct = integrate(set_, f, x0, cfg, n_steps=ks + kt).final
    gap = float(np.linalg.norm(restarted - direct))
    return SemigroupReport(gap, ks, kt, snapped, tol_sg)


@dataclass
class ConvergenceReport:
    h_list: list
    errors: list
    orders: list
    against_exact: bool

    @property
    def order(self):
        """Smallest observed order; inf when every error sits at round-off level."""
        finite = [p for p in self.orders if np.isfinite(p)]
        if not finite:
            return math.inf if max(self.errors) <= 1e-12 else math.nan
        return min(finite)


def convergence_study(set_, f, x0, T, h_list, exact=None, integrator=None):
    """Sup-norm errors over a list of decreasing step sizes and log-ratio orders.

    With ``exact`` (a map ``t -> x(t)``) errors are measured against it;
    otherwise successive trajectories are compared on the coarser grid.
    ``integrator`` defaults to ``integrate`` and must accept ``(set, f, x0, cfg)``.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 2 or any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must hold at least two strictly decreasing steps")
    for h in h_list:
        if abs(T / h - round(T / h)) > 1e-6:
            raise ValueError(f"h={h:g} does not divide T={T:g}")
    run = integrate if integrator is None else integrator
    trajs = [run(set_, f, x0, IntegratorConfig(h, T)) for h in h_list]
    if exact is not None:
        errors = [float(max(np.linalg.norm(x - exact(t))
                            for t, x in zip(tr.times, tr.states))) for tr in trajs]
        ratios = list(zip(errors, errors[1:], h_list, h_list[1:]))
    else:
        errors = []
        for a, b in zip(trajs, trajs[1:]):
            idx = np.rint(a.times / b.h).astype(int)
            errors.append(float(np.max(np.linalg.norm(a.states - b.states[idx], axis=1))))
        ratios = list(zip(errors, errors[1:], h_list[1:], h_list[2:]))
    orders = []
    for e1, e2, h1, h2 in ratios:
        if e1 <= 1e-12 or e2 <= 1e-12:
            orders.append(math.nan)
        else:
            orders.append(math.log(e1 / e2) / math.log(h1 / h2))
    return ConvergenceReport(h_list, errors, orders, exact is not None)
