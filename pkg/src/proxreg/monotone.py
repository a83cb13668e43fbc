"""Maximal-monotone reformulation of the inclusion and its implicit Euler scheme.

On C the shifted operator satisfies

    N_C(x) ∩ B(0, m) + (m/r) x  ⊆  A(x)  ⊆  N_C(x) + (m/r) x,

so as long as the normal-cone selections of a solution stay inside B(0, m)
the resolvent ``(I + lam A)^{-1}`` can be evaluated from the projection alone.
"""

from dataclasses import dataclass
import itertools
import math

import numpy as np
from scipy.optimize import minimize

from .errors import CapSearchOverflow, NoSolutionInGrid, TubeViolation
from .geometry import as_point, cone_project
from .solver import integrate, run_scheme

CAP_START = 2.0 ** -10
CAP_MAX = 1e9
RESIDUAL_FLOOR = 1e-6


@dataclass(frozen=True)
class ShiftedOperator:
    set: object
    m: float

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("cap m must be positive")

    @property
    def r(self):
        return self.set.r

    @property
    def shift(self):
        """The coefficient m/r of the identity shift (0 for convex sets)."""
        return 0.0 if math.isinf(self.r) else self.m / self.r

    def capped_normal(self, x, w):
        """Normal-cone part of ``w`` at x, clipped to the ball of radius m."""
        n = cone_project(self.set, x, w).normal_part
        nn = np.linalg.norm(n)
        return n if nn <= self.m else n * (self.m / nn)

    def graph_residual(self, x, y):
        """Distance from ``y`` to the inner sandwich ``N_C(x) ∩ B(0,m) + (m/r) x``."""
        x, y = as_point(x, self.set.dim), as_point(y, self.set.dim)
        w = y - self.shift * x
        return float(np.linalg.norm(w - self.capped_normal(x, w)))


@dataclass(frozen=True)
class CapChoice:
    m: float
    T0: float
    pieces: int


def cap_inequality(m, f_norm, kappa, r, T0):
    """Left-hand side ``F + kappa (F T0 e^{(kappa + m/r) T0} + 1)`` of the cap condition."""
    shift = 0.0 if math.isinf(r) else m / r
    return f_norm + kappa * (f_norm * T0 * math.exp((kappa + shift) * T0) + 1.0)


def choose_cap(set_, f, x0, T, max_halvings=40):
    """Smallest doubling candidate m satisfying the cap inequality.

    Each m is first tried on the whole horizon with ``||f(x0)||``. Failing
    that, the horizon is cut into pieces of length T0 (halving T0) and the
    inequality is required with the worst-case field norm
    ``||f(x0)|| e^{kappa T}`` reachable at the start of any piece.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    x0 = as_point(x0, set_.dim)
    f0 = f.norm(x0)
    kappa, r = f.kappa, set_.r
    worst = f0 * math.exp(kappa * T)
    m = CAP_START
    while m <= CAP_MAX:
        if cap_inequality(m, f0, kappa, r, T) <= m:
            return CapChoice(m, T, 1)
        T0 = T
        for _ in range(max_halvings):
            T0 /= 2
            if cap_inequality(m, worst, kappa, r, T0) <= m:
                return CapChoice(m, T0, int(math.ceil(T / T0 - 1e-9)))
        m *= 2
    raise CapSearchOverflow(f"no cap m <= {CAP_MAX:g} satisfies the inequality")


def _merit(op, lam, z, mu, x):
    w = (z - mu * x) / lam
    return lam * float(np.linalg.norm(w - op.capped_normal(x, w)))


def _grid(center, radius, dim):
    per_axis = {1: 2001, 2: 101, 3: 31}[dim]
    axis = np.linspace(-radius, radius, per_axis)
    return (center + np.array(p) for p in itertools.product(axis, repeat=dim))


def resolvent(op, lam, z, method="auto"):
    """Solve ``z ∈ x + lam A(x)`` for x on C.

    On a convex set this is the projection. Otherwise the closed form
    ``x = P_C(z / mu)`` with ``mu = 1 + lam m / r`` is
    accepted when the implied normal ``(z - mu x) / lam`` has norm at most m.
    Failing that (or with ``method="search"``) a grid over the admissible ball
    ``B(z/mu, lam m/mu)`` projected onto C is scanned and the best points are
    refined with Nelder-Mead.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    set_ = op.set
    z = as_point(z, set_.dim)
    if set_.convex and method != "search":
        # N_C is maximal monotone itself, so the cap never binds
        return set_.project(z)
    mu = 1.0 + lam * op.shift
    if method in ("auto", "closed"):
        try:
            x = set_.project(z / mu)
            n = (z - mu * x) / lam
            if np.linalg.norm(n) <= op.m * (1 + 1e-12):
                return x
        except TubeViolation:
            pass
        if method == "closed":
            raise NoSolutionInGrid("closed form rejected: implied normal exceeds the cap")
    if set_.dim > 3:
        raise ValueError("resolvent search is limited to dimension <= 3")

    center, radius = z / mu, max(lam * op.m / mu, 1e-6)
    cands = {}
    for p in _grid(center, 1.5 * radius, set_.dim):
        try:
            x = set_.project(p)
        except TubeViolation:
            continue
        key = tuple(np.round(x, 12))
        if key not in cands:
            cands[key] = (_merit(op, lam, z, mu, x), x)
    if not cands:
        raise NoSolutionInGrid("no admissible grid point", None, math.inf)
    ranked = sorted(cands.values(), key=lambda item: (item[0], tuple(item[1])))
    best_val, best = ranked[0]
    for val, x in ranked[:5]:
        if best_val <= 1e-10:
            break

        def objective(y):
            try:
                return _merit(op, lam, z, mu, set_.project(y))
            except TubeViolation:
                return math.inf

        res = minimize(objective, x, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-13, "maxiter": 4000})
        if res.fun < best_val:
            best_val, best = float(res.fun), set_.project(res.x)
    if best_val > RESIDUAL_FLOOR:
        raise NoSolutionInGrid(
            f"resolvent residual floor {best_val:.3g} exceeds {RESIDUAL_FLOOR:g}; "
            "the cap m is probably too small", best, best_val)
    return best


def dim_integrate(set_, f, x0, cfg, m):
    """Implicit Euler on the shifted form: ``x_{k+1} = J_h(x_k + h (f(x_k) + (m/r) x_k))``."""
    op = ShiftedOperator(set_, m)

    def step(s, field, x, h, fx):
        return resolvent(op, h, x + h * (fx + op.shift * x))

    return run_scheme(set_, f, x0, cfg, step)


@dataclass
class EquivalenceReport:
    times: np.ndarray
    gap: np.ndarray
    sup_gap: float
    h: float
    c_eq: float
    cap: CapChoice
    infeasible_steps: list

    @property
    def passed(self):
        return self.sup_gap <= self.c_eq * self.h and not self.infeasible_steps

    def verdict(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"equivalence: {status} sup_gap={self.sup_gap:.6g} "
                f"limit={self.c_eq * self.h:.6g} m={self.cap.m:g}")

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.times, self.gap]), fmt="%.17g",
                   delimiter=",", header="t,gap", comments="")


def equivalence_check(set_, f, x0, cfg, c_eq=10.0):
    """Run catching-up and the resolvent scheme side by side and compare them."""
    cap = choose_cap(set_, f, x0, cfg.T)
    explicit = integrate(set_, f, x0, cfg)
    implicit = dim_integrate(set_, f, x0, cfg, cap.m)
    gap = np.linalg.norm(explicit.states - implicit.states, axis=1)
    bad = [k for k, x in enumerate(implicit.states) if not set_.contains(x, cfg.tol.tol_mem)]
    return EquivalenceReport(explicit.times, gap, float(gap.max()), cfg.h, c_eq, cap, bad)
