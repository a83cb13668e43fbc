"""Set-valued Lur'e systems and Luenberger-like observers.

A Lur'e system ``x' = A x + B u, u in -N_S(D x)`` with a passivity matrix P
(``A^T P + P A <= -delta P``, ``P B = D^T``) becomes, in the coordinates
``z = R x`` with ``R = P^{1/2}``, the inclusion ``z' in R A R^{-1} z - N_{S'}(z)``
over ``S' = (D R^{-1})^{-1}(S)``. Observers are simulated as one inclusion on
``C x C`` driven by the coupled field
``(z, x) -> (f(z) - L(G(z)) + L(G(x)), f(x))``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DimensionMismatch,
    HypothesisViolation,
    NotPD,
    QualificationFailure,
    RadiusViolation,
    SingularMap,
)
from .geometry import LevelSetPolyhedral, LinearPreimage, Product, as_point, cone_project
from .solver import VectorField, affine_field, integrate

TOL_PD = 1e-10
TOL_EQ = 1e-10
TOL_PSD = 1e-9


def _sym_eigmax(M):
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])


@dataclass(frozen=True)
class LipschitzMap:
    """A map between Euclidean spaces with a Lipschitz constant; ``matrix`` when linear."""

    func: object
    kappa: float
    matrix: np.ndarray = None

    def __call__(self, x):
        return np.atleast_1d(np.asarray(self.func(x), dtype=float))


def as_map(obj):
    if isinstance(obj, LipschitzMap):
        return obj
    if isinstance(obj, VectorField):
        return LipschitzMap(obj.func, obj.kappa, obj.matrix)
    if callable(obj):
        raise TypeError("wrap nonlinear maps in LipschitzMap to declare their constant")
    M = np.atleast_2d(np.asarray(obj, dtype=float))
    return LipschitzMap(lambda x: M @ x, float(np.linalg.norm(M, 2)), M)


# -- passivity and the state transformation ------------------------------------

@dataclass
class PassivityReport:
    min_eig_P: float
    equality_residual: float
    lmi_max_eig: float
    pd_ok: bool
    equality_ok: bool
    lmi_ok: bool

    @property
    def passed(self):
        return self.pd_ok and self.equality_ok and self.lmi_ok


def verify_passivity(P, A, B, D, delta, tol_pd=TOL_PD, tol_eq=TOL_EQ, tol_psd=TOL_PSD):
    """Check ``P > 0``, ``P B = D^T`` and ``A^T P + P A + delta P <= 0``."""
    P, A = np.atleast_2d(P).astype(float), np.atleast_2d(A).astype(float)
    B, D = np.atleast_2d(B).astype(float), np.atleast_2d(D).astype(float)
    if not delta > 0:
        raise ValueError("delta must be positive")
    if np.max(np.abs(P - P.T)) > 1e-12 * max(1.0, np.max(np.abs(P))):
        raise ValueError("P must be symmetric")
    min_eig = float(np.linalg.eigvalsh(P)[0])
    eq = float(np.max(np.abs(P @ B - D.T)))
    lmi = _sym_eigmax(A.T @ P + P @ A + delta * P)
    return PassivityReport(min_eig, eq, lmi, min_eig >= tol_pd, eq <= tol_eq, lmi <= tol_psd)


def find_passivity_matrix(A, B, D, delta, seed=0, restarts=8):
    """Search for P on the affine space ``{P = P^T, P B = D^T}`` meeting the LMI.

    Intended for 2x2 and 3x3 systems; returns None when no point passes.
    """
    A = np.atleast_2d(A).astype(float)
    B, D = np.atleast_2d(B).astype(float), np.atleast_2d(D).astype(float)
    n = A.shape[0]
    iu = np.triu_indices(n)
    basis = []
    for i, j in zip(*iu):
        E = np.zeros((n, n))
        E[i, j] = E[j, i] = 1.0
        basis.append(E)
    # P B = D^T is linear in the upper-triangular coordinates of P
    K = np.array([(E @ B).ravel() for E in basis]).T
    p0, *_ = np.linalg.lstsq(K, D.T.ravel(), rcond=None)
    if np.max(np.abs(K @ p0 - D.T.ravel())) > 1e-9:
        return None
    _, s, vt = np.linalg.svd(K)
    null = vt[np.sum(s > 1e-12):].T

    def build(c):
        p = p0 + null @ c
        return sum(pi * E for pi, E in zip(p, basis))

    def score(c):
        P = build(c)
        return max(_sym_eigmax(A.T @ P + P @ A + delta * P),
                   1e-6 - float(np.linalg.eigvalsh(P)[0]))

    if null.shape[1] == 0:
        P = build(np.zeros(0))
        return P if verify_passivity(P, A, B, D, delta).passed else None
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        res = minimize(score, rng.standard_normal(null.shape[1]), method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        P = build(res.x)
        P = 0.5 * (P + P.T)
        if verify_passivity(P, A, B, D, delta).passed:
            return P
    return None


@dataclass
class LureSystem:
    """``x' = A x + B u``, ``u in -N_S(D x)``."""

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    S: object
    x0: np.ndarray = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.D.shape[1] != n:
            raise DimensionMismatch("A, B, D have inconsistent shapes")
        if self.D.shape[0] != self.S.dim or self.B.shape[1] != self.S.dim:
            raise DimensionMismatch("S must live in the output space of D")
        if self.x0 is not None:
            self.x0 = as_point(self.x0, n)

    @property
    def dim(self):
        return self.A.shape[0]

    def range_residual(self, samples):
        """Largest least-squares residual of sampled points of S against range(D)."""
        if len(samples) == 0:
            return 0.0
        X = np.asarray(samples, dtype=float).T
        coef, *_ = np.linalg.lstsq(self.D, X, rcond=None)
        return float(np.max(np.linalg.norm(self.D @ coef - X, axis=0)))


def symmetric_sqrt(P, tol_pd=TOL_PD):
    w, Q = np.linalg.eigh(0.5 * (P + P.T))
    if w[0] < tol_pd:
        raise NotPD(f"P has eigenvalue {w[0]:.3g} below {tol_pd:g}")
    R = (Q * np.sqrt(w)) @ Q.T
    R_inv = (Q / np.sqrt(w)) @ Q.T
    return 0.5 * (R + R.T), 0.5 * (R_inv + R_inv.T)


@dataclass
class TransformedSystem:
    R: np.ndarray
    R_inv: np.ndarray
    field: VectorField
    set_prime: object

    @property
    def r_prime(self):
        return self.set_prime.r

    def forward(self, x):
        return self.R @ x

    def backmap(self, z):
        return self.R_inv @ z


def transform(system, P):
    """Pass to ``z = P^{1/2} x``: field ``R A R^{-1}``, set ``(D R^{-1})^{-1}(S)``."""
    R, R_inv = symmetric_sqrt(np.atleast_2d(np.asarray(P, dtype=float)))
    field = affine_field(R @ system.A @ R_inv, label="lure_transformed")
    return TransformedSystem(R, R_inv, field, LinearPreimage(system.D @ R_inv, system.S))


def stability_radius(system, P, delta, r=None):
    """``delta r sigma_min^+(D R^{-1}) / (2 ||R^{-1}|| ||D R^{-1}|| ||R A R^{-1}||)``."""
    ts = transform(system, P)
    r = system.S.r if r is None else r
    DRi = system.D @ ts.R_inv
    sv = np.linalg.svd(DRi, compute_uv=False)
    if sv[0] == 0:
        raise SingularMap("D R^{-1} is zero")
    sigma_plus = float(sv[sv > 1e-12 * sv[0]][-1])
    field_norm = float(np.linalg.norm(ts.R @ system.A @ ts.R_inv, 2))
    if math.isinf(r) or field_norm == 0:
        return math.inf
    denom = 2 * float(np.linalg.norm(ts.R_inv, 2)) * float(sv[0]) * field_norm
    return delta * r * sigma_plus / denom


@dataclass
class LureRun:
    trajectory: object
    states: np.ndarray
    bound: np.ndarray
    radius: float
    max_excess: float

    @property
    def passed(self):
        return self.max_excess <= 0


def simulate_lure(system, P, cfg, delta, x0=None, tol=1e-12):
    """Integrate in z-coordinates and map back; compare with the proven decay envelope.

    The envelope is ``||R|| ||R^{-1}|| ||x_0|| e^{-delta t / 4}``.
    """
    x0 = system.x0 if x0 is None else as_point(x0, system.dim)
    if x0 is None:
        raise ValueError("no initial point")
    ts = transform(system, P)
    rho = stability_radius(system, P, delta)
    if not np.linalg.norm(x0) < rho:
        raise RadiusViolation(f"||x0|| = {np.linalg.norm(x0):.6g} >= rho = {rho:.6g}")
    if not system.S.contains(system.D @ x0):
        raise RadiusViolation("D x0 is not in S")
    traj = integrate(ts.set_prime, ts.field, ts.forward(x0), cfg)
    xs = traj.states @ ts.R_inv.T
    cond = float(np.linalg.norm(ts.R, 2) * np.linalg.norm(ts.R_inv, 2))
    bound = cond * np.linalg.norm(x0) * np.exp(-delta * traj.times / 4) + tol
    excess = float(np.max(np.linalg.norm(xs, axis=1) - bound))
    return LureRun(traj, xs, bound, rho, excess)


def lure_inclusion_residual(system, states, h):
    """Per-step residual of ``(x_{k+1}-x_k)/h - A x_k`` against ``B (-N_S(D x_{k+1}))``.

    Returns the largest of the least-squares residual in range(B) and the
    distance of ``-u_k`` to the normal cone of S at ``D x_{k+1}``.
    """
    worst = 0.0
    B_pinv = np.linalg.pinv(system.B)
    for xk, xn in zip(states[:-1], states[1:]):
        w = (xn - xk) / h - system.A @ xk
        u = B_pinv @ w
        span = np.linalg.norm(system.B @ u - w)
        cone = np.linalg.norm(cone_project(system.S, system.D @ xn, -u).tangent_part)
        worst = max(worst, float(span), float(cone))
    return worst


# -- observers ------------------------------------------------------------------

def build_coupled_field(f, Lmap, Gmap, dim=None):
    """Field on ``R^{2n}`` for the pair (observer, plant) with output injection.

    ``dim`` is needed only when f is not affine.
    """
    if dim is None:
        if f.matrix is None:
            raise DimensionMismatch("pass dim for a nonlinear plant field")
        dim = f.matrix.shape[0]
    return _coupled(f, as_map(Lmap), as_map(Gmap), dim)


def _coupled(f, L, G, n):
    probe = G(np.zeros(n))
    if L(probe).size != n:
        raise DimensionMismatch(f"L o G maps R^{n} to R^{L(probe).size}")
    kappa = f.kappa + 2 * L.kappa * G.kappa
    if f.matrix is not None and L.matrix is not None and G.matrix is not None:
        LG = L.matrix @ G.matrix
        A = f.matrix
        big = np.block([[A - LG, LG], [np.zeros_like(A), A]])
        b = np.concatenate([f.offset, f.offset])
        return VectorField(lambda y: big @ y + b, kappa, "coupled", big, b)

    def func(y):
        z, x = y[:n], y[n:]
        return np.concatenate([f(z) - L(G(z)) + L(G(x)), f(x)])

    return VectorField(func, kappa, "coupled")


@dataclass
class ObserverSetup:
    G: object
    L: object
    delta: float
    epsilon: float
    eta: float
    m: float = None
    M: float = None

    def __post_init__(self):
        for name in ("delta", "epsilon", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def beta(self, r):
        return self.delta if math.isinf(r) else self.delta - (self.M + self.epsilon) / r


def field_bound(f, radius, dim, n=2000, seed=0):
    """``sup ||f||`` over ``B(0, radius)``: exact for affine fields, sampled otherwise."""
    if f.matrix is not None:
        return float(np.linalg.norm(f.matrix, 2) * radius + np.linalg.norm(f.offset))
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((n, dim))
    u *= (radius * rng.uniform(0, 1, n) ** (1 / dim) / np.linalg.norm(u, axis=1))[:, None]
    return 1.1 * max(np.linalg.norm(f(p)) for p in u)


def estimate_bounds(setC, f, x0, cfg, safety=0.1):
    """State bound m from a preliminary plant run and the field bound M on B(0, m)."""
    traj = integrate(setC, f, x0, cfg)
    m = (1 + safety) * float(np.max(np.linalg.norm(traj.states, axis=1)))
    return m, field_bound(f, m, setC.dim)


@dataclass
class Check:
    name: str
    margin: float
    passed: bool


def validate_observer(setC, f, Lmap, Gmap, x0, z0, setup, n_pairs=400, seed=42):
    """Evaluate every hypothesis of the convergence result; returns the list of checks."""
    L, G = as_map(Lmap), as_map(Gmap)
    x0, z0 = as_point(x0, setC.dim), as_point(z0, setC.dim)
    r, kappa = setC.r, f.kappa
    d, eps, eta, m, M = setup.delta, setup.epsilon, setup.eta, setup.m, setup.M
    checks = []
    eta_cap = math.inf if kappa == 0 else eps / (6 * kappa)
    start = min(eta - float(np.linalg.norm(z0 - x0)), eta_cap * (1 + 1e-12) - eta)
    feasible = setC.contains(x0) and setC.contains(z0)
    checks.append(Check("eta_guard", start, start >= 0 and feasible))
    budget = math.inf if math.isinf(r) else d * r - M - eps
    checks.append(Check("radius_budget", budget, budget > 0))
    beta = setup.beta(r)
    checks.append(Check("beta_positive", beta, beta > 0))

    LG_kappa = L.kappa * G.kappa
    if math.isfinite(LG_kappa):
        osc = eps * (1 + 1e-12) - 3 * eta * LG_kappa
    else:
        osc = math.inf
    checks.append(Check("injection_oscillation", osc, osc >= 0))

    dim = setC.dim
    if f.matrix is not None and L.matrix is not None and G.matrix is not None:
        diss = -_sym_eigmax(f.matrix - L.matrix @ G.matrix + d * np.eye(dim))
    else:
        rng = np.random.default_rng(seed)
        rad = m + 3 * eta
        diss = math.inf
        for _ in range(n_pairs):
            a, b = (rad * rng.uniform(-1, 1, dim) / math.sqrt(dim) for _ in range(2))
            dx = a - b
            q = float(dx @ dx)
            if q < 1e-14:
                continue
            val = float(dx @ ((f(a) - L(G(a))) - (f(b) - L(G(b))))) + d * q
            diss = min(diss, -val / q)
    checks.append(Check("strong_dissipativity", diss, diss >= -TOL_PSD))
    return checks


@dataclass
class ObserverReport:
    times: np.ndarray
    errors: np.ndarray
    bound: np.ndarray
    plant: np.ndarray
    estimate: np.ndarray
    beta: float
    slope: float
    checks: list
    pointwise_ok: bool

    @property
    def rate_ok(self):
        return self.slope <= -self.beta / 2 + 0.05

    @property
    def passed(self):
        return self.pointwise_ok and self.rate_ok and all(c.passed for c in self.checks)

    def to_csv(self, path):
        n = self.plant.shape[1]
        header = ",".join(["t", "e", "bound"] + [f"x_{i}" for i in range(n)]
                          + [f"xhat_{i}" for i in range(n)])
        data = np.column_stack([self.times, self.errors, self.bound, self.plant, self.estimate])
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")


def fit_log_slope(times, errors, skip=0.05, floor=1e-10):
    """Least-squares slope of ``log e`` against t, skipping the first ``skip`` fraction."""
    start = int(math.ceil(skip * len(times)))
    t, e = times[start:], errors[start:]
    keep = e > floor
    if keep.sum() < 2:
        return -math.inf
    return float(np.polyfit(t[keep], np.log(e[keep]), 1)[0])


def observer_run(setC, f, Lmap, Gmap, x0, z0, setup, cfg, rel_tol=1e-3, tol_obs=1e-12):
    """Simulate plant and observer on ``C x C`` and test the exponential error bound.

    Raises HypothesisViolation naming the first failed hypothesis, including
    the online check that the plant stays in ``B(0, m)``.
    """
    x0, z0 = as_point(x0, setC.dim), as_point(z0, setC.dim)
    if setup.m is None or setup.M is None:
        m, M = estimate_bounds(setC, f, x0, cfg)
        setup = ObserverSetup(setup.G, setup.L, setup.delta, setup.epsilon, setup.eta,
                              setup.m if setup.m is not None else m,
                              setup.M if setup.M is not None else M)
    checks = validate_observer(setC, f, Lmap, Gmap, x0, z0, setup)
    for c in checks:
        if not c.passed:
            raise HypothesisViolation(c.name, f"margin {c.margin:.6g}")
    n = setC.dim
    big = Product(setC, setC)
    F = build_coupled_field(f, Lmap, Gmap, n)
    traj = integrate(big, F, np.concatenate([z0, x0]), cfg)
    est, plant = traj.states[:, :n], traj.states[:, n:]
    peak = float(np.max(np.linalg.norm(plant, axis=1)))
    bound_check = Check("plant_bound", setup.m - peak, peak <= setup.m)
    checks.append(bound_check)
    if not bound_check.passed:
        raise HypothesisViolation("plant_bound", f"plant reached {peak:.6g} > m = {setup.m:.6g}")
    err = np.linalg.norm(est - plant, axis=1)
    beta = setup.beta(setC.r)
    bound = err[0] * np.exp(-beta * traj.times / 2)
    ok = bool(np.all(err <= bound * (1 + rel_tol) + tol_obs))
    slope = fit_log_slope(traj.times, err)
    return ObserverReport(traj.times, err, bound, plant, est, beta, slope, checks, ok)


@dataclass
class GainReport:
    max_eig: float
    passed: bool
    eta: float = None


def design_linear_gain(A, G, rho, delta, epsilon=None):
    """``L = rho G^T`` with the spectral test ``(A + A^T)/2 - rho G^T G + delta I <= 0``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    A, G = np.atleast_2d(A).astype(float), np.atleast_2d(G).astype(float)
    L = rho * G.T
    M = 0.5 * (A + A.T) - rho * G.T @ G + delta * np.eye(A.shape[0])
    top = float(np.linalg.eigvalsh(M)[-1])
    eta = None
    if epsilon is not None:
        nA, nLG = np.linalg.norm(A, 2), np.linalg.norm(L @ G, 2)
        eta = float(min(epsilon / (6 * nA) if nA > 0 else math.inf,
                  epsilon / (3 * nLG) if nLG > 0 else math.inf))
    return L, GainReport(top, top <= TOL_PSD, eta)


# -- complementarity systems -------------------------------------------------------

@dataclass
class ComplementarityReport:
    multipliers: np.ndarray
    constraint_values: np.ndarray
    min_multiplier: float
    min_constraint: float
    max_product: float
    activation_time: float
    extras: dict = field(default_factory=dict)

    def passed(self, tol=1e-5):
        return (self.min_multiplier >= -tol and self.min_constraint >= -tol
                and self.max_product <= tol)


def ndcs_build(f, H, c, activation_tol=1e-8):
    """Constraint set ``{H x + c >= 0}`` and a multiplier extractor for trajectories on it.

    The extractor solves ``H^T lam_k = v_k - f(x_k)`` in the least-squares
    sense and evaluates complementarity against ``g(x_{k+1}) = H x_{k+1} + c``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if np.linalg.matrix_rank(H) < H.shape[0]:
        raise QualificationFailure("constraint gradients are not surjective")
    setC = LevelSetPolyhedral(H, c)

    def extract(traj):
        fx = np.array([f(x) for x in traj.states[:-1]])
        rhs = (traj.velocities - fx).T
        lam = np.linalg.lstsq(H.T, rhs, rcond=None)[0].T
        g = traj.states[1:] @ H.T + setC.c
        prod = np.abs(np.sum(lam * g, axis=1))
        active = np.flatnonzero(np.any(lam > activation_tol, axis=1))
        t_act = float(traj.times[active[0]]) if active.size else math.inf
        return ComplementarityReport(lam, g, float(lam.min()), float(g.min()),
                                     float(prod.max()), t_act)

    return setC, extract
