"""Sampled certification of a-Lyapunov pairs and invariant sets.

A pair (V, W) with rate a is certified at a point x of dom V by the margin

    <grad V(x), d(x)> + a V(x) + W(x),   d(x) = minimal-norm element of f(x) - N_C(x),

which must be nonpositive. V is either smooth on C (dom V = C) or
``smooth + indicator of S`` for a prox-regular S, in which case directions
leaving S make the margin infinite. Certification is a sampled sufficient
check and never a proof of necessity.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.stats import qmc

from .errors import ConditionFailed, DomainViolation, SubsetViolation
from .geometry import TOL_MEM, as_point, cone_project, sample_boundary, sample_points
from .solver import IntegratorConfig, integrate, right_derivative

BAND = 1e-6
TOL_TANGENT = 1e-6

CERTIFIED, VIOLATED, INCONCLUSIVE = "Certified", "Violated", "Inconclusive"


@dataclass(frozen=True)
class LyapunovCandidate:
    """``V`` with gradient ``grad``, dissipation ``W >= 0`` and rate ``a``.

    ``domain=None`` means dom V = C. A ProxSet S means V is the smooth part
    plus the indicator of S, and S must lie inside C.
    """

    V: object
    grad: object
    W: object = None
    a: float = 0.0
    domain: object = None
    label: str = "candidate"

    def __post_init__(self):
        if not self.a >= 0:
            raise ValueError("decay rate a must be nonnegative")

    def value(self, x):
        return float(self.V(x))

    def dissipation(self, x):
        if self.W is None:
            return 0.0
        w = float(self.W(x))
        if w < 0:
            raise ValueError(f"W must be nonnegative, got {w} at {x}")
        return w


def quadratic_candidate(a=0.0, W=None, domain=None):
    """``V(x) = ||x||^2 / 2``."""
    return LyapunovCandidate(lambda x: 0.5 * float(x @ x), lambda x: np.asarray(x, float),
                             W, a, domain, "half_norm_squared")


def linear_candidate(c, a=0.0, W=None, domain=None):
    """``V(x) = <c, x>``."""
    c = as_point(c)
    return LyapunovCandidate(lambda x: float(c @ x), lambda x: c, W, a, domain, "linear")


def indicator_candidate(S, a=0.0, W=None):
    """``V = I_S``: zero on S, +inf elsewhere."""
    dim = S.dim
    return LyapunovCandidate(lambda x: 0.0, lambda x: np.zeros(dim), W, a, S, "indicator")


def check_domain(set_, cand, n=64, seed=42):
    """Reject candidates whose domain has sampled points outside C."""
    if cand.domain is None:
        return
    S = cand.domain
    pts = sample_points(S, n, np.random.default_rng(seed))
    for p in pts:
        if not set_.contains(p):
            raise DomainViolation(
                f"dom V is not contained in C: sample {np.round(p, 6).tolist()} lies outside")


def pointwise_certificate(set_, f, cand, x, guard=True):
    """Criterion margin at x; nonpositive values certify the point."""
    x = as_point(x, set_.dim)
    if not set_.contains(x):
        raise DomainViolation(f"{x} is not in C")
    if guard:
        check_domain(set_, cand)
    d = right_derivative(set_, f, x)
    if cand.domain is not None:
        if not cand.domain.contains(x):
            raise DomainViolation(f"{x} is not in dom V")
        leave = cone_project(cand.domain, x, d).normal_part
        if np.linalg.norm(leave) > TOL_TANGENT * (1.0 + np.linalg.norm(d)):
            return math.inf
    return float(np.asarray(cand.grad(x)) @ d) + cand.a * cand.value(x) + cand.dissipation(x)


@dataclass(frozen=True)
class SamplerSpec:
    method: str = "grid"
    spacing: float = 0.05
    n: int = 256
    bounds: tuple = None
    seed: int = 42
    include_boundary: bool = True
    n_boundary: int = 64

    def __post_init__(self):
        if self.method not in ("grid", "sobol", "random"):
            raise ValueError(f"unknown sampler {self.method!r}")
        if not self.spacing > 0 or self.n < 1:
            raise ValueError("sampler density must be positive")


def draw_samples(target, spec):
    """Points of ``target`` per the sampler spec, sorted lexicographically."""
    rng = np.random.default_rng(spec.seed)
    if spec.bounds is None:
        lo, hi = target.sample_box()
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in spec.bounds)
    dim = target.dim
    if spec.method == "grid":
        axes = [np.arange(l + spec.spacing / 2, u, spec.spacing) for l, u in zip(lo, hi)]
        raw = np.array(np.meshgrid(*axes, indexing="ij")).reshape(dim, -1).T
    elif spec.method == "sobol":
        unit = qmc.Sobol(dim, scramble=True, seed=spec.seed).random(spec.n)
        raw = qmc.scale(unit, lo, hi) if np.all(hi > lo) else lo + unit * (hi - lo)
    else:
        raw = rng.uniform(lo, hi, size=(spec.n, dim))
    pts = [p for p in raw if target.contains(p)]
    if spec.include_boundary or not pts:
        try:
            pts.extend(sample_boundary(target, spec.n_boundary, rng, (lo, hi)))
        except RuntimeError:
            # the sampling box does not reach the boundary
            if not pts:
                raise
    pts = np.array(pts).reshape(-1, dim)
    order = np.lexsort(pts.T[::-1])
    return pts[order]


@dataclass
class CertificateReport:
    points: np.ndarray
    margins: np.ndarray
    verdict: str
    criterion: str
    tol_cert: float
    witness: np.ndarray = None
    worst_margin: float = -math.inf
    extras: dict = field(default_factory=dict)

    @property
    def certified(self):
        return self.verdict == CERTIFIED

    def to_text(self):
        lines = [f"verdict: {self.verdict}", f"criterion: {self.criterion}",
                 f"samples: {len(self.points)}", f"worst_margin: {self.worst_margin:.6g}",
                 f"tol_cert: {self.tol_cert:g}"]
        if self.witness is not None:
            lines.append("witness: " + ", ".join(f"{v:.6g}" for v in self.witness))
        lines += [f"{k}: {v}" for k, v in self.extras.items()]
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        dim = self.points.shape[1]
        header = ",".join([f"x_{i}" for i in range(dim)] + ["margin"])
        np.savetxt(path, np.column_stack([self.points, self.margins]), fmt="%.17g",
                   delimiter=",", header=header, comments="")


def _classify(points, margins, tol_cert, criterion, extras=None):
    i = int(np.argmax(margins))  # points are sorted, so ties go to the lexicographically first
    worst = float(margins[i])
    if worst > BAND:
        verdict, witness = VIOLATED, points[i]
    elif worst <= tol_cert:
        verdict, witness = CERTIFIED, None
    else:
        verdict, witness = INCONCLUSIVE, None
    return CertificateReport(points, margins, verdict, criterion, tol_cert, witness, worst,
                             extras or {})


def certify_on_samples(set_, f, cand, spec=SamplerSpec(), strict=False):
    """Evaluate the pointwise criterion over sampled points of dom V.

    The default acceptance band is ``margin <= 1e-6``; ``strict=True`` asks
    for ``margin <= -1e-6``. Margins above 1e-6 give Violated with the worst
    point as witness, anything in between is Inconclusive.
    """
    check_domain(set_, cand)
    target = set_ if cand.domain is None else cand.domain
    pts = draw_samples(target, spec)
    margins = np.array([pointwise_certificate(set_, f, cand, p, guard=False) for p in pts])
    tol_cert = -BAND if strict else BAND
    criterion = "smooth" if cand.domain is None else "smooth_plus_indicator"
    return _classify(pts, margins, tol_cert, criterion)


@dataclass
class DecayReport:
    values: np.ndarray
    max_increase: float
    max_excess: float
    tol_dec: float

    @property
    def passed(self):
        return self.max_increase <= self.tol_dec and self.max_excess <= self.tol_dec


def trajectory_decay_check(traj, cand, tol_dec=1e-4, rule="left"):
    """``D_k = e^{a t_k} V(x_k) + integral of W`` must be nonincreasing and stay below ``D_0``."""
    if rule not in ("left", "trapezoid"):
        raise ValueError("rule must be 'left' or 'trapezoid'")
    V = np.array([cand.value(x) for x in traj.states])
    W = np.array([cand.dissipation(x) for x in traj.states])
    h = traj.h
    pieces = h * (W[:-1] if rule == "left" else 0.5 * (W[:-1] + W[1:]))
    D = np.exp(cand.a * traj.times) * V + np.concatenate([[0.0], np.cumsum(pieces)])
    inc = float(np.max(np.diff(D))) if len(D) > 1 else 0.0
    return DecayReport(D, inc, float(np.max(D - D[0])), tol_dec)


def invariance_certificate(set_, subset, f, spec=SamplerSpec(), tol_cert=TOL_TANGENT,
                           n_normals=4):
    """Check that the minimal-norm velocity is tangent to S at sampled points of S.

    The primary test is ``||P_{N_S(x)}(d)|| <= tol_cert``; a secondary vote
    checks ``<xi, d> <= tol_cert`` for unit normals xi of S.
    """
    pts = draw_samples(subset, spec)
    for p in pts:
        if not set_.contains(p):
            raise SubsetViolation(f"sample {np.round(p, 6).tolist()} of S is not in C")
    rng = np.random.default_rng(spec.seed)
    margins, votes = [], []
    for p in pts:
        d = right_derivative(set_, f, p)
        margins.append(float(np.linalg.norm(cone_project(subset, p, d).normal_part)))
        normals = []
        gens = subset.normal_generators(p)
        if gens is not None:
            normals += list(gens)
        for _ in range(n_normals):
            normals.append(cone_project(subset, p, rng.standard_normal(subset.dim)).normal_part)
        vote = max((float(n @ d) / np.linalg.norm(n) for n in normals
                    if np.linalg.norm(n) > 1e-12), default=0.0)
        votes.append(vote)
    margins = np.array(margins)
    votes = np.array(votes)
    rep = _classify(pts, margins, tol_cert, "tangency")
    rep.extras["dual_vote_max"] = float(votes.max())
    rep.extras["dual_vote_agrees"] = bool((votes.max() <= tol_cert) == rep.certified)
    return rep


@dataclass
class RadiusReport:
    radius: float
    condition_margin: float
    starts: np.ndarray
    max_ratio: float
    passed: bool


def lyapunov_radius_check(set_, f, delta, epsilon, L, n_starts=10, cfg=None, seed=42,
                          spacing=0.05, rel_tol=1e-3):
    """Check ``<x, f(x)> + delta ||x||^2 <= 0`` on C ∩ B(0, eps), then the decay it implies.

    Starts are drawn from the open ball of radius ``min(r delta / L, eps)``
    and must satisfy ``||x_k|| <= ||x_0|| e^{-delta t_k / 2} (1 + rel_tol)``.
    """
    if not (delta > 0 and epsilon > 0 and L > 0):
        raise ValueError("delta, epsilon and L must be positive")
    origin = np.zeros(set_.dim)
    if not set_.contains(origin) or np.linalg.norm(f(origin)) > 1e-12:
        raise ValueError("need 0 in C and f(0) = 0")
    spec = SamplerSpec("grid", spacing, bounds=(-epsilon * np.ones(set_.dim),
                                                epsilon * np.ones(set_.dim)))
    pts = [p for p in draw_samples(set_, spec) if np.linalg.norm(p) <= epsilon]
    worst, witness = -math.inf, None
    for p in pts:
        c = float(p @ f(p)) + delta * float(p @ p)
        if c > worst:
            worst, witness = c, p
        if c > 1e-9 * (1.0 + float(p @ p)):
            raise ConditionFailed(
                f"<x, f(x)> + delta ||x||^2 = {c:.6g} > 0 at {np.round(p, 6).tolist()}",
                p, c)
    radius = epsilon if math.isinf(set_.r) else min(set_.r * delta / L, epsilon)
    rng = np.random.default_rng(seed)
    starts = []
    while len(starts) < n_starts:
        u = rng.standard_normal(set_.dim)
        p = u / np.linalg.norm(u) * radius * rng.uniform(0.05, 0.99)
        if set_.contains(p):
            starts.append(p)
    cfg = IntegratorConfig(1e-3, 5.0) if cfg is None else cfg
    max_ratio = 0.0
    for p in starts:
        tr = integrate(set_, f, p, cfg)
        env = np.linalg.norm(p) * np.exp(-delta * tr.times / 2)
        max_ratio = max(max_ratio, float(np.max(np.linalg.norm(tr.states, axis=1) / env)))
    return RadiusReport(radius, worst, np.array(starts), max_ratio, max_ratio <= 1 + rel_tol)
