"""Uniformly prox-regular sets in R^n and their projection oracles.

Every set exposes a nearest-point projection, the prox-regularity constant
``r`` (``inf`` for convex sets) and, where the boundary is piecewise smooth,
a finite list of generators of the normal cone at a point. Cone projections
use the generators when available and fall back to a finite difference of
the projection otherwise.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import nnls

from .errors import (
    DimensionMismatch,
    NonconvergedFD,
    QualificationFailure,
    SingularMap,
    TubeViolation,
)

TOL_MEM = 1e-9
TOL_BOUNDARY = 1e-7
TOL_ORTH = 1e-6
H_FD = 1e-5

__all__ = [
    "Ball", "Box", "Orthant", "Sphere", "SphereShell", "BallComplement",
    "LinearPreimage", "Product", "LevelSetPolyhedral", "ProxSet",
    "ConeProjection", "HypomonotonicityReport", "as_point", "project",
    "distance", "contains", "cone_project", "prox_constant",
    "hypomonotonicity_check", "sample_points", "sample_boundary",
    "set_from_dict",
]


def as_point(x, dim=None):
    """Coerce ``x`` to a finite 1-D float array, optionally of length ``dim``."""
    p = np.asarray(x, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1)
    if p.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {p.shape[0]}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite coordinates")
    return p


def _list(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


class ProxSet:
    """A closed r-uniformly prox-regular subset of R^n."""

    kind = "abstract"
    dim = 0

    @property
    def r(self):
        raise NotImplementedError

    @property
    def convex(self):
        return math.isinf(self.r)

    def project(self, x):
        raise NotImplementedError

    def distance(self, x):
        x = as_point(x, self.dim)
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, x, tol=TOL_MEM):
        try:
            return self.distance(x) <= tol
        except TubeViolation:
            return False

    def normal_generators(self, x):
        """Rows spanning N_C(x) as a convex cone, or None if unknown."""
        return None

    def sample_box(self):
        """Finite (lower, upper) box used by the generic samplers."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    def __repr__(self):
        fields = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "kind")
        return f"{type(self).__name__}({fields})"


class _RadialSet(ProxSet):
    """Shared machinery for sets described by the distance to a center."""

    def __init__(self, center):
        self.center = as_point(center)
        self.dim = self.center.size

    def _radial(self, x):
        x = as_point(x, self.dim)
        d = x - self.center
        return x, d, float(np.linalg.norm(d))

    def _onto_radius(self, d, n, radius):
        if n == 0.0:
            raise TubeViolation(f"{self.kind}: projection of the center is not unique")
        return self.center + d * (radius / n)


class Ball(_RadialSet):
    kind = "ball"

    def __init__(self, center, radius):
        super().__init__(center)
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)

    @property
    def r(self):
        return math.inf

    def project(self, x):
        x, d, n = self._radial(x)
        if n <= self.radius:
            return x
        return self.center + d * (self.radius / n)

    def distance(self, x):
        _, _, n = self._radial(x)
        return max(n - self.radius, 0.0)

    def normal_generators(self, x):
        _, d, n = self._radial(x)
        if n > 0 and n > self.radius - TOL_BOUNDARY:
            return (d / n)[None, :]
        return np.zeros((0, self.dim))

    def sample_box(self):
        return self.center - self.radius, self.center + self.radius

    def to_dict(self):
        return {"kind": self.kind, "center": _list(self.center), "radius": self.radius,
                "dim": self.dim}


class Sphere(_RadialSet):
    """The sphere ``{x : ||x - c|| = R}``; prox-regular with constant R."""

    kind = "sphere"

    def __init__(self, center, radius):
        super().__init__(center)
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)

    @property
    def r(self):
        return self.radius

    def project(self, x):
        _, d, n = self._radial(x)
        return self._onto_radius(d, n, self.radius)

    def distance(self, x):
        _, _, n = self._radial(x)
        return abs(n - self.radius)

    def normal_generators(self, x):
        _, d, n = self._radial(x)
        if n == 0.0:
            raise TubeViolation("sphere: center has no well-defined normal")
        u = d / n
        return np.vstack([u, -u])

    def sample_box(self):
        return self.center - self.radius, self.center + self.radius

    def to_dict(self):
        return {"kind": self.kind, "center": _list(self.center), "radius": self.radius,
                "dim": self.dim}


class SphereShell(_RadialSet):
    """Closed annulus ``r_in <= ||x - c|| <= r_out``."""

    kind = "sphere_shell"

    def __init__(self, center, r_in, r_out):
        super().__init__(center)
        if not 0 < r_in < r_out:
            raise ValueError("need 0 < r_in < r_out")
        self.r_in = float(r_in)
        self.r_out = float(r_out)

    @property
    def r(self):
        return self.r_in

    def project(self, x):
        x, d, n = self._radial(x)
        if n < self.r_in:
            return self._onto_radius(d, n, self.r_in)
        if n > self.r_out:
            return self.center + d * (self.r_out / n)
        return x

    def distance(self, x):
        _, _, n = self._radial(x)
        return max(self.r_in - n, n - self.r_out, 0.0)

    def normal_generators(self, x):
        _, d, n = self._radial(x)
        rows = []
        if n == 0.0:
            raise TubeViolation("sphere_shell: center has no well-defined normal")
        u = d / n
        if n < self.r_in + TOL_BOUNDARY:
            rows.append(-u)
        if n > self.r_out - TOL_BOUNDARY:
            rows.append(u)
        return np.array(rows).reshape(len(rows), self.dim)

    def sample_box(self):
        return self.center - self.r_out, self.center + self.r_out

    def to_dict(self):
        return {"kind": self.kind, "center": _list(self.center), "r_in": self.r_in,
                "r_out": self.r_out, "dim": self.dim}


class BallComplement(_RadialSet):
    """Complement of an open ball, ``||x - c|| >= R``."""

    kind = "ball_complement"

    def __init__(self, center, radius):
        super().__init__(center)
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)

    @property
    def r(self):
        return self.radius

    def project(self, x):
        x, d, n = self._radial(x)
        if n >= self.radius:
            return x
        return self._onto_radius(d, n, self.radius)

    def distance(self, x):
        _, _, n = self._radial(x)
        return max(self.radius - n, 0.0)

    def normal_generators(self, x):
        _, d, n = self._radial(x)
        if n < self.radius + TOL_BOUNDARY:
            if n == 0.0:
                raise TubeViolation("ball_complement: center is outside the tube")
            return (-d / n)[None, :]
        return np.zeros((0, self.dim))

    def sample_box(self):
        return self.center - 2 * self.radius, self.center + 2 * self.radius

    def to_dict(self):
        return {"kind": self.kind, "center": _list(self.center), "radius": self.radius,
                "dim": self.dim}


class Box(ProxSet):
    kind = "box"

    def __init__(self, lower, upper):
        lo = np.asarray(lower, dtype=float).ravel()
        hi = np.asarray(upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise DimensionMismatch("lower and upper bounds differ in length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValueError("need lower <= upper")
        self.lower, self.upper = lo, hi
        self.dim = lo.size

    @property
    def r(self):
        return math.inf

    def project(self, x):
        x = as_point(x, self.dim)
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def normal_generators(self, x):
        x = as_point(x, self.dim)
        eye = np.eye(self.dim)
        rows = [-eye[i] for i in np.flatnonzero(x < self.lower + TOL_BOUNDARY)]
        rows += [eye[i] for i in np.flatnonzero(x > self.upper - TOL_BOUNDARY)]
        return np.array(rows).reshape(len(rows), self.dim)

    def sample_box(self):
        lo = np.where(np.isfinite(self.lower), self.lower,
                      np.where(np.isfinite(self.upper), self.upper - 2.0, -1.0))
        hi = np.where(np.isfinite(self.upper), self.upper, lo + 2.0)
        return lo, hi

    def to_dict(self):
        return {"kind": self.kind, "lower": _list(self.lower), "upper": _list(self.upper),
                "dim": self.dim}


class Orthant(Box):
    """The nonnegative orthant of R^m."""

    kind = "orthant"

    def __init__(self, m):
        m = int(m)
        if m < 1:
            raise ValueError("orthant dimension must be >= 1")
        super().__init__(np.zeros(m), np.full(m, np.inf))
        self.m = m

    def to_dict(self):
        return {"kind": self.kind, "m": self.m, "dim": self.dim}


class Product(ProxSet):
    kind = "product"

    def __init__(self, left, right):
        self.left, self.right = left, right
        self.dim = left.dim + right.dim

    @property
    def r(self):
        return min(self.left.r, self.right.r)

    def _split(self, x):
        x = as_point(x, self.dim)
        return x[: self.left.dim], x[self.left.dim:]

    def project(self, x):
        a, b = self._split(x)
        return np.concatenate([self.left.project(a), self.right.project(b)])

    def normal_generators(self, x):
        a, b = self._split(x)
        ga, gb = self.left.normal_generators(a), self.right.normal_generators(b)
        if ga is None or gb is None:
            return None
        top = np.hstack([ga, np.zeros((ga.shape[0], self.right.dim))])
        bottom = np.hstack([np.zeros((gb.shape[0], self.left.dim)), gb])
        return np.vstack([top, bottom])

    def sample_box(self):
        (la, ha), (lb, hb) = self.left.sample_box(), self.right.sample_box()
        return np.concatenate([la, lb]), np.concatenate([ha, hb])

    def to_dict(self):
        return {"kind": self.kind, "left": self.left.to_dict(),
                "right": self.right.to_dict(), "dim": self.dim}


def _gram_spectrum(D):
    """Largest singular value and least positive singular value of D via eig(D^T D)."""
    evals = np.linalg.eigvalsh(D.T @ D)
    top = float(evals[-1])
    if top <= 0.0:
        raise SingularMap("linear map is zero")
    positive = evals[evals > 1e-12 * top]
    return math.sqrt(top), math.sqrt(float(positive[0]))


class LinearPreimage(ProxSet):
    """``D^{-1}(S) = {x : D x in S}`` for a full-row-rank matrix D.

    The prox constant is ``r_S * sigma_min^+ / ||D||^2``. Projection is closed
    form when all singular values of D coincide; otherwise it solves the
    metric projection onto S by multi-start projected gradient descent.
    """

    kind = "linear_preimage"

    def __init__(self, D, inner):
        D = np.atleast_2d(np.asarray(D, dtype=float))
        if D.shape[0] != inner.dim:
            raise DimensionMismatch(f"D has {D.shape[0]} rows, inner set has dim {inner.dim}")
        self.D, self.inner = D, inner
        self.dim = D.shape[1]
        self.norm_D, self.sigma_plus = _gram_spectrum(D)
        if np.linalg.matrix_rank(D) < D.shape[0]:
            raise SingularMap("D must have full row rank")
        self.D_pinv = np.linalg.pinv(D)
        sv = np.linalg.svd(D, compute_uv=False)
        self._isotropic = bool(sv[0] - sv[-1] <= 1e-12 * sv[0])
        self._metric = np.linalg.inv(D @ D.T)
        self._step = 1.0 / float(np.linalg.eigvalsh(self._metric)[-1])

    @property
    def r(self):
        return self.inner.r * self.sigma_plus / self.norm_D ** 2

    def project(self, x):
        x = as_point(x, self.dim)
        s = self.D @ x
        if self._isotropic or self.inner.convex:
            ps = self.inner.project(s)
            if np.array_equal(ps, s):
                return x
            if self._isotropic:
                return x + self.D_pinv @ (ps - s)
            best = self._descend(s, ps)
            return x + self.D_pinv @ (best - s)
        return x + self.D_pinv @ (self._multistart(s) - s)

    def _phi(self, s, t):
        e = t - s
        return 0.5 * float(e @ self._metric @ e)

    def _descend(self, s, t, max_iter=20000):
        for _ in range(max_iter):
            t_new = self.inner.project(t - self._step * (self._metric @ (t - s)))
            if np.linalg.norm(t_new - t) <= 1e-15 * (1.0 + np.linalg.norm(t)):
                return t_new
            t = t_new
        return t

    def _multistart(self, s):
        try:
            first = self.inner.project(s)
        except TubeViolation:
            first = None
        if first is not None and np.array_equal(first, s):
            return s
        scale = np.linalg.norm(first - s) if first is not None else 1.0
        scale = max(2.0 * scale, 1e-3)
        l = s.size
        offsets = np.array(np.meshgrid(*[[-1.0, 0.0, 1.0]] * l)).reshape(l, -1).T
        seeds, keys = [], set()
        for off in offsets:
            try:
                t = self.inner.project(s + scale * off)
            except TubeViolation:
                continue
            key = tuple(np.round(t, 6))
            if key not in keys:
                keys.add(key)
                seeds.append(t)
        if not seeds:
            raise TubeViolation("linear_preimage: no admissible seed for the projection")
        sols = [self._descend(s, t) for t in seeds]
        vals = np.array([self._phi(s, t) for t in sols])
        i = int(np.argmin(vals))
        best = sols[i]
        d = math.sqrt(2.0 * vals[i])
        if d >= self.r:
            raise TubeViolation(f"linear_preimage: distance {d:.6g} >= r' = {self.r:.6g}")
        for t, v in zip(sols, vals):
            far = np.linalg.norm(self.D_pinv @ (t - best)) > 1e-6
            if far and v - vals[i] <= 1e-10 * (1.0 + vals[i]):
                raise TubeViolation("linear_preimage: projection is not unique")
        return best

    def contains(self, x, tol=TOL_MEM):
        x = as_point(x, self.dim)
        try:
            gap = self.inner.distance(self.D @ x)
        except TubeViolation:
            return False
        sigma_min = self.sigma_plus
        if gap / sigma_min <= tol:
            return True
        if gap / self.norm_D > tol:
            return False
        return super().contains(x, tol)

    def normal_generators(self, x):
        x = as_point(x, self.dim)
        g = self.inner.normal_generators(self.D @ x)
        if g is None:
            return None
        return g @ self.D

    def sample_box(self):
        lo, hi = self.inner.sample_box()
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        c = self.D_pinv @ mid
        w = np.abs(self.D_pinv) @ half
        if np.linalg.matrix_rank(self.D) < self.dim:
            w = w + 1.0
        return c - w, c + w

    def to_dict(self):
        return {"kind": self.kind, "D": self.D.tolist(), "inner": self.inner.to_dict(),
                "dim": self.dim}


class LevelSetPolyhedral(ProxSet):
    """``{x : H x + c >= 0}`` with H of full row rank."""

    kind = "level_set_polyhedral"

    def __init__(self, H, c):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        c = np.asarray(c, dtype=float).ravel()
        if c.size != H.shape[0]:
            raise DimensionMismatch("H and c disagree on the number of constraints")
        if np.linalg.matrix_rank(H) < H.shape[0]:
            raise QualificationFailure("H must have full row rank (surjective gradient)")
        self.H, self.c = H, c
        self.dim = H.shape[1]
        self._shift = np.linalg.pinv(H) @ c
        self._row_norms = np.linalg.norm(H, axis=1)

    @property
    def r(self):
        return math.inf

    def g(self, x):
        return self.H @ as_point(x, self.dim) + self.c

    def project(self, x):
        x = as_point(x, self.dim)
        if np.all(self.H @ x + self.c >= 0.0):
            return x
        lam, _ = nnls(self.H.T, -(x + self._shift))
        return x + self.H.T @ lam

    def normal_generators(self, x):
        active = self.g(x) < TOL_BOUNDARY * self._row_norms
        return -self.H[active]

    def sample_box(self):
        y0 = self.project(np.zeros(self.dim))
        return y0 - 2.0, y0 + 2.0

    def to_dict(self):
        return {"kind": self.kind, "H": self.H.tolist(), "c": _list(self.c), "dim": self.dim}


def set_from_dict(d):
    """Inverse of ``ProxSet.to_dict``."""
    kind = d["kind"]
    if kind == "ball":
        s = Ball(d["center"], d["radius"])
    elif kind == "sphere":
        s = Sphere(d["center"], d["radius"])
    elif kind == "sphere_shell":
        s = SphereShell(d["center"], d["r_in"], d["r_out"])
    elif kind == "ball_complement":
        s = BallComplement(d["center"], d["radius"])
    elif kind == "box":
        s = Box([float(v) for v in d["lower"]], [float(v) for v in d["upper"]])
    elif kind == "orthant":
        s = Orthant(d["m"])
    elif kind == "product":
        s = Product(set_from_dict(d["left"]), set_from_dict(d["right"]))
    elif kind == "linear_preimage":
        s = LinearPreimage(d["D"], set_from_dict(d["inner"]))
    elif kind == "level_set_polyhedral":
        s = LevelSetPolyhedral(d["H"], d["c"])
    else:
        raise ValueError(f"unknown set kind {kind!r}")
    if "dim" in d and int(d["dim"]) != s.dim:
        raise DimensionMismatch(f"declared dim {d['dim']} but {kind} has dim {s.dim}")
    return s


# -- module-level operations -------------------------------------------------

def project(set_, x):
    return set_.project(x)


def distance(set_, x):
    return set_.distance(x)


def contains(set_, x, tol_mem=TOL_MEM):
    if not tol_mem > 0:
        raise ValueError("tol_mem must be positive")
    return set_.contains(x, tol_mem)


def prox_constant(set_):
    return set_.r


@dataclass(frozen=True)
class ConeProjection:
    normal_part: np.ndarray
    tangent_part: np.ndarray
    residual: float


def _fd_tangent(set_, x, v, h, tol):
    def quotient(step):
        return (set_.project(x + step * v) - x) / step

    d1, d2, d4 = quotient(h), quotient(h / 2), quotient(h / 4)
    r1, r2 = 2 * d2 - d1, 2 * d4 - d2
    if np.linalg.norm(r1 - r2) > tol * (1.0 + np.linalg.norm(v)):
        raise NonconvergedFD(
            f"Richardson estimates differ by {np.linalg.norm(r1 - r2):.3g}")
    return r2


def _cone_normal(gens, v):
    """Projection of v onto the convex cone generated by the rows of gens."""
    if gens.shape[0] == 1:
        g = gens[0]
        t = float(v @ g)
        return (t / float(g @ g)) * g if t > 0 else np.zeros_like(v)
    lam, _ = nnls(gens.T, v)
    return gens.T @ lam


def cone_project(set_, x, v, h_fd=H_FD, tol_orth=TOL_ORTH, method="auto"):
    """Moreau decomposition of ``v`` along N_C(x) and T_C(x).

    ``method="fd"`` forces the finite-difference route
    ``(P(x + h v) - x) / h`` with Richardson extrapolation.
    """
    if not h_fd > 0:
        raise ValueError("h_fd must be positive")
    x = as_point(x, set_.dim)
    v = as_point(v, set_.dim)
    gens = set_.normal_generators(x) if method == "auto" else None
    if gens is None:
        tangent = _fd_tangent(set_, x, v, h_fd, tol_orth)
        normal = v - tangent
    elif gens.shape[0] == 0:
        normal, tangent = np.zeros_like(v), v.copy()
    else:
        normal = _cone_normal(gens, v)
        tangent = v - normal
    return ConeProjection(normal, tangent, abs(float(normal @ tangent)))


@dataclass
class HypomonotonicityReport:
    m: float
    r: float
    n_pairs: int
    n_checks: int
    worst_margin: float
    violations: list

    @property
    def passed(self):
        return not self.violations


def _capped_normals(set_, x, m, rng, n_dirs):
    out = [np.zeros(set_.dim)]
    gens = set_.normal_generators(x)
    if gens is not None:
        out += [m * g / np.linalg.norm(g) for g in gens]
    for _ in range(n_dirs):
        n = cone_project(set_, x, rng.standard_normal(set_.dim)).normal_part
        nn = np.linalg.norm(n)
        if nn > 1e-12:
            out.append(m * n / nn)
    return out


def hypomonotonicity_check(set_, samples, m, rng=None, n_dirs=4, tol=1e-9):
    """Check ``<x1-x2, xi1-xi2> >= -(m/r)||x1-x2||^2`` over capped normals.

    ``samples`` is an iterable of point pairs on C. Each point is paired with
    normals built from its cone generators and from the normal parts of
    random directions, all scaled to norm ``m``.
    """
    if not m > 0:
        raise ValueError("m must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    shift = 0.0 if math.isinf(set_.r) else m / set_.r
    worst, checks, violations, n_pairs = math.inf, 0, [], 0
    for x1, x2 in samples:
        x1, x2 = as_point(x1, set_.dim), as_point(x2, set_.dim)
        n_pairs += 1
        dx = x1 - x2
        quad = float(dx @ dx)
        for xi1 in _capped_normals(set_, x1, m, rng, n_dirs):
            for xi2 in _capped_normals(set_, x2, m, rng, n_dirs):
                margin = float(dx @ (xi1 - xi2)) + shift * quad
                checks += 1
                worst = min(worst, margin)
                if margin < -tol * (1.0 + quad):
                    violations.append((x1, x2, xi1, xi2, margin))
    return HypomonotonicityReport(m, set_.r, n_pairs, checks, worst, violations)


# -- sampling ------------------------------------------------------------------

def _draw(set_, n, rng, box, want_interior, max_tries):
    lo, hi = set_.sample_box() if box is None else (np.asarray(box[0], float),
                                                    np.asarray(box[1], float))
    pad = 0.25 * (hi - lo) + 1e-3
    out, tries = [], 0
    while len(out) < n and tries < max_tries:
        tries += 1
        p = rng.uniform(lo - pad, hi + pad)
        if set_.contains(p):
            if want_interior:
                out.append(p)
            continue
        try:
            d = set_.distance(p)
        except TubeViolation:
            continue
        if not set_.convex and d >= 0.9 * set_.r:
            continue
        out.append(set_.project(p))
    if len(out) < n:
        raise RuntimeError(f"sampler produced {len(out)} of {n} points")
    return np.array(out)


def sample_points(set_, n, rng, box=None, max_tries=200000):
    """Points of C: interior draws plus projections of nearby outside draws."""
    return _draw(set_, n, rng, box, True, max_tries)


def sample_boundary(set_, n, rng, box=None, max_tries=200000):
    """Boundary points obtained by projecting outside draws that lie in the tube."""
    return _draw(set_, n, rng, box, False, max_tries)
