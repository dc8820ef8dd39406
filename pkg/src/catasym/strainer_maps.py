"""Strainers at infinity and Busemann strainer maps on Euclidean cones.

An ideal strainer is a suspender in the base of the cone (the Tits boundary
of C0(Z) is Z itself).  The strainer map sends a point to the vector of
Busemann functions of the rays toward xi_1..xi_m.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .busemann import BusemannFunction
from .cat1_models import (SuspenderCertificate, admits_cat1, certified_delta, circle_quarter_suspender,
                          find_suspender, fullsusp_gap, measure_tuple, suspension_suspender)
from .cone_geometry import (IdealPoint, _circle_direction_angles, _product_tangent, angle_at, asymptotic_ray,
                            circle_cone_angles, cone_geodesic, factor_cone, is_circle_cone, is_suspension_cone,
                            to_product)
from .metric_core import (GEOM_TOL, PI, Circle, ContractViolation, EuclideanCone, RoundSphere, SampleSet, Space,
                          Suspension, epsilon_net)

# residuals below this (relative to the size of phi(x0)) are roundoff and carry no ratio information
RATIO_FLOOR = 1e-12


class IterationError(RuntimeError):
    def __init__(self, message: str, trace: "IterationTrace"):
        super().__init__(message)
        self.trace = trace


class IterationDiverged(IterationError):
    pass


class IterationLimit(IterationError):
    pass


# ---------------------------------------------------------------------------
# strainers
# ---------------------------------------------------------------------------


@dataclass
class IdealStrainer:
    m: int
    xi: np.ndarray
    eta: np.ndarray
    delta: float
    certificate: SuspenderCertificate
    spot_checks: List[dict] = field(default_factory=list)

    @property
    def xi_points(self) -> List[IdealPoint]:
        return [IdealPoint(x) for x in self.xi]

    @property
    def eta_points(self) -> List[IdealPoint]:
        return [IdealPoint(x) for x in self.eta]

    @property
    def spot_ok(self) -> bool:
        return all(c["ok"] for c in self.spot_checks)

    def to_dict(self) -> dict:
        return {"m": self.m, "xi": self.xi.tolist(), "eta": self.eta.tolist(), "delta": self.delta,
                "certificate": self.certificate.to_dict(), "spot_checks": self.spot_checks}


def _require_cone(cone: Space):
    if not (is_circle_cone(cone) or is_suspension_cone(cone)):
        raise ContractViolation("strainers are supported on cones over circle(L) or suspension(circle(L))")
    if not admits_cat1(cone.base):
        raise ContractViolation(f"base {cone.base} is not CAT(1)")


def _direction_tuple(cone: EuclideanCone, x: np.ndarray, bases: np.ndarray) -> Tuple[Space, np.ndarray]:
    """Directions at x of the rays toward the given ideal points, as points of the direction space."""
    if x[0] == 0.0:
        return cone.base, bases
    if is_circle_cone(cone):
        L = cone.base.length
        ang = _circle_direction_angles(L, np.broadcast_to(x, (len(bases), 2)), bases, True)
        return Circle(2 * PI), ang[:, None]
    if to_product(cone, x)[1][0] == 0.0:
        raise ContractViolation("spot check on the singular line is not supported")
    fc = factor_cone(cone)
    _, cp = to_product(cone, x)
    vecs = []
    for b in bases:
        a, w, T, is_ideal = _product_tangent(cone, x, IdealPoint(b))
        f = float(_circle_direction_angles(fc.base.length, cp, T, is_ideal)) if w > 0 else 0.0
        vecs.append([a, w * np.cos(f), w * np.sin(f)])
    V = np.array(vecs)
    return RoundSphere(2), V / np.linalg.norm(V, axis=1, keepdims=True)


def strainer_spot_check(cone: EuclideanCone, xi: np.ndarray, eta: np.ndarray, delta: float, mesh: float,
                        points: np.ndarray) -> List[dict]:
    """At each point x the directions of the strainer must form a suspender of the
    direction space with defect at most delta plus the mesh correction."""
    out = []
    nets = {}
    for x in points:
        space, D = _direction_tuple(cone, x, np.concatenate([xi, eta]))
        key = space.to_config()
        if key not in nets:
            nets[key] = epsilon_net(space, mesh)
        cert = measure_tuple(space, nets[key], D[:len(xi)], D[len(xi):], delta)
        out.append({"x": [float(c) for c in x], "direction_space": key, "defect": cert.defect,
                    "ok": bool(cert.defect <= delta + 2 * mesh)})
    return out


def certify_ideal_strainer(cone: EuclideanCone, candidate: Optional[Tuple[np.ndarray, np.ndarray]],
                           sample: SampleSet, delta: float, m: Optional[int] = None, n_spot: int = 10,
                           seed: int = 0, spot_radius: float = 2.0) -> Optional[IdealStrainer]:
    """Certify a candidate (xi, eta) on a sample of the base, or search for one of order m."""
    _require_cone(cone)
    if sample.space != cone.base:
        raise ContractViolation("sample must come from the cone's base")
    if candidate is None:
        if m is None:
            raise ContractViolation("give a candidate tuple or an order m")
        cert = find_suspender(cone.base, sample, m, delta)
    else:
        cert = measure_tuple(cone.base, sample, candidate[0], candidate[1], delta)
        if not cert.defect < delta:
            cert = None
    if cert is None:
        return None
    rng = np.random.default_rng(seed)
    pts = [cone.apex()]
    while len(pts) < n_spot:
        x = cone.random(1, rng, spot_radius)[0]
        if x[0] > 0 and (not is_suspension_cone(cone) or to_product(cone, x)[1][0] > 0):
            pts.append(x)
    spots = strainer_spot_check(cone, cert.p, cert.q, delta, sample.mesh, np.array(pts))
    return IdealStrainer(cert.m, cert.p, cert.q, float(delta), cert, spots)


def canonical_candidate(base: Space, m: int) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(base, Circle):
        if m > 2:
            raise ContractViolation("a circle carries strainers of order at most 2")
        return circle_quarter_suspender(base.length, m)
    if isinstance(base, Suspension) and isinstance(base.base, Circle):
        if m > 3:
            raise ContractViolation("suspension(circle) carries strainers of order at most 3")
        p, q = suspension_suspender(base.base.length)
        return p[:m], q[:m]
    raise ContractViolation(f"no canonical strainer for {base}")


def find_strainer(cone: EuclideanCone, m: Optional[int] = None, mesh: float = 0.005, resolution: float = 1e-3,
                  seed: int = 0, candidate=None) -> IdealStrainer:
    """Strainer of order m with the smallest delta certified on a mesh-net of the base."""
    _require_cone(cone)
    if m is None:
        m = 2 if is_circle_cone(cone) else 3
    if candidate is None:
        candidate = canonical_candidate(cone.base, m)
    sample = epsilon_net(cone.base, mesh)
    delta = certified_delta(cone.base, sample, candidate[0], candidate[1], resolution=resolution)
    if delta is None:
        raise ContractViolation("candidate does not certify for any delta <= 1")
    strainer = certify_ideal_strainer(cone, candidate, sample, delta, seed=seed)
    assert strainer is not None
    return strainer


# ---------------------------------------------------------------------------
# the map
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class StrainerMap:
    """phi = (b_1, ..., b_m).  With ``origin`` set, the rays start at ``origin``
    instead of the apex, which shifts phi by a constant vector."""

    cone: EuclideanCone
    strainer: IdealStrainer
    origin: Optional[np.ndarray] = None
    functions: List[BusemannFunction] = field(init=False)

    def __post_init__(self):
        self.functions = [BusemannFunction(self.cone, xi) for xi in self.strainer.xi_points]
        self._eta_functions = [BusemannFunction(self.cone, e) for e in self.strainer.eta_points]
        if self.origin is not None:
            self.origin = self.cone.normalize(self.origin)
            self._shift = np.array([float(b(self.origin)) for b in self.functions])
        else:
            self._shift = np.zeros(self.m)

    @property
    def m(self) -> int:
        return self.strainer.m

    def coordinate(self, i: int, P) -> np.ndarray:
        return self.functions[i](P) - self._shift[i]

    def __call__(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        return np.stack([self.coordinate(i, P) for i in range(self.m)], axis=-1)


def evaluate_map(sm: StrainerMap, p) -> np.ndarray:
    return sm(sm.cone.normalize(p))


# ---------------------------------------------------------------------------
# openness iteration
# ---------------------------------------------------------------------------


@dataclass
class IterationTrace:
    iterates: List[np.ndarray]
    residual_l1: List[float]
    residual_l2: List[float]
    step_distance: List[float]
    ratio: List[float]
    moves: int = 0
    path_length: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def max_ratio(self) -> float:
        r = [x for x in self.ratio if not math.isnan(x)]
        return max(r) if r else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,residual_l1,residual_l2,step_distance,ratio\n")
        for k in range(len(self.iterates)):
            step = self.step_distance[k - 1] if k else 0.0
            ratio = self.ratio[k - 1] if k else float("nan")
            buf.write(f"{k},{self.residual_l1[k]!r},{self.residual_l2[k]!r},{step!r},{ratio!r}\n")
        return buf.getvalue()


def _move(sm: StrainerMap, y: np.ndarray, i: int, u: float) -> Tuple[np.ndarray, float]:
    """Change coordinate i by u: toward xi_i by |u| to decrease, toward eta_i to increase."""
    if u == 0.0:
        return y, 0.0
    if u < 0:
        tau = -u
        return asymptotic_ray(sm.cone, y, sm.strainer.xi_points[i]).point(np.array(tau)), tau
    ray = asymptotic_ray(sm.cone, y, sm.strainer.eta_points[i])
    b = sm.functions[i]
    start = float(b(y))

    def f(tau):
        return float(b(ray.point(np.array(tau)))) - start - u

    hi = u
    while f(hi) < 0:
        hi *= 2
        if hi > 1e6 * u + 1e6:
            raise ContractViolation("coordinate does not increase along the opposite ray")
    tau = u if f(u) >= 0 else brentq(f, u, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return ray.point(np.array(tau)), tau


def openness_iteration(sm: StrainerMap, x0, u0, tol: float = 1e-9, max_iter: int = 100,
                       check_contraction: bool = True) -> Tuple[np.ndarray, IterationTrace]:
    """Find y with phi(y) = phi(x0) + u0 by sweeps of per-coordinate moves along rays.

    Each sweep moves by the current residual, one coordinate at a time; the
    residual contracts by at most 2(m-1)delta in l1 per sweep.
    """
    cone = sm.cone
    x0 = cone.normalize(x0)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (sm.m,):
        raise ContractViolation(f"offset must have {sm.m} components")
    target = sm(x0) + u0
    floor = RATIO_FLOOR * (1.0 + float(np.abs(target).max()))
    y = x0
    u = target - sm(y)
    trace = IterationTrace([y], [float(np.abs(u).sum())], [float(np.linalg.norm(u))], [], [])
    while trace.residual_l2[-1] > tol:
        if trace.iterations >= max_iter:
            raise IterationLimit(f"no convergence in {max_iter} sweeps", trace)
        prev = y
        for i in range(sm.m):
            y, tau = _move(sm, y, i, float(u[i]))
            trace.moves += int(tau > 0)
            trace.path_length += tau
        u_next = target - sm(y)
        l1 = float(np.abs(u_next).sum())
        ratio = l1 / trace.residual_l1[-1] if trace.residual_l1[-1] > floor else float("nan")
        trace.iterates.append(y)
        trace.residual_l1.append(l1)
        trace.residual_l2.append(float(np.linalg.norm(u_next)))
        trace.step_distance.append(float(cone.dist(prev, y)))
        trace.ratio.append(ratio)
        if check_contraction and not math.isnan(ratio) and ratio >= 1.0:
            raise IterationDiverged(f"residual did not contract (ratio {ratio:.3g})", trace)
        u = u_next
    return y, trace


def contraction_bound(strainer: IdealStrainer) -> float:
    return 2 * (strainer.m - 1) * strainer.delta


# ---------------------------------------------------------------------------
# sampled regularity constants
# ---------------------------------------------------------------------------


def _pair_indices(n: int, n_sub: int, n_random: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """All pairs among a random subsample of size n_sub plus n_random uniform pairs."""
    sub = np.sort(rng.choice(n, size=min(n, n_sub), replace=False))
    a, b = np.triu_indices(len(sub), k=1)
    I = np.concatenate([sub[a], rng.integers(0, n, size=n_random)])
    J = np.concatenate([sub[b], rng.integers(0, n, size=n_random)])
    return I, J


@dataclass
class RatioReport:
    lower: float
    upper: float
    violations: int
    n_pairs: int
    n_floor_pairs: int
    floor: float

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "violations": self.violations, "n_pairs": self.n_pairs,
                "n_floor_pairs": self.n_floor_pairs, "floor": self.floor}


def _ratio_scan(dist_fn, image_dist_fn, n: int, floor: float, n_sub: int, n_random: int, seed: int,
                tol: float, chunk: int = 500_000) -> RatioReport:
    rng = np.random.default_rng(seed)
    I, J = _pair_indices(n, n_sub, n_random, rng)
    lo, hi = math.inf, 0.0
    viol = count = count_floor = 0
    for s in range(0, len(I), chunk):
        i, j = I[s:s + chunk], J[s:s + chunk]
        d = dist_fn(i, j)
        img = image_dist_fn(i, j)
        pos = d > GEOM_TOL
        if pos.any():
            hi = max(hi, float((img[pos] / d[pos]).max()))
            count += int(pos.sum())
        far = d >= floor
        if far.any():
            lo = min(lo, float((img[far] / d[far]).min()))
            viol += int((img[far] <= tol).sum())
            count_floor += int(far.sum())
    return RatioReport(lo, hi, viol, count, count_floor, floor)


def map_ratio_scan(sm: StrainerMap, sample: SampleSet, floor: Optional[float] = None, n_sub: int = 3000,
                   n_random: int = 1_000_000, seed: int = 0, tol: float = GEOM_TOL) -> RatioReport:
    """Ratios |phi(x) - phi(y)| / d(x, y) over sampled pairs of a cone sample."""
    X = sample.points
    F = sm(X)
    floor = 10 * sample.mesh if floor is None else floor
    return _ratio_scan(lambda i, j: sm.cone.dist(X[i], X[j]),
                       lambda i, j: np.linalg.norm(F[i] - F[j], axis=1),
                       len(X), floor, n_sub, n_random, seed, tol)


def bilipschitz_verify(sm: StrainerMap, sample: SampleSet, floor: Optional[float] = None, n_sub: int = 3000,
                       n_random: int = 1_000_000, seed: int = 0, tol: float = GEOM_TOL) -> RatioReport:
    """Lower ratio and injectivity violations use pairs at least ``floor`` apart
    (default 10 x mesh); the upper ratio uses every sampled pair."""
    full = 2 if is_circle_cone(sm.cone) else 3
    if sm.m != full:
        raise ContractViolation(f"bi-Lipschitz verification needs a strainer of order {full}")
    return map_ratio_scan(sm, sample, floor, n_sub, n_random, seed, tol)


@dataclass
class ConstantsReport:
    lip: float
    open_c: float
    n_pairs: int
    n_probes: int
    max_ratio: float
    max_iterations: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def random_probes(cone: EuclideanCone, m: int, n: int, radius: float, u_max: float, seed: int):
    rng = np.random.default_rng(seed)
    X = cone.random(n, rng, radius)
    U = rng.normal(size=(n, m))
    U *= (u_max * rng.uniform(0.1, 1.0, size=(n, 1))) / np.linalg.norm(U, axis=1, keepdims=True)
    return X, U


def lipschitz_and_open_constants(sm: StrainerMap, sample: SampleSet, probes: Tuple[np.ndarray, np.ndarray],
                                 tol: float = 1e-9, n_sub: int = 3000, n_random: int = 1_000_000,
                                 seed: int = 0) -> ConstantsReport:
    """lip = max |phi(x) - phi(y)| / d(x, y); open_c = max d(x0, y*) / |u0| over probes."""
    scan = map_ratio_scan(sm, sample, floor=math.inf, n_sub=n_sub, n_random=n_random, seed=seed)
    X0, U0 = probes
    open_c, max_ratio, max_it = 0.0, 0.0, 0
    for x0, u0 in zip(X0, U0):
        y, trace = openness_iteration(sm, x0, u0, tol=tol)
        open_c = max(open_c, float(sm.cone.dist(x0, y)) / float(np.linalg.norm(u0)))
        max_ratio = max(max_ratio, trace.max_ratio)
        max_it = max(max_it, trace.iterations)
    return ConstantsReport(scan.upper, open_c, scan.n_pairs, len(X0), max_ratio, max_it)


# ---------------------------------------------------------------------------
# first variation inequalities
# ---------------------------------------------------------------------------


@dataclass
class VariationReport:
    slope_residual: float
    derivative_variation: float
    level_derivative: float
    n_geodesics: int
    n_level: int
    n_apex: int
    delta: float
    m: int

    @property
    def slope_bound(self) -> float:
        return 2 * self.delta

    @property
    def variation_bound(self) -> float:
        return 4 * math.sqrt(self.m) * self.delta

    @property
    def level_bound(self) -> float:
        return 6 * math.sqrt(self.m) * self.delta

    def violations(self, slack: float = 1e-9) -> int:
        return (int(self.slope_residual >= self.slope_bound + slack)
                + int(self.derivative_variation > self.variation_bound + slack)
                + int(self.level_derivative > self.level_bound + slack))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(slope_bound=self.slope_bound, variation_bound=self.variation_bound, level_bound=self.level_bound,
                 violations=self.violations())
        return d


def _derivatives_along(sm: StrainerMap, g, s: np.ndarray) -> np.ndarray:
    """Right derivatives of phi along g at parameters s: -cos of the angle between xi_i and the forward direction."""
    cone = sm.cone
    P = g.point(s)
    out = np.empty((len(s), sm.m))
    if is_circle_cone(cone):
        B = np.broadcast_to(g.end, P.shape)
        for i, xi in enumerate(sm.strainer.xi):
            A = np.broadcast_to(xi, (len(s), 1))
            out[:, i] = -np.cos(circle_cone_angles(cone, P, A, B, True, False))
        return out
    for k, p in enumerate(P):
        for i, xi in enumerate(sm.strainer.xi_points):
            out[k, i] = -math.cos(angle_at(cone, p, xi, g.end))
    return out


def first_variation_inequalities_check(sm: StrainerMap, pairs: Sequence[Tuple[np.ndarray, np.ndarray]],
                                       n_params: int = 16, level_tol: float = 1e-9) -> VariationReport:
    """Chord slope vs right derivative per coordinate, variation of the derivative
    along each geodesic, and the derivative size on geodesics with equal phi-endpoints."""
    cone = sm.cone
    slope_res = var = level = 0.0
    n_level = n_apex = count = 0
    for x, y in pairs:
        g = cone_geodesic(cone, x, y)
        count += 1
        n_apex += int(g.through_apex)
        s = np.linspace(0.0, g.length, n_params, endpoint=False)
        if g.through_apex:
            # both legs, including the parameter that sits at the apex
            s = np.unique(np.concatenate([s, [float(cone.normalize(x)[0])]]))
            s = s[s < g.length]
        D = _derivatives_along(sm, g, s)
        chord = (sm(g.end) - sm(g.start)) / g.length
        slope_res = max(slope_res, float(np.abs(chord - D[0]).max()))
        diff = D[:, None, :] - D[None, :, :]
        var = max(var, float(np.linalg.norm(diff, axis=-1).max()))
        if np.linalg.norm(sm(g.end) - sm(g.start)) <= level_tol:
            n_level += 1
            level = max(level, float(np.linalg.norm(D, axis=1).max()))
    return VariationReport(slope_res, var, level, count, n_level, n_apex, sm.strainer.delta, sm.m)


# ---------------------------------------------------------------------------
# the sphere map
# ---------------------------------------------------------------------------


@dataclass
class SphereMapReport:
    lower: float
    upper: float
    min_norm: float
    normalization_failures: int
    gap: float
    gap_certified: float
    n_pairs: int
    floor: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def sphere_map(Z: Space, strainer: IdealStrainer, P) -> Tuple[np.ndarray, np.ndarray]:
    """z -> phi0(z) / |phi0(z)| with phi0 the strainer map on the unit sphere of the cone."""
    P = np.asarray(P, dtype=float)
    F = np.stack([-np.cos(np.minimum(Z.pairwise(P, x[None, :])[:, 0], PI)) for x in strainer.xi], axis=-1)
    norms = np.linalg.norm(F, axis=1)
    return F / np.where(norms > 0, norms, 1.0)[:, None], norms


def sphere_map_distortion(Z: Space, strainer: IdealStrainer, sample: SampleSet, floor: Optional[float] = None,
                          n_sub: int = 3000, n_random: int = 1_000_000, seed: int = 0,
                          tol: float = GEOM_TOL) -> SphereMapReport:
    """Min/max of (spherical image distance) / min(d_Z, pi) over sampled pairs."""
    if not (isinstance(Z, Circle) or (isinstance(Z, Suspension) and isinstance(Z.base, Circle))):
        raise ContractViolation("sphere map is supported on circle(L) and suspension(circle(L))")
    X = sample.points
    U, norms = sphere_map(Z, strainer, X)
    failures = int((norms <= tol).sum())
    gap = fullsusp_gap(Z, sample, strainer.xi)
    floor = 10 * sample.mesh if floor is None else floor
    ok = norms > tol

    def image(i, j):
        return 2 * np.arctan2(np.linalg.norm(U[i] - U[j], axis=1), np.linalg.norm(U[i] + U[j], axis=1))

    idx = np.flatnonzero(ok)
    scan = _ratio_scan(lambda i, j: np.minimum(Z.dist(X[idx[i]], X[idx[j]]), PI),
                       lambda i, j: image(idx[i], idx[j]), len(idx), floor, n_sub, n_random, seed, -1.0)
    return SphereMapReport(scan.lower, scan.upper, float(norms.min()), failures, gap, gap - sample.mesh,
                           scan.n_pairs, floor)
