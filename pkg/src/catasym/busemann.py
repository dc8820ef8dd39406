"""Busemann functions of apex rays in Euclidean cones.

For the apex ray toward xi, b(s x) = -s cos(min(d(xi, x), pi)).  The limit
evaluator keeps the definition d(p, ray(T)) - T at a finite horizon T and is
used as an independent check of the closed form.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .cone_geometry import (IdealPoint, angle_at, asymptotic_ray, circle_cone_angles, cone_geodesic,
                            is_circle_cone)
from .metric_core import PI, ContractViolation, EuclideanCone, epsilon_net

FD_STEP = 1e-6


@dataclass(eq=False)
class BusemannFunction:
    cone: EuclideanCone
    xi: IdealPoint
    mode: str = "closed_form"
    t_max: float = 1e6

    def __post_init__(self):
        if self.mode not in ("closed_form", "limit"):
            raise ContractViolation(f"unknown evaluation mode {self.mode!r}")
        if self.mode == "limit" and not self.t_max > 0:
            raise ContractViolation("t_max must be positive")

    def cos_angle(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        theta = np.minimum(self.cone.base.dist(P[..., 1:], self.xi.base), PI)
        return np.cos(theta)

    def __call__(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        s = P[..., 0]
        if self.mode == "closed_form":
            return -s * self.cos_angle(P)
        # d^2 - T^2 = s^2 - 2 s T cos(theta), divided by d + T to avoid cancellation
        T = self.t_max
        far = np.concatenate([[T], self.xi.base])
        d = self.cone.dist(P, far)
        return (s * s - 2 * s * T * self.cos_angle(P)) / (d + T)


def busemann_eval(bf: BusemannFunction, p) -> float:
    return float(bf(bf.cone.normalize(p)))


@dataclass
class HoroballCheck:
    predicted: float
    measured: float
    residual: float
    bound: float
    n_boundary: int

    @property
    def ok(self) -> bool:
        return self.residual <= self.bound


def horoball_identity_check(bf: BusemannFunction, p, r: float, mesh: float = 0.02,
                            max_size: int = 400_000) -> HoroballCheck:
    """Compare d(p, {b <= -r}) against b(p) + r using a sampled level set |b + r| <= mesh."""
    cone = bf.cone
    p = cone.normalize(p)
    bp = busemann_eval(bf, p)
    if not bp > -r:
        raise ContractViolation("p lies inside the horoball")
    predicted = bp + r
    reach = float(p[0]) + predicted + 2 * mesh
    net = epsilon_net(cone, mesh, radius=reach, max_size=max_size)
    closed = BusemannFunction(cone, bf.xi)
    level = np.abs(closed(net.points) + r) <= mesh
    if not level.any():
        raise ContractViolation("no sampled horoball boundary points")
    measured = float(cone.pairwise(p[None, :], net.points[level])[0].min())
    return HoroballCheck(predicted, measured, abs(measured - predicted), 2 * mesh, int(level.sum()))


@dataclass
class FirstVariation:
    derivative: float
    predicted: float
    residual: float
    degenerate: bool = False


def first_variation_check(bf: BusemannFunction, x, y, h: float = FD_STEP) -> FirstVariation:
    """Forward difference of b along the geodesic x -> y against -cos angle_x(xi, y)."""
    cone = bf.cone
    x = cone.normalize(x)
    y = cone.normalize(y)
    g = cone_geodesic(cone, x, y)
    degenerate = bool(g.through_apex and 0.0 < float(x[0]) <= h)
    h = min(h, g.length)
    deriv = (busemann_eval(bf, g.point(np.array(h))) - busemann_eval(bf, x)) / h
    predicted = -float(np.cos(angle_at(cone, x, bf.xi, y)))
    return FirstVariation(deriv, predicted, abs(deriv - predicted), degenerate)


@dataclass
class LevelAngleReport:
    level_pairs: int
    level_angle_max: float
    level_angle_min: float
    sum_min: float
    sum_max: float
    n_pairs: int
    delta: float
    mesh: float

    @property
    def level_upper_ok(self) -> bool:
        return self.level_angle_max <= PI / 2 + 1e-9

    @property
    def level_lower_ok(self) -> bool:
        return self.level_angle_min > PI / 2 - 2 * self.delta - self.mesh

    @property
    def sum_ok(self) -> bool:
        return self.sum_min > PI - 2 * self.delta - self.mesh and self.sum_max <= PI + 1e-9

    @property
    def ok(self) -> bool:
        return self.level_upper_ok and self.level_lower_ok and self.sum_ok

    def to_dict(self):
        return {k: getattr(self, k) for k in ("level_pairs", "level_angle_max", "level_angle_min", "sum_min",
                                              "sum_max", "n_pairs", "delta", "mesh", "ok")}


def level_set_angle_check(bf: BusemannFunction, points, delta: float, mesh: float,
                          max_pairs: int = 2_000_000, seed: int = 0, level_tol: float = 1e-9) -> LevelAngleReport:
    """Angle sums angle_x(xi, y) + angle_y(xi, x) and level-pair angles over point pairs."""
    cone = bf.cone
    if not is_circle_cone(cone):
        raise ContractViolation("level-set angle check needs a cone over a circle")
    X = np.asarray(points, dtype=float)
    n = len(X)
    if n * (n - 1) // 2 <= max_pairs:
        I, J = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        I = rng.integers(0, n, size=max_pairs)
        J = rng.integers(0, n, size=max_pairs)
    D = cone.dist(X[I], X[J])
    keep = D > 0
    I, J = I[keep], J[keep]
    xi = np.broadcast_to(bf.xi.base, (len(I), len(bf.xi.base)))
    ax = circle_cone_angles(cone, X[I], xi, X[J], True, False)
    ay = circle_cone_angles(cone, X[J], xi, X[I], True, False)
    sums = ax + ay
    b = BusemannFunction(cone, bf.xi)(X)
    level = np.abs(b[I] - b[J]) <= level_tol
    if level.any():
        lev = np.concatenate([ax[level], ay[level]])
        lmax, lmin = float(lev.max()), float(lev.min())
    else:
        lmax, lmin = float("nan"), float("nan")
    return LevelAngleReport(int(level.sum()), lmax, lmin, float(sums.min()), float(sums.max()), len(I),
                            float(delta), float(mesh))


def ray_busemann_defect(bf: BusemannFunction, p, s: float, t: float) -> float:
    """|b(ray(s)) - b(ray(t)) - (t - s)| along the ray from p asymptotic to xi."""
    ray = asymptotic_ray(bf.cone, p, bf.xi)
    return abs(busemann_eval(bf, ray(np.array(s))) - busemann_eval(bf, ray(np.array(t))) - (t - s))


def busemann_of_ray(cone: EuclideanCone, p, xi: IdealPoint, horizon: float = 1e6):
    """Busemann function of the ray from p toward xi, from the definition at horizons
    T and 2T with the O(1/T) term extrapolated away (extended precision)."""
    ray = asymptotic_ray(cone, p, xi)
    far1 = ray(np.array(horizon)).astype(np.longdouble)
    far2 = ray(np.array(2 * horizon)).astype(np.longdouble)

    def b(P):
        P = np.asarray(P, dtype=np.longdouble)
        b1 = cone._dist(P, far1) - horizon
        b2 = cone._dist(P, far2) - 2 * horizon
        return (2 * b2 - b1).astype(float)

    return b
