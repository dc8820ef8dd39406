"""Geodesics, rays and angles on flat cones C0(circle(L)), L >= 2*pi.

Off the apex a flat cone is locally a plane: a point (t, a) is drawn in the
chart with reference angle ``ref`` at t * (cos(a - ref), sin(a - ref)), the
angular difference taken in (-L/2, L/2].  Two points whose base angles are
less than pi apart span a flat sector, so their geodesic is the chord in that
chart; otherwise the geodesic runs through the apex.

Cones over suspension(circle(L)) are handled through the isometry
C0(suspension(Z)) = R x C0(Z), (t, s, z) -> (t cos s, (t sin s, z)).
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np

from .metric_core import PI, Circle, ContractViolation, EuclideanCone, Space, Suspension

TWO_PI = 2 * PI


class DegenerateInput(ValueError):
    pass


@dataclass(eq=False)
class IdealPoint:
    """Asymptotic class of the apex ray toward ``base`` (a point of the base space)."""

    base: np.ndarray

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)


Target = Union[np.ndarray, IdealPoint]


def ideal(cone: EuclideanCone, *coords) -> IdealPoint:
    return IdealPoint(cone.base.point(*coords))


def is_circle_cone(space: Space) -> bool:
    return isinstance(space, EuclideanCone) and isinstance(space.base, Circle)


def is_suspension_cone(space: Space) -> bool:
    return (isinstance(space, EuclideanCone) and isinstance(space.base, Suspension)
            and isinstance(space.base.base, Circle))


def _require_circle_cone(cone: Space):
    if not is_circle_cone(cone):
        raise ContractViolation("operation needs a cone over a circle")
    if cone.base.length < TWO_PI - 1e-9:
        raise ContractViolation("cone over circle(L) is CAT(0) only for L >= 2*pi")


def signed_angle(L: float, a, b):
    """b - a reduced to [-L/2, L/2)."""
    return np.mod(np.asarray(b) - np.asarray(a) + L / 2, L) - L / 2


def circle_gap(period: float, a, b):
    d = np.mod(np.abs(np.asarray(a) - np.asarray(b)), period)
    return np.minimum(d, period - d)


# ---------------------------------------------------------------------------
# development charts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DevelopedChart:
    cone: EuclideanCone
    reference: float
    width: float = PI

    def develop(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        sigma = signed_angle(self.cone.base.length, self.reference, P[..., 1])
        if np.any(np.abs(sigma) > self.width + 1e-12):
            raise ContractViolation("point outside the chart")
        return P[..., :1] * np.stack([np.cos(sigma), np.sin(sigma)], axis=-1)

    def undevelop(self, XY) -> np.ndarray:
        XY = np.asarray(XY, dtype=float)
        t = np.hypot(XY[..., 0], XY[..., 1])
        a = self.reference + np.arctan2(XY[..., 1], XY[..., 0])
        return self.cone.normalize(np.stack([t, a], axis=-1))


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GeodesicPath:
    """Unit-speed minimizing geodesic; ``point(s)`` for s in [0, length]."""

    cone: EuclideanCone
    start: np.ndarray
    end: np.ndarray
    length: float
    through_apex: bool
    tie: bool = False
    _chart: DevelopedChart = None
    _A: np.ndarray = None
    _B: np.ndarray = None
    _legs: Tuple = None

    def point(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self._legs is not None:
            return self._legs(s)
        if self.through_apex:
            tp = self.start[0]
            first = np.stack([tp - np.minimum(s, tp), np.broadcast_to(self.start[1], s.shape)], axis=-1)
            second = np.stack([np.maximum(s - tp, 0.0), np.broadcast_to(self.end[1], s.shape)], axis=-1)
            return self.cone.normalize(np.where((s <= tp)[..., None], first, second))
        u = (self._B - self._A) / self.length
        return self._chart.undevelop(self._A + s[..., None] * u)

    __call__ = point

    @property
    def breakpoints(self) -> List[Tuple[float, np.ndarray]]:
        pts = [(0.0, self.start)]
        if self.through_apex and self._legs is None:
            pts.append((float(self.start[0]), self.cone.apex()))
        pts.append((self.length, self.end))
        return pts

    def to_csv(self) -> str:
        buf = io.StringIO()
        width = len(self.start)
        buf.write("s," + ",".join(f"x{i}" for i in range(width)) + "\n")
        for s, p in self.breakpoints:
            buf.write(f"{s!r}," + ",".join(repr(float(c)) for c in p) + "\n")
        return buf.getvalue()


@dataclass(eq=False)
class RayPath:
    """Unit-speed ray from ``base`` asymptotic to ``target``."""

    cone: EuclideanCone
    base: np.ndarray
    target: IdealPoint
    through_apex: bool
    _chart: DevelopedChart = None
    _origin: np.ndarray = None
    _direction: np.ndarray = None
    _fn: object = field(default=None, repr=False)

    def point(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        if self._fn is not None:
            return self._fn(tau)
        if self.through_apex:
            t0 = self.base[0]
            first = np.stack([t0 - np.minimum(tau, t0), np.broadcast_to(self.base[1], tau.shape)], axis=-1)
            second = np.stack([np.maximum(tau - t0, 0.0), np.broadcast_to(self.target.base[0], tau.shape)],
                              axis=-1)
            return self.cone.normalize(np.where((tau <= t0)[..., None], first, second))
        return self._chart.undevelop(self._origin + tau[..., None] * self._direction)

    __call__ = point


def _circle_geodesic(cone, p, q) -> GeodesicPath:
    L = cone.base.length
    length = float(cone.dist(p, q))
    if p[0] == 0.0 or q[0] == 0.0:
        # radial segment; the chart at the non-apex endpoint contains it
        ref = q[1] if p[0] == 0.0 else p[1]
        chart = DevelopedChart(cone, float(ref))
        return GeodesicPath(cone, p, q, length, False, False, chart, chart.develop(p), chart.develop(q))
    theta = float(circle_gap(L, p[1], q[1]))
    if theta >= PI:
        return GeodesicPath(cone, p, q, length, True, tie=abs(theta - PI) <= 1e-12)
    chart = DevelopedChart(cone, float(p[1]))
    return GeodesicPath(cone, p, q, length, False, False, chart, chart.develop(p), chart.develop(q))


def cone_geodesic(cone: EuclideanCone, p, q) -> GeodesicPath:
    p = cone.normalize(p)
    q = cone.normalize(q)
    if float(cone.dist(p, q)) == 0.0:
        raise DegenerateInput("geodesic between equal points")
    if is_suspension_cone(cone):
        return _product_geodesic(cone, p, q)
    _require_circle_cone(cone)
    return _circle_geodesic(cone, p, q)


def _circle_ray(cone, p, xi: IdealPoint) -> RayPath:
    L = cone.base.length
    xb = float(xi.base[0])
    if p[0] == 0.0:
        chart = DevelopedChart(cone, xb)
        return RayPath(cone, p, xi, False, chart, np.zeros(2), np.array([1.0, 0.0]))
    sigma = float(signed_angle(L, p[1], xb))
    if abs(sigma) >= PI:
        return RayPath(cone, p, xi, True)
    chart = DevelopedChart(cone, float(p[1]))
    return RayPath(cone, p, xi, False, chart, np.array([p[0], 0.0]), np.array([np.cos(sigma), np.sin(sigma)]))


def asymptotic_ray(cone: EuclideanCone, p, xi: IdealPoint) -> RayPath:
    p = cone.normalize(p)
    if is_suspension_cone(cone):
        return _product_ray(cone, p, xi)
    _require_circle_cone(cone)
    return _circle_ray(cone, p, xi)


# ---------------------------------------------------------------------------
# directions and angles
# ---------------------------------------------------------------------------


@dataclass
class DirectionDescriptor:
    """Initial direction at ``foot``: an angle on circle(2*pi) off the apex, a base
    coordinate on circle(L) at the apex."""

    foot: np.ndarray
    angle: float
    period: float


def _circle_direction_angles(L, P, T, target_is_ideal: bool):
    """Chart angle at P (outward radial = 0) of the initial direction toward T.

    P has shape (..., 2); T has shape (..., 1) for ideal targets, (..., 2) otherwise.
    """
    sigma = signed_angle(L, P[..., 1], T[..., -1])
    theta = np.abs(sigma)
    if target_is_ideal:
        ang = np.where(theta < PI, sigma, PI)
    else:
        tq = T[..., 0]
        chord = np.arctan2(tq * np.sin(sigma), tq * np.cos(sigma) - P[..., 0])
        ang = np.where((theta < PI) & (tq > 0), chord, PI)
    return np.mod(ang, TWO_PI)


def direction(cone: EuclideanCone, p, target: Target) -> DirectionDescriptor:
    _require_circle_cone(cone)
    p = cone.normalize(p)
    L = cone.base.length
    is_ideal = isinstance(target, IdealPoint)
    T = target.base if is_ideal else cone.normalize(target)
    if p[0] == 0.0:
        if not is_ideal and T[0] == 0.0:
            raise DegenerateInput("target equals the foot point")
        return DirectionDescriptor(p, float(T[-1]), L)
    if not is_ideal and float(cone.dist(p, T)) == 0.0:
        raise DegenerateInput("target equals the foot point")
    return DirectionDescriptor(p, float(_circle_direction_angles(L, p, T, is_ideal)), TWO_PI)


def circle_cone_angles(cone: EuclideanCone, P, A, B, a_ideal: bool, b_ideal: bool) -> np.ndarray:
    """Vectorized angle at P between the directions toward A and toward B.

    Ideal targets are given by their base coordinate arrays (shape (..., 1)).
    """
    L = cone.base.length
    P = np.asarray(P, dtype=float)
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    off = _angle_off_apex(L, P, A, B, a_ideal, b_ideal)
    at_apex = np.minimum(circle_gap(L, A[..., -1], B[..., -1]), PI)
    return np.where(P[..., 0] > 0, off, at_apex)


def _angle_off_apex(L, P, A, B, a_ideal, b_ideal):
    da = _circle_direction_angles(L, P, A, a_ideal)
    db = _circle_direction_angles(L, P, B, b_ideal)
    return circle_gap(TWO_PI, da, db)


def angle_at(cone: EuclideanCone, p, a: Target, b: Target) -> float:
    """Alexandrov angle at p between the geodesics/rays toward a and b."""
    p = cone.normalize(p)
    if is_suspension_cone(cone):
        return _product_angle(cone, p, a, b)
    _require_circle_cone(cone)
    a_ideal, b_ideal = isinstance(a, IdealPoint), isinstance(b, IdealPoint)
    A = a.base if a_ideal else cone.normalize(a)
    B = b.base if b_ideal else cone.normalize(b)
    for T, flag in ((A, a_ideal), (B, b_ideal)):
        if not flag and float(cone.dist(p, T)) == 0.0:
            raise DegenerateInput("angle with a degenerate side")
    return float(circle_cone_angles(cone, p, A, B, a_ideal, b_ideal))


# ---------------------------------------------------------------------------
# C0(suspension(circle)) = R x C0(circle)
# ---------------------------------------------------------------------------


def factor_cone(cone: EuclideanCone) -> EuclideanCone:
    return EuclideanCone(cone.base.base)


def to_product(cone: EuclideanCone, P) -> Tuple[np.ndarray, np.ndarray]:
    """(t, s, z) -> (t cos s, (t sin s, z))."""
    P = np.asarray(P, dtype=float)
    t, s = P[..., 0], P[..., 1]
    h = t * np.cos(s)
    c = np.concatenate([(t * np.sin(s))[..., None], P[..., 2:]], axis=-1)
    return h, factor_cone(cone).normalize(c)


def from_product(cone: EuclideanCone, h, C) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    C = np.asarray(C, dtype=float)
    r = C[..., 0]
    t = np.hypot(h, r)
    s = np.arctan2(r, h)
    return cone.normalize(np.concatenate([t[..., None], s[..., None], C[..., 1:]], axis=-1))


def product_distance(cone: EuclideanCone, P, Q) -> np.ndarray:
    hp, cp = to_product(cone, P)
    hq, cq = to_product(cone, Q)
    return np.hypot(hp - hq, factor_cone(cone).dist(cp, cq))


def _product_geodesic(cone, p, q) -> GeodesicPath:
    fc = factor_cone(cone)
    hp, cp = to_product(cone, p)
    hq, cq = to_product(cone, q)
    lc = float(fc.dist(cp, cq))
    length = float(np.hypot(hq - hp, lc))
    inner = _circle_geodesic(fc, cp, cq) if lc > 0 else None

    def legs(s):
        h = hp + (hq - hp) * s / length
        c = inner.point(s * lc / length) if inner is not None else np.broadcast_to(cp, s.shape + cp.shape)
        return from_product(cone, h, c)

    return GeodesicPath(cone, p, q, length, bool(inner and inner.through_apex), bool(inner and inner.tie),
                        _legs=legs)


def _product_ray(cone, p, xi: IdealPoint) -> RayPath:
    fc = factor_cone(cone)
    hp, cp = to_product(cone, p)
    s_xi = float(xi.base[0])
    along, across = np.cos(s_xi), np.sin(s_xi)
    inner = _circle_ray(fc, cp, IdealPoint(xi.base[1:])) if across > 1e-15 else None

    def fn(tau):
        h = hp + along * tau
        c = inner.point(tau * across) if inner is not None else np.broadcast_to(cp, tau.shape + cp.shape)
        return from_product(cone, h, c)

    return RayPath(cone, p, xi, bool(inner and inner.through_apex), _fn=fn)


def _product_tangent(cone, p, target: Target):
    """Unit initial velocity at p as (R-rate, factor speed, factor target, factor target is ideal)."""
    fc = factor_cone(cone)
    hp, cp = to_product(cone, p)
    if isinstance(target, IdealPoint):
        s = float(target.base[0])
        return np.cos(s), np.sin(s), target.base[1:], True
    hq, cq = to_product(cone, cone.normalize(target))
    lc = float(fc.dist(cp, cq))
    length = float(np.hypot(hq - hp, lc))
    if length == 0.0:
        raise DegenerateInput("angle with a degenerate side")
    return (hq - hp) / length, lc / length, cq, False


def _product_angle(cone, p, a: Target, b: Target) -> float:
    fc = factor_cone(cone)
    L = fc.base.length
    _, cp = to_product(cone, p)
    a1, w1, A, ia = _product_tangent(cone, p, a)
    a2, w2, B, ib = _product_tangent(cone, p, b)
    if w1 * w2 == 0.0:
        return float(np.arctan2(abs(a1 * w2 - a2 * w1), a1 * a2))
    if cp[0] > 0:
        f1 = float(_circle_direction_angles(L, cp, A, ia))
        f2 = float(_circle_direction_angles(L, cp, B, ib))
        u = np.array([a1, w1 * np.cos(f1), w1 * np.sin(f1)])
        v = np.array([a2, w2 * np.cos(f2), w2 * np.sin(f2)])
        return float(np.arctan2(np.linalg.norm(np.cross(u, v)), u @ v))
    gap = float(min(circle_gap(L, A[-1], B[-1]), PI))
    c = np.clip(a1 * a2 + w1 * w2 * np.cos(gap), -1.0, 1.0)
    return float(np.arccos(c))
