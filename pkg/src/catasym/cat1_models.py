"""Antipodes, polar sets and relaxed (m, delta)-suspenders on CAT(1) models.

Suprema over the whole space are bounded from a sample: z -> d(p, z) + d(z, q)
is 2-Lipschitz, so ``sup over space <= sup over sample + 2 * mesh``.
"""
from __future__ import annotations

import heapq
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .metric_core import (PI, Circle, ContractViolation, MetricGraph, RoundSphere, SampleSet, Space,
                          Suspension)

EXACT_TOL = 1e-9


class SearchBudgetExceeded(RuntimeError):
    def __init__(self, message: str, best_partial: Sequence[Tuple[int, int]] = ()):
        super().__init__(message)
        self.best_partial = list(best_partial)


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------


@dataclass
class Cat1Report:
    admissible: bool
    geodesically_complete: bool
    shortest_cycle: Optional[float] = None
    detail: str = ""

    def __bool__(self):
        return self.admissible


def _shortest_cycle(g: MetricGraph) -> float:
    """Girth of a weighted multigraph: min over edges of l + d_{G - e}(u, v)."""
    best = math.inf
    adj: Dict[int, List[Tuple[int, float, int]]] = {v: [] for v in range(g.n_vertices)}
    for e, (u, v, l) in enumerate(g.edges):
        adj[u].append((v, l, e))
        adj[v].append((u, l, e))
    for e, (u, v, l) in enumerate(g.edges):
        if u == v:
            best = min(best, l)
            continue
        dist = {u: 0.0}
        heap = [(0.0, u)]
        while heap:
            d, a = heapq.heappop(heap)
            if d > dist.get(a, math.inf) or d + l >= best:
                continue
            if a == v:
                best = min(best, d + l)
                break
            for b, w, f in adj[a]:
                if f == e:
                    continue
                if d + w < dist.get(b, math.inf):
                    dist[b] = d + w
                    heapq.heappush(heap, (d + w, b))
    return best


def admits_cat1(space: Space) -> Cat1Report:
    """Girth criterion: a model is CAT(1) iff every closed loop is at least 2*pi long."""
    two_pi = 2 * PI - EXACT_TOL
    if isinstance(space, Circle):
        return Cat1Report(space.length >= two_pi, True, space.length)
    if isinstance(space, MetricGraph):
        girth = _shortest_cycle(space)
        complete = all(space.degree(v) >= 2 for v in range(space.n_vertices))
        return Cat1Report(girth >= two_pi, complete, girth,
                          "tree" if math.isinf(girth) else "")
    if isinstance(space, Suspension) and isinstance(space.base, Circle):
        return Cat1Report(space.base.length >= two_pi, True, space.base.length)
    if isinstance(space, RoundSphere):
        return Cat1Report(True, True, 2 * PI)
    raise ContractViolation(f"CAT(1) test not available for {space}")


def is_homogeneous(space: Space) -> bool:
    """Whether the isometry group acts transitively (lets a search fix its first point)."""
    if isinstance(space, (Circle, RoundSphere)):
        return True
    if isinstance(space, Suspension) and isinstance(space.base, Circle):
        return abs(space.base.length - 2 * PI) <= EXACT_TOL
    return False


# ---------------------------------------------------------------------------
# antipodes and polar sets
# ---------------------------------------------------------------------------


@dataclass
class AntipodeReport:
    query: np.ndarray
    candidates: np.ndarray
    distances: np.ndarray
    tol: float


def _require(sample: SampleSet):
    if len(sample) == 0:
        raise ContractViolation("empty sample")


def antipode_set(space: Space, z, sample: SampleSet, tol: float) -> AntipodeReport:
    _require(sample)
    z = space.normalize(z)
    d = space.pairwise(z[None, :], sample.points)[0]
    keep = d >= PI - tol
    return AntipodeReport(z, sample.points[keep], d[keep], tol)


def polar_set(space: Space, A, sample: SampleSet, tol: float) -> np.ndarray:
    _require(sample)
    A = space.normalize(np.atleast_2d(A))
    if len(A) == 0:
        raise ContractViolation("polar set of the empty set")
    dmin = space.pairwise(A, sample.points).min(axis=0)
    return sample.points[dmin >= PI / 2 - tol]


# ---------------------------------------------------------------------------
# suspenders
# ---------------------------------------------------------------------------


@dataclass
class SuspenderCertificate:
    m: int
    p: np.ndarray
    q: np.ndarray
    delta: float
    sample_mesh: float
    sum_sup_raw: np.ndarray
    sum_sup_certified: np.ndarray
    pairwise_max: float
    indices: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def residuals(self) -> Dict[str, float]:
        """Slack of each defining inequality (positive = satisfied)."""
        out = {f"sum_{i}": PI + self.delta - float(s) for i, s in enumerate(self.sum_sup_certified)}
        out["pairwise"] = PI / 2 + self.delta - self.pairwise_max
        return out

    @property
    def defect(self) -> float:
        """Infimum of the deltas this tuple certifies on its sample (strict)."""
        return max(float(np.max(self.sum_sup_certified)) - PI, self.pairwise_max - PI / 2)

    @property
    def raw_defect(self) -> float:
        return max(float(np.max(self.sum_sup_raw)) - PI, self.pairwise_max - PI / 2)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "p": self.p.tolist(),
            "q": self.q.tolist(),
            "delta": self.delta,
            "sample_mesh": self.sample_mesh,
            "sum_sup_raw": self.sum_sup_raw.tolist(),
            "sum_sup_certified": self.sum_sup_certified.tolist(),
            "pairwise_max": self.pairwise_max,
            "residuals": self.residuals,
        }


def _cross_distances(space: Space, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """All d(p_i,p_j), d(p_i,q_j), d(q_i,q_j) for i != j."""
    m = len(p)
    if m < 2:
        return np.zeros(0)
    Dpp, Dpq, Dqq = space.pairwise(p, p), space.pairwise(p, q), space.pairwise(q, q)
    off = ~np.eye(m, dtype=bool)
    return np.concatenate([Dpp[off], Dpq[off], Dqq[off]])


def measure_tuple(space: Space, sample: SampleSet, p, q, delta: float,
                  indices: Sequence[Tuple[int, int]] = ()) -> SuspenderCertificate:
    """Evaluate the defining quantities of a candidate suspender on ``sample``."""
    _require(sample)
    p = space.normalize(np.atleast_2d(p))
    q = space.normalize(np.atleast_2d(q))
    if p.shape != q.shape:
        raise ContractViolation("p and q tuples must have equal length")
    sums = (space.pairwise(p, sample.points) + space.pairwise(q, sample.points)).max(axis=1)
    sums = np.maximum(sums, space.dist(p, q))  # z = p is always admissible
    cross = _cross_distances(space, p, q)
    return SuspenderCertificate(
        m=len(p), p=p, q=q, delta=float(delta), sample_mesh=sample.mesh,
        sum_sup_raw=sums, sum_sup_certified=sums + 2 * sample.mesh,
        pairwise_max=float(cross.max()) if cross.size else -math.inf,
        indices=list(indices))


def certify_tuple(space: Space, sample: SampleSet, p, q, delta: float) -> Optional[SuspenderCertificate]:
    cert = measure_tuple(space, sample, p, q, delta)
    return cert if cert.defect < delta else None


def certified_delta(space: Space, sample: SampleSet, p, q, resolution: float = 1e-3,
                    upper: float = 1.0) -> Optional[float]:
    """Smallest delta (to ``resolution``) for which the tuple certifies, by bisection."""
    cert = measure_tuple(space, sample, p, q, upper)

    def passes(d):
        return cert.defect < d

    if not passes(upper):
        return None
    lo, hi = 0.0, upper
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi


class _Search:
    """Depth-first search for m opposite pairs on a finite sample.

    Pairs are canonical (p index < q index, except an anchored first pair) and
    ordered by p index, so every unordered configuration is visited once and
    the first hit is the lexicographically smallest.
    """

    def __init__(self, space, sample, delta, budget):
        self.space = space
        self.P = sample.points
        self.mesh = sample.mesh
        self.delta = delta
        self.budget = budget
        self.spent = 0
        self.best: List[Tuple[int, int]] = []
        self._rows: "OrderedDict[int, np.ndarray]" = OrderedDict()
        self._max_rows = max(32, int(2e8 // (8 * max(len(self.P), 1))))
        self._pair_ok: Dict[Tuple[int, int], bool] = {}

    def row(self, i: int) -> np.ndarray:
        r = self._rows.get(i)
        if r is None:
            r = self.space.pairwise(self.P[i:i + 1], self.P)[0]
            self._rows[i] = r
            if len(self._rows) > self._max_rows:
                self._rows.popitem(last=False)
        else:
            self._rows.move_to_end(i)
        return r

    def dist_to(self, i: int, idx: np.ndarray) -> np.ndarray:
        r = self._rows.get(i)
        if r is not None:
            return r[idx]
        return self.space.pairwise(self.P[i:i + 1], self.P[idx])[0]

    def tick(self):
        self.spent += 1
        if self.spent > self.budget:
            raise SearchBudgetExceeded(f"suspender search exceeded budget {self.budget}", self.best)

    def pair_ok(self, i: int, j: int) -> bool:
        key = (i, j) if i < j else (j, i)
        hit = self._pair_ok.get(key)
        if hit is None:
            self.tick()
            s = float(np.max(self.row(i) + self.row(j)))
            hit = s + 2 * self.mesh < PI + self.delta
            self._pair_ok[key] = hit
        return hit

    def window(self, d: np.ndarray) -> np.ndarray:
        # (dortho) upper bound plus the consequence d > pi/2 - 2 delta of a genuine suspender
        return (d < PI / 2 + self.delta) & (d > PI / 2 - 2 * self.delta)

    def opposite_candidates(self, i: int, pool: np.ndarray) -> np.ndarray:
        d = self.dist_to(i, pool)
        # d(p, q) is the sum at z = p, and it exceeds pi - delta for any genuine pair
        return pool[(d > PI - self.delta) & (d + 2 * self.mesh < PI + self.delta)]

    def run(self, m: int, anchors: Sequence[int], anchored: bool) -> Optional[List[Tuple[int, int]]]:
        everything = np.arange(len(self.P))
        for a in anchors:
            self.tick()
            pool = everything[everything != a] if anchored else everything[everything > a]
            for b in self.opposite_candidates(a, pool):
                if not self.pair_ok(a, b):
                    continue
                chosen = [(int(a), int(b))]
                if not self.best:
                    self.best = list(chosen)
                if m == 1:
                    return chosen
                rest = pool[pool != b]
                rest = rest[self.window(self.dist_to(a, rest))]
                rest = rest[self.window(self.dist_to(b, rest))]
                found = self._extend(chosen, rest, m)
                if found:
                    return found
        return None

    def _extend(self, chosen, cand: np.ndarray, m: int):
        for k, i in enumerate(cand):
            self.tick()
            after = cand[k + 1:]
            for j in self.opposite_candidates(i, after):
                if not self.pair_ok(i, j):
                    continue
                nxt = chosen + [(int(i), int(j))]
                if len(nxt) > len(self.best):
                    self.best = list(nxt)
                if len(nxt) == m:
                    return nxt
                sub = after[after != j]
                sub = sub[self.window(self.dist_to(i, sub))]
                sub = sub[self.window(self.dist_to(j, sub))]
                if len(sub) < 2 * (m - len(nxt)):
                    continue
                found = self._extend(nxt, sub, m)
                if found:
                    return found
        return None


def _anchor_index(space: Space, sample: SampleSet) -> int:
    return int(np.argmin(space.pairwise(space.sentinel()[None, :], sample.points)[0]))


def find_suspender(space: Space, sample: SampleSet, m: int, delta: float, budget: int = 2_000_000,
                   anchor: str = "auto") -> Optional[SuspenderCertificate]:
    """Search ``sample`` for an (m, delta)-suspender certified with the mesh correction.

    ``anchor="auto"`` fixes the first point on homogeneous models (circle, round
    sphere, suspension of the 2*pi circle); ``"none"`` searches every first point.
    """
    if m < 1:
        raise ContractViolation("m must be >= 1")
    _require(sample)
    if not admits_cat1(space):
        raise ContractViolation(f"{space} is not CAT(1)")
    search = _Search(space, sample, delta, budget)
    if anchor not in ("auto", "none"):
        raise ContractViolation(f"unknown anchor mode {anchor!r}")
    anchored = anchor == "auto" and is_homogeneous(space)
    anchors = [_anchor_index(space, sample)] if anchored else list(range(len(sample)))
    found = search.run(m, anchors, anchored)
    if found is None:
        return None
    P = sample.points
    cert = measure_tuple(space, sample, P[[i for i, _ in found]], P[[j for _, j in found]], delta, found)
    assert cert.defect < delta
    return cert


def max_suspender_order(space: Space, sample: SampleSet, delta: float, budget: int = 2_000_000,
                        m_cap: int = 8) -> int:
    order = 0
    for m in range(1, m_cap + 1):
        if find_suspender(space, sample, m, delta, budget) is None:
            break
        order = m
    return order


@dataclass
class ConclusionReport:
    sum_inf_raw: np.ndarray
    sum_inf_certified: np.ndarray
    sum_slack: float
    pairwise_min: float
    pairwise_slack: float

    @property
    def ok(self) -> bool:
        return self.sum_slack > 0 and self.pairwise_slack > 0

    def to_dict(self):
        return {"sum_inf_raw": self.sum_inf_raw.tolist(), "sum_inf_certified": self.sum_inf_certified.tolist(),
                "sum_slack": self.sum_slack, "pairwise_min": self.pairwise_min,
                "pairwise_slack": self.pairwise_slack, "ok": self.ok}


def verify_suspender_conclusions(space: Space, cert: SuspenderCertificate, sample: SampleSet) -> ConclusionReport:
    """Check inf of the sums > pi - delta and pairwise distances > pi/2 - 2 delta."""
    sums = (space.pairwise(cert.p, sample.points) + space.pairwise(cert.q, sample.points)).min(axis=1)
    certified = sums - 2 * sample.mesh
    cross = _cross_distances(space, cert.p, cert.q)
    pmin = float(cross.min()) if cross.size else math.inf
    return ConclusionReport(
        sum_inf_raw=sums, sum_inf_certified=certified,
        sum_slack=float(certified.min()) - (PI - cert.delta),
        pairwise_min=pmin, pairwise_slack=pmin - (PI / 2 - 2 * cert.delta))


def fullsusp_gap(space: Space, sample: SampleSet, p) -> float:
    """min over sample z of max_i |d(p_i, z) - pi/2|."""
    p = space.normalize(np.atleast_2d(p))
    D = space.pairwise(p, sample.points)
    return float(np.abs(D - PI / 2).max(axis=0).min())


@dataclass
class AperpResult:
    residual: float
    n_pairs: int

    @property
    def empty(self) -> bool:
        return self.n_pairs == 0


def aperp_check(space: Space, sample: SampleSet, p, delta: float, block: int = 1024) -> AperpResult:
    """max |sum_i cos d(p_i, z1) cos d(p_i, z2)| over sample pairs with |d(z1, z2) - pi/2| < delta."""
    p = space.normalize(np.atleast_2d(p))
    Z = sample.points
    C = np.cos(space.pairwise(Z, p))
    worst, count = 0.0, 0
    for i in range(0, len(Z), block):
        D = space.pairwise(Z[i:i + block], Z)
        mask = np.abs(D - PI / 2) < delta
        if mask.any():
            G = np.abs(C[i:i + block] @ C.T)
            worst = max(worst, float(G[mask].max()))
            count += int(mask.sum())
    return AperpResult(worst, count)


def _join_chord_distance(v1, r1, v2, r2, theta_w):
    """Spherical distance of join points (v, r w) from the difference and sum chords."""
    rr = 4 * r1 * r2
    minus = np.sum((v1 - v2) ** 2, axis=-1) + (r1 - r2) ** 2 + rr * np.sin(theta_w / 2) ** 2
    plus = np.sum((v1 + v2) ** 2, axis=-1) + (r1 - r2) ** 2 + rr * np.cos(theta_w / 2) ** 2
    return 2 * np.arctan2(np.sqrt(np.clip(minus, 0, None)), np.sqrt(np.clip(plus, 0, None)))


def verify_join_splitting(space: Space, sample: SampleSet, p, q, max_pairs: int = 2_000_000,
                          seed: int = 0) -> float:
    """Max deviation between measured distances and the spherical-join law induced by an
    exact suspender: z -> (cos d(p_i, z))_i on the round factor, nearest polar point on the other."""
    dummy = SampleSet(space, sample.points, sample.mesh)
    cert = measure_tuple(space, dummy, p, q, 0.0)
    cross = _cross_distances(space, cert.p, cert.q)
    exact = (np.max(np.abs(cert.sum_sup_raw - PI)) <= EXACT_TOL
             and (cross.size == 0 or np.max(np.abs(cross - PI / 2)) <= EXACT_TOL))
    if not exact:
        raise ContractViolation("join splitting needs an exact suspender")
    Z = sample.points
    V = np.cos(space.pairwise(Z, cert.p))
    ends = np.concatenate([cert.p, cert.q])
    perp_mask = space.pairwise(ends, Z).min(axis=0) >= PI / 2 - EXACT_TOL
    W = Z[perp_mask]
    if len(W):
        DW = space.pairwise(Z, W)
        nearest = W[np.argmin(DW, axis=1)]
        # weight of the perpendicular factor: cos of the distance to its nearest point
        # (sqrt(1 - |V|^2) loses half the digits when the weight is tiny)
        R = np.cos(np.minimum(DW.min(axis=1), PI / 2))
    else:
        nearest = Z
        R = np.zeros(len(Z))
    n = len(Z)
    if n * (n - 1) // 2 <= max_pairs:
        I, J = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(seed)
        I = rng.integers(0, n, size=max_pairs)
        J = rng.integers(0, n, size=max_pairs)
    worst = 0.0
    for s in range(0, len(I), 200_000):
        i, j = I[s:s + 200_000], J[s:s + 200_000]
        measured = space.dist(Z[i], Z[j])
        theta_w = np.minimum(space.dist(nearest[i], nearest[j]), PI) if len(W) else np.zeros(len(i))
        model = _join_chord_distance(V[i], R[i], V[j], R[j], theta_w)
        worst = max(worst, float(np.max(np.abs(measured - model))))
    return worst


def suspender_orthonormal_sphere(dim: int, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """The exact m-suspender e_1..e_m / -e_1..-e_m on the round sphere S^dim."""
    E = np.eye(dim + 1)[:m]
    return E, -E


def circle_quarter_suspender(L: float, m: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """(0, L/4) opposite (L/2, 3L/4) on circle(L); the m = 1 case keeps only the first pair."""
    p = np.array([[0.0], [L / 4]])[:m]
    q = np.array([[L / 2], [3 * L / 4]])[:m]
    return p, q


def suspension_suspender(L: float) -> Tuple[np.ndarray, np.ndarray]:
    """Poles plus the quarter pair on the equator of suspension(circle(L))."""
    p = np.array([[0.0, 0.0], [PI / 2, 0.0], [PI / 2, L / 4]])
    q = np.array([[PI, 0.0], [PI / 2, L / 2], [PI / 2, 3 * L / 4]])
    return p, q

