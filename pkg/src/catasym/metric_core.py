"""Model metric spaces with exactly computable distances.

Points are flat float arrays whose layout depends on the space:

    Circle(L)                 [angle]
    MetricGraph               [edge id, offset]
    Suspension(B)             [polar distance s, *B-point]
    EuclideanCone(B)          [radius t, *B-point]
    RoundSphere(n)            unit vector in R^(n+1), north pole = last axis
    Euclidean(n)              vector in R^n

Every distance routine broadcasts over leading axes, so ``space.dist(P, Q)``
with ``P.shape == (N, 1, k)`` and ``Q.shape == (1, M, k)`` gives an (N, M)
matrix.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

PI = math.pi
GEOM_TOL = 1e-9
MAX_NET_SIZE = 400_000
_SNAP = 1e-12


class ContractViolation(ValueError):
    """A point, descriptor or argument violates an operation's precondition."""


class SizeLimitError(RuntimeError):
    pass


def _as_points(P, ndim: int) -> np.ndarray:
    arr = np.asarray(P, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != ndim:
        raise ContractViolation(f"expected points with {ndim} coordinates, got shape {arr.shape}")
    return arr


class Space:
    """Common surface of the model spaces."""

    ndim: int
    bounded: bool = True

    # -- overridden per variant -------------------------------------------
    def _dist(self, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def normalize(self, P) -> np.ndarray:
        raise NotImplementedError

    def sentinel(self) -> np.ndarray:
        raise NotImplementedError

    def diameter(self) -> Optional[float]:
        return None

    def net_size(self, eps: float, radius: Optional[float] = None) -> int:
        raise NotImplementedError

    def _net(self, eps: float, radius: Optional[float]) -> np.ndarray:
        raise NotImplementedError

    def random(self, n: int, rng: np.random.Generator, radius: Optional[float] = None) -> np.ndarray:
        raise NotImplementedError

    def depth(self) -> int:
        return 0

    def to_config(self) -> str:
        raise NotImplementedError

    # -- shared ------------------------------------------------------------
    def point(self, *coords) -> np.ndarray:
        """Build a single normalized point from its coordinates."""
        flat = np.concatenate([np.atleast_1d(np.asarray(c, dtype=float)) for c in coords])
        return self.normalize(flat)

    def dist(self, P, Q) -> np.ndarray:
        P = _as_points(P, self.ndim)
        Q = _as_points(Q, self.ndim)
        return self._dist(P, Q)

    def pairwise(self, P, Q=None) -> np.ndarray:
        P = _as_points(P, self.ndim).reshape(-1, self.ndim)
        Q = P if Q is None else _as_points(Q, self.ndim).reshape(-1, self.ndim)
        return self._dist(P[:, None, :], Q[None, :, :])

    def __str__(self) -> str:
        return self.to_config()


# ---------------------------------------------------------------------------
# leaves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Circle(Space):
    length: float
    ndim: int = field(default=1, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ContractViolation("circle length must be positive")

    def _dist(self, P, Q):
        L = self.length
        a = np.mod(np.abs(P[..., 0] - Q[..., 0]), L)
        return np.minimum(a, L - a)

    def normalize(self, P):
        P = np.array(_as_points(P, 1), dtype=float)
        a = np.mod(P[..., 0], self.length)
        a = np.where(a >= self.length, 0.0, a)
        P[..., 0] = a
        return P

    def sentinel(self):
        return np.zeros(1)

    def diameter(self):
        return self.length / 2

    def _count(self, eps):
        n = math.ceil(self.length / (2 * eps))
        return max(4, 4 * math.ceil(n / 4))

    def net_size(self, eps, radius=None):
        return self._count(eps)

    def _net(self, eps, radius):
        n = self._count(eps)
        return (np.arange(n) * (self.length / n))[:, None]

    def random(self, n, rng, radius=None):
        return rng.uniform(0, self.length, size=(n, 1))

    def to_config(self):
        return f"circle({self.length!r})"


@dataclass(frozen=True)
class MetricGraph(Space):
    """Finite connected metric graph; ``edges`` holds (u, v, length) triples."""

    n_vertices: int
    edges: Tuple[Tuple[int, int, float], ...]
    ndim: int = field(default=2, init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = tuple((int(u), int(v), float(l)) for u, v, l in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.n_vertices < 1 or not edges:
            raise ContractViolation("graph needs at least one vertex and one edge")
        for u, v, l in edges:
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise ContractViolation(f"edge ({u}, {v}) references a missing vertex")
            if not l > 0:
                raise ContractViolation("edge lengths must be strictly positive")
        if not np.all(np.isfinite(self.vertex_distances)):
            raise ContractViolation("graph must be connected")

    @cached_property
    def vertex_distances(self) -> np.ndarray:
        n = self.n_vertices
        D = np.full((n, n), np.inf)
        np.fill_diagonal(D, 0.0)
        for u, v, l in self.edges:
            D[u, v] = min(D[u, v], l)
            D[v, u] = min(D[v, u], l)
        for k in range(n):
            D = np.minimum(D, D[:, k, None] + D[None, k, :])
        return D

    @cached_property
    def _edge_arrays(self):
        E = np.array(self.edges, dtype=float)
        return E[:, 0].astype(int), E[:, 1].astype(int), E[:, 2]

    def degree(self, v: int) -> int:
        return sum((u == v) + (w == v) for u, w, _ in self.edges)

    def _vertex_point(self, v: int) -> np.ndarray:
        for e, (u, w, l) in enumerate(self.edges):
            if u == v:
                return np.array([e, 0.0])
            if w == v:
                return np.array([e, l])
        raise ContractViolation(f"vertex {v} has no incident edge")

    def vertex_point(self, v: int) -> np.ndarray:
        return self._vertex_point(v)

    def _dist(self, P, Q):
        U, V, Ln = self._edge_arrays
        D = self.vertex_distances
        e1 = P[..., 0].astype(int)
        e2 = Q[..., 0].astype(int)
        o1, o2 = P[..., 1], Q[..., 1]
        u1, v1, l1 = U[e1], V[e1], Ln[e1]
        u2, v2, l2 = U[e2], V[e2], Ln[e2]
        r1, r2 = l1 - o1, l2 - o2
        best = np.minimum.reduce([
            o1 + D[u1, u2] + o2,
            o1 + D[u1, v2] + r2,
            r1 + D[v1, u2] + o2,
            r1 + D[v1, v2] + r2,
        ])
        return np.where(e1 == e2, np.minimum(best, np.abs(o1 - o2)), best)

    def normalize(self, P):
        P = np.array(_as_points(P, 2), dtype=float)
        flat = P.reshape(-1, 2)
        for row in flat:
            e = int(round(row[0]))
            if not 0 <= e < len(self.edges):
                raise ContractViolation(f"edge id {row[0]} out of range")
            u, v, l = self.edges[e]
            if not -_SNAP <= row[1] <= l + _SNAP:
                raise ContractViolation(f"offset {row[1]} outside edge {e} of length {l}")
            o = min(max(row[1], 0.0), l)
            if o <= _SNAP:
                row[:] = self._vertex_point(u)
            elif o >= l - _SNAP:
                row[:] = self._vertex_point(v)
            else:
                row[:] = (e, o)
        return flat.reshape(P.shape)

    def sentinel(self):
        return self._vertex_point(0)

    def diameter(self):
        return None

    def _edge_counts(self, eps):
        return [max(1, math.ceil(l / (2 * eps))) for _, _, l in self.edges]

    def net_size(self, eps, radius=None):
        return self.n_vertices + sum(k - 1 for k in self._edge_counts(eps))

    def _net(self, eps, radius):
        pts = [self._vertex_point(v) for v in range(self.n_vertices)]
        for e, ((_, _, l), k) in enumerate(zip(self.edges, self._edge_counts(eps))):
            pts.extend(np.array([e, j * l / k]) for j in range(1, k))
        return np.array(pts)

    def random(self, n, rng, radius=None):
        _, _, Ln = self._edge_arrays
        e = rng.choice(len(Ln), size=n, p=Ln / Ln.sum())
        o = rng.uniform(0, 1, size=n) * Ln[e]
        return np.stack([e.astype(float), o], axis=-1)

    def to_config(self):
        parts = ", ".join(f"{u}-{v}:{l!r}" for u, v, l in self.edges)
        return f"graph({self.n_vertices}; {parts})"


@dataclass(frozen=True)
class RoundSphere(Space):
    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ContractViolation("sphere dimension must be an integer >= 1")

    @property
    def ndim(self):
        return self.dim + 1

    def _dist(self, P, Q):
        return 2 * np.arctan2(np.linalg.norm(P - Q, axis=-1), np.linalg.norm(P + Q, axis=-1))

    def normalize(self, P):
        P = _as_points(P, self.ndim)
        n = np.linalg.norm(P, axis=-1, keepdims=True)
        if np.any(n == 0):
            raise ContractViolation("zero vector is not a sphere point")
        return P / n

    def sentinel(self):
        e = np.zeros(self.ndim)
        e[-1] = 1.0
        return e

    def diameter(self):
        return PI

    def _as_suspension(self) -> Space:
        return Circle(2 * PI) if self.dim == 1 else Suspension(RoundSphere(self.dim - 1))

    def from_polar(self, S: np.ndarray) -> np.ndarray:
        """Suspension coordinates (s, base...) to unit vectors."""
        S = np.asarray(S, dtype=float)
        if self.dim == 1:
            return np.stack([np.cos(S[..., 0]), np.sin(S[..., 0])], axis=-1)
        s = S[..., :1]
        return np.concatenate([np.sin(s) * S[..., 1:], np.cos(s)], axis=-1)

    def net_size(self, eps, radius=None):
        return self._as_suspension().net_size(eps)

    def _net(self, eps, radius):
        return self.from_polar(self._as_suspension()._net(eps, None))

    def random(self, n, rng, radius=None):
        v = rng.normal(size=(n, self.ndim))
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def to_config(self):
        return f"sphere({self.dim})"


@dataclass(frozen=True)
class Euclidean(Space):
    dim: int
    bounded: bool = field(default=False, init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ContractViolation("euclidean dimension must be an integer >= 1")

    @property
    def ndim(self):
        return self.dim

    def _dist(self, P, Q):
        return np.linalg.norm(P - Q, axis=-1)

    def normalize(self, P):
        return np.array(_as_points(P, self.dim), dtype=float)

    def sentinel(self):
        return np.zeros(self.dim)

    def _axis(self, eps, radius):
        step = 2 * eps / math.sqrt(self.dim)
        k = math.ceil(radius / step)
        return np.arange(-k, k + 1) * step

    def net_size(self, eps, radius=None):
        if radius is None:
            raise ContractViolation("unbounded space needs a radius cap")
        return len(self._axis(eps, radius)) ** self.dim

    def _net(self, eps, radius):
        ax = self._axis(eps, radius)
        grid = np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim)
        return grid[np.linalg.norm(grid, axis=-1) <= radius + eps]

    def random(self, n, rng, radius=None):
        if radius is None:
            raise ContractViolation("unbounded space needs a radius cap")
        v = rng.normal(size=(n, self.dim))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        return v * radius * rng.uniform(0, 1, size=(n, 1)) ** (1 / self.dim)

    def to_config(self):
        return f"euclidean({self.dim})"


# ---------------------------------------------------------------------------
# composites
# ---------------------------------------------------------------------------


def _check_base(base: Space):
    if not isinstance(base, Space):
        raise ContractViolation("base must be a space descriptor")
    if not base.bounded:
        raise ContractViolation("base of a cone or suspension must be bounded")
    if base.depth() >= 2:
        raise ContractViolation("nesting depth is limited to 2")


@dataclass(frozen=True)
class Suspension(Space):
    """Spherical suspension of ``base``: cos d = cos s cos s' + sin s sin s' cos(d_B ^ pi)."""

    base: Space

    def __post_init__(self):
        _check_base(self.base)

    @property
    def ndim(self):
        return 1 + self.base.ndim

    def depth(self):
        return 1 + self.base.depth()

    def _dist(self, P, Q):
        s, t = P[..., 0], Q[..., 0]
        theta = np.minimum(self.base._dist(P[..., 1:], Q[..., 1:]), PI)
        sst = np.sin(s) * np.sin(t)
        h = np.sin((s - t) / 2) ** 2 + sst * np.sin(theta / 2) ** 2
        # 1 - h written without cancellation near antipodal pairs
        g = np.cos((s + t) / 2) ** 2 + sst * np.cos(theta / 2) ** 2
        return 2 * np.arctan2(np.sqrt(np.clip(h, 0.0, None)), np.sqrt(np.clip(g, 0.0, None)))

    def normalize(self, P):
        P = np.array(_as_points(P, self.ndim), dtype=float)
        s = P[..., 0]
        if np.any(s < -_SNAP) or np.any(s > PI + _SNAP):
            raise ContractViolation("polar distance must lie in [0, pi]")
        s = np.clip(s, 0.0, PI)
        north = s <= _SNAP
        south = s >= PI - _SNAP
        s = np.where(north, 0.0, np.where(south, PI, s))
        base = self.base.normalize(P[..., 1:])
        base = np.where((north | south)[..., None], self.base.sentinel(), base)
        return np.concatenate([s[..., None], base], axis=-1)

    def sentinel(self):
        return np.concatenate([[0.0], self.base.sentinel()])

    def pole(self, south: bool = False) -> np.ndarray:
        p = self.sentinel()
        p[0] = PI if south else 0.0
        return p

    def diameter(self):
        return PI

    def _rings(self, eps):
        n = math.ceil(PI / eps)
        n += n % 2
        return np.arange(n + 1) * (PI / n)

    def _ring_eps(self, eps, s):
        return min(eps / (2 * math.sin(s)), 4 * PI)

    def net_size(self, eps, radius=None):
        rings = self._rings(eps)
        return 2 + sum(self.base.net_size(self._ring_eps(eps, s)) for s in rings[1:-1])

    def _net(self, eps, radius):
        rings = self._rings(eps)
        blocks = [self.pole()[None, :]]
        for s in rings[1:-1]:
            B = self.base._net(self._ring_eps(eps, s), None)
            blocks.append(np.concatenate([np.full((len(B), 1), s), B], axis=1))
        blocks.append(self.pole(south=True)[None, :])
        return np.concatenate(blocks)

    def random(self, n, rng, radius=None):
        s = np.arccos(rng.uniform(-1, 1, size=(n, 1)))
        return self.normalize(np.concatenate([s, self.base.random(n, rng)], axis=1))

    def to_config(self):
        return f"suspension({self.base.to_config()})"


@dataclass(frozen=True)
class EuclideanCone(Space):
    """Euclidean cone C0(base): d^2 = t^2 + t'^2 - 2 t t' cos(d_B ^ pi)."""

    base: Space
    bounded: bool = field(default=False, init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_base(self.base)

    @property
    def ndim(self):
        return 1 + self.base.ndim

    def depth(self):
        return 1 + self.base.depth()

    def base_dist(self, P, Q):
        """Truncated base distance min(d_B, pi) between the base parts."""
        return np.minimum(self.base._dist(P[..., 1:], Q[..., 1:]), PI)

    def _dist(self, P, Q):
        t, u = P[..., 0], Q[..., 0]
        theta = self.base_dist(P, Q)
        return np.sqrt((t - u) ** 2 + 4 * t * u * np.sin(theta / 2) ** 2)

    def normalize(self, P):
        P = np.array(_as_points(P, self.ndim), dtype=float)
        t = P[..., 0]
        if np.any(t < -_SNAP):
            raise ContractViolation("cone radius must be nonnegative")
        apex = t <= _SNAP
        t = np.where(apex, 0.0, t)
        base = self.base.normalize(P[..., 1:])
        base = np.where(apex[..., None], self.base.sentinel(), base)
        return np.concatenate([t[..., None], base], axis=-1)

    def sentinel(self):
        return np.concatenate([[0.0], self.base.sentinel()])

    apex = sentinel

    def _rings(self, eps, radius):
        if radius is None:
            raise ContractViolation("unbounded space needs a radius cap")
        n = max(1, math.ceil(radius / eps))
        return np.arange(n + 1) * (radius / n)

    def net_size(self, eps, radius=None):
        rings = self._rings(eps, radius)
        return 1 + sum(self.base.net_size(eps / (2 * t)) for t in rings[1:])

    def _net(self, eps, radius):
        rings = self._rings(eps, radius)
        blocks = [self.apex()[None, :]]
        for t in rings[1:]:
            B = self.base._net(eps / (2 * t), None)
            blocks.append(np.concatenate([np.full((len(B), 1), t), B], axis=1))
        return np.concatenate(blocks)

    def random(self, n, rng, radius=None):
        if radius is None:
            raise ContractViolation("unbounded space needs a radius cap")
        t = radius * rng.uniform(0, 1, size=(n, 1))
        return self.normalize(np.concatenate([t, self.base.random(n, rng)], axis=1))

    def to_config(self):
        return f"cone({self.base.to_config()})"


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleSet:
    space: Space
    points: np.ndarray
    mesh: float
    seed: int = 0
    radius: Optional[float] = None

    def __post_init__(self):
        if not self.mesh > 0:
            raise ContractViolation("sample mesh must be positive")

    def __len__(self):
        return len(self.points)


def distance(space: Space, p, q) -> float:
    p = space.normalize(p)
    q = space.normalize(q)
    return float(space.dist(p, q))


def truncated_distance(space: Space, p, q) -> float:
    return min(distance(space, p, q), PI)


def epsilon_net(space: Space, eps: float, radius: Optional[float] = None, seed: int = 0,
                max_size: int = MAX_NET_SIZE) -> SampleSet:
    """Deterministic eps-net of ``space`` (of the ball of ``radius`` about the
    origin/apex for unbounded spaces)."""
    if not eps > 0:
        raise ContractViolation("eps must be positive")
    if not space.bounded and radius is None:
        raise ContractViolation("unbounded space needs a radius cap")
    size = space.net_size(eps, radius)
    if size > max_size:
        raise SizeLimitError(f"net of {space} at eps={eps} would have {size} points (cap {max_size})")
    pts = space.normalize(space._net(eps, radius))
    return SampleSet(space, pts, float(eps), seed, radius if not space.bounded else None)


def rescale(space: Space, lam: float) -> Space:
    if not lam > 0:
        raise ContractViolation("scale factor must be positive")
    if isinstance(space, Circle):
        return Circle(space.length * lam)
    if isinstance(space, MetricGraph):
        return MetricGraph(space.n_vertices, tuple((u, v, l * lam) for u, v, l in space.edges))
    raise ContractViolation(f"rescaling {type(space).__name__} is not supported")


def iter_pairwise_blocks(space: Space, P: np.ndarray, Q: Optional[np.ndarray] = None, block: int = 512):
    """Yield (row offset, distance block) for the P x Q distance matrix."""
    Q = P if Q is None else Q
    for i in range(0, len(P), block):
        yield i, space.pairwise(P[i:i + block], Q)


def diameter_bounds(space: Space, sample: SampleSet) -> Tuple[float, float]:
    if len(sample) == 0:
        raise ContractViolation("empty sample")
    if not space.bounded and sample.radius is None:
        raise ContractViolation("diameter of an unbounded space needs a capped sample")
    lower = max(float(B.max()) for _, B in iter_pairwise_blocks(space, sample.points))
    return lower, lower + 2 * sample.mesh


# ---------------------------------------------------------------------------
# config values
# ---------------------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def eval_number(text: str) -> float:
    """Evaluate an arithmetic expression over numbers and ``pi``."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return PI
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        raise ContractViolation(f"unsupported expression {text!r}")

    try:
        return ev(ast.parse(text.strip(), mode="eval"))
    except SyntaxError as exc:
        raise ContractViolation(f"cannot parse number {text!r}") from exc


def _split_call(text: str) -> Tuple[str, str]:
    text = text.strip()
    i = text.find("(")
    if i < 0 or not text.endswith(")"):
        raise ContractViolation(f"malformed space value {text!r}")
    return text[:i].strip().lower(), text[i + 1:-1]


def parse_space(text: str) -> Space:
    """Parse a config value such as ``cone(suspension(circle(2*pi+0.1)))``."""
    name, arg = _split_call(text)
    if name == "circle":
        return Circle(eval_number(arg))
    if name in ("sphere", "round_sphere"):
        return RoundSphere(int(eval_number(arg)))
    if name == "euclidean":
        return Euclidean(int(eval_number(arg)))
    if name == "suspension":
        return Suspension(parse_space(arg))
    if name in ("cone", "euclidean_cone"):
        return EuclideanCone(parse_space(arg))
    if name in ("graph", "metric_graph"):
        head, _, body = arg.partition(";")
        edges = []
        for item in filter(None, (s.strip() for s in body.split(","))):
            ends, _, length = item.partition(":")
            u, _, v = ends.partition("-")
            edges.append((int(u), int(v), eval_number(length)))
        return MetricGraph(int(eval_number(head)), tuple(edges))
    raise ContractViolation(f"unknown space variant {name!r}")


def theta_graph(a: float, b: float, c: float) -> MetricGraph:
    """Two junction vertices joined by three arcs."""
    return MetricGraph(2, ((0, 1, a), (0, 1, b), (0, 1, c)))


def random_points(space: Space, n: int, seed: int = 0, radius: Optional[float] = None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return space.normalize(space.random(n, rng, radius))


def as_point_list(P: np.ndarray) -> list:
    return np.asarray(P, dtype=float).tolist()
