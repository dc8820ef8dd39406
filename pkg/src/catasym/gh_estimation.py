"""Two-sided Gromov-Hausdorff bounds between model spaces.

Upper bounds come from explicit correspondences (closed-form scaling families,
or a greedy correspondence between samples); lower bounds from the diameter
and 3-point packing obstructions.  Every bound carries a provenance string.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .metric_core import (PI, Circle, ContractViolation, RoundSphere, SampleSet, Space, Suspension,
                          diameter_bounds, epsilon_net, iter_pairwise_blocks)

GREEDY_MAX_POINTS = 2500
PACKING_MAX_POINTS = 1200
# bounds are rounded outward by this much to absorb floating-point error
ROUNDING_GUARD = 1e-12


@dataclass
class Correspondence:
    """Index pairs into two point sets; every point of either set occurs at least once."""

    X: np.ndarray
    Y: np.ndarray
    pairs: np.ndarray

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=int).reshape(-1, 2)
        if (np.setdiff1d(np.arange(len(self.X)), self.pairs[:, 0]).size
                or np.setdiff1d(np.arange(len(self.Y)), self.pairs[:, 1]).size):
            raise ContractViolation("correspondence does not cover both samples")

    def distortion(self, space_x: Space, space_y: Space) -> float:
        A, B = self.X[self.pairs[:, 0]], self.Y[self.pairs[:, 1]]
        worst = 0.0
        for i, DX in iter_pairwise_blocks(space_x, A):
            DY = space_y.pairwise(B[i:i + len(DX)], B)
            worst = max(worst, float(np.abs(DX - DY).max()))
        return worst


@dataclass
class GHInterval:
    lower: float
    upper: float
    lower_provenance: str
    upper_provenance: str

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise ContractViolation(f"inconsistent interval [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= value <= self.upper + tol

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "width": self.width,
                "lower_provenance": self.lower_provenance, "upper_provenance": self.upper_provenance}


# ---------------------------------------------------------------------------
# c-approximations
# ---------------------------------------------------------------------------


@dataclass
class ApproximationCheck:
    ok: bool
    c: float
    additive_error: float
    worst_pair: Tuple[int, int]
    covering_radius: float
    covering_rule: str = "image c-neighbourhoods (radius c) must cover the target sample"

    def to_dict(self) -> dict:
        return dict(self.__dict__, worst_pair=list(self.worst_pair))


def check_c_approximation(space_x: Space, space_y: Space, X, images, Y, c: float) -> ApproximationCheck:
    """Additive distortion of x -> image over all sample pairs, and coverage of Y by the image."""
    X = np.asarray(X, dtype=float)
    images = np.asarray(images, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if not len(X) or not len(Y):
        raise ContractViolation("samples must be nonempty")
    worst, where = 0.0, (0, 0)
    for i, DX in iter_pairwise_blocks(space_x, X):
        E = np.abs(DX - space_y.pairwise(images[i:i + len(DX)], images))
        k = int(np.argmax(E))
        if E.flat[k] > worst:
            worst, where = float(E.flat[k]), (i + k // E.shape[1], k % E.shape[1])
    cover = max(float(B.min(axis=1).max()) for _, B in iter_pairwise_blocks(space_y, Y, images))
    return ApproximationCheck(bool(worst < c and cover < c), float(c), worst, where, cover)


def scaling_map(space_x: Circle, space_y: Circle, P) -> np.ndarray:
    """angle -> angle * L_Y / L_X."""
    return space_y.normalize(np.asarray(P, dtype=float) * (space_y.length / space_x.length))


# ---------------------------------------------------------------------------
# upper bounds
# ---------------------------------------------------------------------------


def _as_circle(space: Space) -> Optional[Circle]:
    if isinstance(space, Circle):
        return space
    if isinstance(space, RoundSphere) and space.dim == 1:
        return Circle(2 * PI)
    return None


def _as_circle_suspension(space: Space) -> Optional[float]:
    if isinstance(space, Suspension) and isinstance(space.base, Circle):
        return space.base.length
    if isinstance(space, RoundSphere) and space.dim == 2:
        return 2 * PI
    return None


def _circle_family(a: Circle, b: Circle) -> Tuple[float, str]:
    # the scaling correspondence stretches every distance by L_b/L_a; the worst
    # additive error is at antipodal pairs: |L_a - L_b| / 2
    dis = abs(a.length - b.length) / 2
    return dis, f"closed_form: circle scaling correspondence, distortion |L1 - L2|/2 = {dis!r}"


def _suspension_family(la: float, lb: float) -> Tuple[float, str]:
    # scale the base circle; moving the included angle from min(theta, pi) to
    # lam * theta moves the spherical distance by at most the angle change, and
    # |min(theta, pi) - lam * theta| <= pi |1 - lam| on theta in [0, L/2]
    lam = min(la, lb) / max(la, lb)
    dis = PI * (1 - lam)
    return dis, f"closed_form: suspension base-scaling correspondence, distortion pi(1 - L_min/L_max) = {dis!r}"


def _best_match(A: np.ndarray, B: np.ndarray, block: int = 256) -> np.ndarray:
    """For each row of A, the row of B with the smallest max-abs difference."""
    out = np.empty(len(A), dtype=int)
    for i in range(0, len(A), block):
        out[i:i + block] = np.abs(B[None, :, :] - A[i:i + block, None, :]).max(axis=2).argmin(axis=1)
    return out


def greedy_correspondence(sx: SampleSet, sy: SampleSet, seed: int = 0,
                          max_points: int = GREEDY_MAX_POINTS) -> Correspondence:
    """Match each point to the partner whose distances to the already matched anchors
    agree best; the first anchor pair is a seeded random choice."""
    X, Y = sx.points, sy.points
    if len(X) > max_points or len(Y) > max_points:
        raise ContractViolation(f"greedy correspondence budget exceeded ({len(X)}, {len(Y)} > {max_points})")
    rng = np.random.default_rng(seed)
    DX = sx.space.pairwise(X)
    DY = sy.space.pairwise(Y)
    ax, ay = [int(rng.integers(len(X)))], [int(rng.integers(len(Y)))]
    n_anchor = min(16, len(X), len(Y))
    while len(ax) < n_anchor:
        i = int(np.argmax(DX[ax].min(axis=0)))
        cost = np.abs(DY[ay].T - DX[ax, i][None, :]).max(axis=1)
        ax.append(i)
        ay.append(int(np.argmin(cost)))
    fx = _best_match(DX[:, ax], DY[:, ay])
    gy = _best_match(DY[:, ay], DX[:, ax])
    pairs = np.concatenate([np.stack([np.arange(len(X)), fx], 1), np.stack([gy, np.arange(len(Y))], 1)])
    return Correspondence(X, Y, np.unique(pairs, axis=0))


def gh_upper_bound(space_x: Space, space_y: Space, family: str = "auto", mesh: float = 0.02,
                   seed: int = 0) -> Tuple[float, str]:
    """Half the distortion of the best registered correspondence (plus the sampling
    terms for the greedy fallback)."""
    if family not in ("auto", "closed_form", "greedy"):
        raise ContractViolation(f"unknown correspondence family {family!r}")
    if family != "greedy":
        if space_x == space_y:
            return 0.0, "closed_form: identity correspondence"
        ca, cb = _as_circle(space_x), _as_circle(space_y)
        if ca is not None and cb is not None:
            dis, prov = _circle_family(ca, cb)
            return dis / 2, prov
        la, lb = _as_circle_suspension(space_x), _as_circle_suspension(space_y)
        if la is not None and lb is not None:
            dis, prov = _suspension_family(la, lb)
            return dis / 2, prov
        if family == "closed_form":
            raise ContractViolation(f"no closed-form family for {space_x} vs {space_y}")
    sx, sy = epsilon_net(space_x, mesh), epsilon_net(space_y, mesh)
    corr = greedy_correspondence(sx, sy, seed)
    dis = corr.distortion(space_x, space_y)
    value = dis / 2 + sx.mesh + sy.mesh
    return value, f"sampled({mesh}): greedy correspondence, distortion {dis!r}, plus both sample meshes"


# ---------------------------------------------------------------------------
# lower bounds
# ---------------------------------------------------------------------------


def _diameter_interval(space: Space, sample: SampleSet) -> Tuple[float, float, str]:
    closed = space.diameter()
    if closed is not None:
        return closed, closed, "closed_form"
    lo, hi = diameter_bounds(space, sample)
    return lo, hi, f"sampled({sample.mesh})"


def packing3_sample(space: Space, P: np.ndarray) -> float:
    """max over triples of the sample of the smallest pairwise distance."""
    D = space.pairwise(P)
    best = 0.0
    for i in range(len(P)):
        # best third point for every pair (i, j)
        third = np.minimum(D[i][None, :], D).max(axis=1)
        best = max(best, float(np.minimum(D[i], third).max()))
    return best


def _packing_interval(space: Space, sample: SampleSet, seed: int) -> Optional[Tuple[float, float, str]]:
    if isinstance(space, Circle):
        v = space.length / 3
        return v, v, "closed_form"
    if isinstance(space, RoundSphere) and space.dim >= 1:
        v = 2 * PI / 3
        return v, v, "closed_form"
    P = sample.points
    if len(P) > PACKING_MAX_POINTS:
        # a subsample still gives a valid lower estimate, never an upper one
        P = P[np.sort(np.random.default_rng(seed).choice(len(P), PACKING_MAX_POINTS, replace=False))]
        v = packing3_sample(space, P)
        return v, math.inf, f"sampled_subset({PACKING_MAX_POINTS})"
    v = packing3_sample(space, P)
    return v, v + 2 * sample.mesh, f"sampled({sample.mesh})"


def gh_lower_bound(sx: SampleSet, sy: SampleSet, seed: int = 0) -> Tuple[float, str]:
    """max of the diameter and 3-point packing obstructions, each certified against the meshes."""
    X, Y = sx.space, sy.space
    candidates = [(0.0, "trivial")]
    dxl, dxu, px = _diameter_interval(X, sx)
    dyl, dyu, py = _diameter_interval(Y, sy)
    candidates.append(((dxl - dyu) / 2, f"diameter obstruction ({px} vs {py})"))
    candidates.append(((dyl - dxu) / 2, f"diameter obstruction ({py} vs {px})"))
    kx = _packing_interval(X, sx, seed)
    ky = _packing_interval(Y, sy, seed)
    candidates.append(((kx[0] - ky[1]) / 2, f"3-point packing obstruction ({kx[2]} vs {ky[2]})"))
    candidates.append(((ky[0] - kx[1]) / 2, f"3-point packing obstruction ({ky[2]} vs {kx[2]})"))
    value, prov = max(candidates, key=lambda c: c[0])
    return max(value, 0.0), prov


def gh_interval(space_x: Space, space_y: Space, mesh: float = 0.02, family: str = "auto",
                seed: int = 0) -> GHInterval:
    lo, lprov = gh_lower_bound(epsilon_net(space_x, mesh), epsilon_net(space_y, mesh), seed)
    hi, uprov = gh_upper_bound(space_x, space_y, family, mesh, seed)
    return GHInterval(max(lo - ROUNDING_GUARD, 0.0), hi + ROUNDING_GUARD, lprov, uprov)


def gh_to_sphere(Z: Space, n: int, mesh: float = 0.02, seed: int = 0) -> GHInterval:
    """Bounds on d_GH(Z, S^(n-1)) for n in {2, 3}."""
    if n not in (2, 3):
        raise ContractViolation("n must be 2 or 3")
    if not Z.bounded:
        raise ContractViolation("Z must be compact")
    return gh_interval(Z, RoundSphere(n - 1), mesh, "auto", seed)
