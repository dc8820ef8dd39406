import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from catasym.metric_core import (PI, Circle, ContractViolation, Euclidean, EuclideanCone, RoundSphere,
                                 SizeLimitError, Suspension, diameter_bounds, distance, epsilon_net, eval_number,
                                 parse_space, random_points, rescale, theta_graph, truncated_distance)

angles = st.floats(min_value=-20, max_value=20, allow_nan=False)
radii = st.floats(min_value=0, max_value=10, allow_nan=False)


def planar(t, a):
    return t * np.exp(1j * a)


def unit3(s, a):
    return np.array([math.sin(s) * math.cos(a), math.sin(s) * math.sin(a), math.cos(s)])


def test_circle_distance_examples():
    c = Circle(2 * PI + 0.2)
    assert distance(c, [0.0], [PI + 0.1]) == pytest.approx(PI + 0.1, abs=1e-12)
    assert distance(c, [0.0], [c.length - 0.3]) == pytest.approx(0.3, abs=1e-12)
    assert truncated_distance(c, [0.0], [PI + 0.1]) == PI


@given(radii, angles, radii, angles)
def test_cone_over_round_circle_is_the_plane(t, a, u, b):
    cone = EuclideanCone(Circle(2 * PI))
    expected = abs(planar(t, a) - planar(u, b))
    assert distance(cone, [t, a], [u, b]) == pytest.approx(expected, abs=1e-9)


@given(st.floats(0, PI), angles, st.floats(0, PI), angles)
def test_suspension_of_round_circle_is_the_sphere(s, a, r, b):
    susp = Suspension(Circle(2 * PI))
    v, w = unit3(s, a), unit3(r, b)
    expected = 2 * math.atan2(np.linalg.norm(v - w), np.linalg.norm(v + w))
    assert distance(susp, [s, a], [r, b]) == pytest.approx(expected, abs=1e-9)


def test_cone_examples():
    cone = EuclideanCone(Circle(2 * PI))
    assert distance(cone, [1, 0], [1, PI / 2]) == pytest.approx(math.sqrt(2))
    wide = EuclideanCone(Circle(3 * PI))
    # base angle >= pi: the geodesic runs through the apex
    assert distance(wide, [1, 0], [1, 1.5 * PI]) == pytest.approx(2.0)


def test_theta_graph_against_networkx():
    g = theta_graph(PI, PI, PI)
    assert distance(g, g.vertex_point(0), g.vertex_point(1)) == pytest.approx(PI)
    # midpoints of two different edges are pi apart
    assert distance(g, [0, PI / 2], [1, PI / 2]) == pytest.approx(PI)

    # independent oracle: subdivide each edge and run Dijkstra
    G = nx.Graph()
    k = 8
    for e, (u, v, length) in enumerate(g.edges):
        chain = [("v", u)] + [("e", e, i) for i in range(1, k)] + [("v", v)]
        for x, y in zip(chain, chain[1:]):
            G.add_edge(x, y, weight=length / k)
    lengths = dict(nx.all_pairs_dijkstra_path_length(G))
    for e1 in range(3):
        for e2 in range(3):
            for i in range(1, k):
                for j in range(1, k):
                    p = [e1, g.edges[e1][2] * i / k]
                    q = [e2, g.edges[e2][2] * j / k]
                    assert distance(g, p, q) == pytest.approx(lengths[("e", e1, i)][("e", e2, j)], abs=1e-9)


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1))
def test_triangle_inequality_on_random_points(seed):
    for space in (Circle(2 * PI + 0.3), theta_graph(1.0, 2.0, 3.5), Suspension(Circle(7.0)),
                  EuclideanCone(Circle(7.0)), RoundSphere(2)):
        P = random_points(space, 3, seed, radius=3.0)
        d = space.pairwise(P)
        assert d[0, 2] <= d[0, 1] + d[1, 2] + 1e-9
        assert np.allclose(d, d.T)
        assert np.allclose(np.diag(d), 0, atol=1e-12)


def test_epsilon_net_covers():
    for space, radius in ((Circle(2 * PI + 0.2), None), (RoundSphere(2), None), (EuclideanCone(Circle(7.0)), 2.0),
                          (Suspension(Circle(7.0)), None), (theta_graph(1, 2, 3), None), (Euclidean(2), 1.0)):
        net = epsilon_net(space, 0.1, radius=radius)
        probes = random_points(space, 300, 1, radius=radius)
        assert space.pairwise(probes, net.points).min(axis=1).max() <= 0.1 + 1e-12


def test_net_size_limit():
    with pytest.raises(SizeLimitError):
        epsilon_net(RoundSphere(2), 0.001, max_size=1000)


def test_diameter_bounds_bracket_truth():
    c = Circle(2 * PI + 0.2)
    lo, hi = diameter_bounds(c, epsilon_net(c, 0.05))
    assert lo <= c.length / 2 <= hi
    g = theta_graph(PI, PI, PI)
    lo, hi = diameter_bounds(g, epsilon_net(g, 0.05))
    assert lo <= PI <= hi


def test_parse_space_round_trip():
    for text in ("circle(2*pi + 0.1)", "sphere(2)", "euclidean(3)", "suspension(circle(7))", "cone(circle(2*pi))",
                 "cone(suspension(circle(2*pi)))", "graph(2; 0-1:pi, 0-1:pi, 0-1:pi)"):
        s = parse_space(text)
        assert parse_space(s.to_config()) == s
    assert parse_space("circle(2*pi)").length == 2 * PI


def test_contract_violations():
    with pytest.raises(ContractViolation):
        Circle(-1.0)
    with pytest.raises(ContractViolation):
        EuclideanCone(Euclidean(2))
    with pytest.raises(ContractViolation):
        rescale(Circle(1.0), 0.0)
    with pytest.raises(ValueError):
        eval_number("__import__('os')")


def test_rescale_circle():
    assert rescale(Circle(2.0), PI).length == pytest.approx(2 * PI)
