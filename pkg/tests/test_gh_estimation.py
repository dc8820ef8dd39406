import numpy as np
import pytest

from catasym.gh_estimation import (Correspondence, GHInterval, check_c_approximation, gh_interval, gh_lower_bound,
                                   gh_to_sphere, gh_upper_bound, greedy_correspondence, scaling_map)
from catasym.metric_core import PI, Circle, ContractViolation, RoundSphere, Suspension, epsilon_net, theta_graph

LONG = Circle(2 * PI + 0.2)
ROUND = Circle(2 * PI)


def test_c_approximation_examples():
    net = epsilon_net(ROUND, 0.01).points
    assert check_c_approximation(ROUND, ROUND, net, net, net, 0.01).ok
    X = epsilon_net(LONG, 0.01).points
    images = scaling_map(LONG, ROUND, X)
    good = check_c_approximation(LONG, ROUND, X, images, net, 0.11)
    assert good.ok and good.additive_error == pytest.approx(0.1, abs=0.01)
    bad = check_c_approximation(LONG, ROUND, X, images, net, 0.05)
    assert not bad.ok
    # the worst pair is (nearly) antipodal
    i, j = bad.worst_pair
    assert float(LONG.dist(X[i], X[j])) == pytest.approx(LONG.length / 2, abs=0.02)
    assert "radius c" in bad.covering_rule


@pytest.mark.parametrize("c", [1e-6, 0.01, 1.0])
def test_identity_is_a_c_approximation(c):
    for space in (LONG, RoundSphere(2), theta_graph(1, 2, 3)):
        X = epsilon_net(space, 0.2).points
        assert check_c_approximation(space, space, X, X, X, c).ok


def test_c_approximation_needs_samples():
    with pytest.raises(ContractViolation):
        check_c_approximation(ROUND, ROUND, np.empty((0, 1)), np.empty((0, 1)), np.zeros((1, 1)), 0.1)


def test_upper_bound_examples():
    value, prov = gh_upper_bound(LONG, ROUND)
    assert value == pytest.approx(0.05, abs=1e-12) and prov.startswith("closed_form")
    assert gh_upper_bound(LONG, LONG)[0] == 0.0
    assert gh_upper_bound(Suspension(Circle(2 * PI + 0.2)), RoundSphere(2))[0] <= 0.06


def test_greedy_fallback_is_an_upper_bound():
    value, prov = gh_upper_bound(LONG, ROUND, family="greedy", mesh=0.05)
    assert prov.startswith("sampled") and value >= 0.05
    with pytest.raises(ContractViolation):
        gh_upper_bound(LONG, ROUND, family="nope")
    with pytest.raises(ContractViolation):
        gh_upper_bound(theta_graph(PI, PI, PI), ROUND, family="closed_form")


def test_correspondence_coverage_and_distortion():
    sx, sy = epsilon_net(ROUND, 0.1), epsilon_net(ROUND, 0.1)
    corr = greedy_correspondence(sx, sy)
    assert set(corr.pairs[:, 0]) == set(range(len(sx.points)))
    assert set(corr.pairs[:, 1]) == set(range(len(sy.points)))
    assert corr.distortion(ROUND, ROUND) <= 2 * sx.mesh + 1e-12
    with pytest.raises(ContractViolation):
        Correspondence(sx.points, sy.points, [[0, 0]])


def test_lower_bound_examples():
    lo, prov = gh_lower_bound(epsilon_net(LONG, 0.01), epsilon_net(ROUND, 0.01))
    assert lo >= 0.05 - 0.01 and "diameter" in prov
    assert gh_lower_bound(epsilon_net(LONG, 0.05), epsilon_net(LONG, 0.05))[0] == 0.0
    theta = theta_graph(PI, PI, PI)
    lo, prov = gh_lower_bound(epsilon_net(theta, 0.02), epsilon_net(ROUND, 0.02))
    assert lo > 0.2 and "packing" in prov


def test_gh_to_sphere_examples():
    iv = gh_to_sphere(LONG, 2, mesh=0.01)
    assert iv.lower >= 0.05 - 0.01 and iv.upper <= 0.05 + 0.01 and iv.contains(0.05)
    iv = gh_to_sphere(ROUND, 2, mesh=0.01)
    assert iv.lower == 0.0 and iv.upper <= 0.01
    iv = gh_to_sphere(Suspension(Circle(2 * PI + 0.1)), 3, mesh=0.02)
    assert iv.width <= 0.03
    with pytest.raises(ContractViolation):
        gh_to_sphere(LONG, 4)


@pytest.mark.parametrize("t", [0.05, 0.1, 0.2])
def test_scaling_consistency(t):
    iv = gh_to_sphere(Circle(2 * PI + t), 2, mesh=0.01)
    assert iv.contains(t / 4) and abs(iv.lower - t / 4) <= 0.01 and abs(iv.upper - t / 4) <= 0.01


def test_intervals_are_ordered():
    spaces = [ROUND, LONG, Circle(7.0), RoundSphere(2), Suspension(Circle(7.0)), theta_graph(PI, PI, PI)]
    for x in spaces:
        for y in spaces[:4]:
            iv = gh_interval(x, y, mesh=0.1)
            assert iv.lower <= iv.upper, (x, y, iv)
    with pytest.raises(ContractViolation):
        GHInterval(1.0, 0.5, "a", "b")
