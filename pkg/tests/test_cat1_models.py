import numpy as np
import pytest

from catasym.cat1_models import (SearchBudgetExceeded, admits_cat1, antipode_set, aperp_check, certified_delta,
                                 circle_quarter_suspender, find_suspender, fullsusp_gap, is_homogeneous,
                                 max_suspender_order, measure_tuple, polar_set, suspender_orthonormal_sphere,
                                 suspension_suspender, verify_join_splitting, verify_suspender_conclusions)
from catasym.metric_core import PI, Circle, ContractViolation, RoundSphere, Suspension, epsilon_net, theta_graph


def test_admissibility():
    assert admits_cat1(Circle(2 * PI)).admissible
    assert admits_cat1(theta_graph(PI, PI, PI)).shortest_cycle == pytest.approx(2 * PI)
    bad = admits_cat1(Circle(6.0))
    assert not bad and bad.shortest_cycle == pytest.approx(6.0)
    assert not admits_cat1(theta_graph(1.0, 1.0, 5.0))
    assert admits_cat1(Suspension(Circle(7.0)))


def test_homogeneity():
    assert is_homogeneous(Circle(7.0))
    assert is_homogeneous(Suspension(Circle(2 * PI)))
    assert not is_homogeneous(Suspension(Circle(7.0)))


def test_antipodes_and_polar_sets():
    c = Circle(2 * PI + 0.2)
    net = epsilon_net(c, 0.01)
    rep = antipode_set(c, [0.0], net, 1e-9)
    # antipodes of 0 fill the arc [pi, L - pi] of length 0.2
    angles = rep.candidates[:, 0]
    assert angles.min() >= PI - 1e-9 and angles.max() <= c.length - PI + 1e-9
    assert angles.max() - angles.min() == pytest.approx(0.2, abs=0.02)
    polar = polar_set(c, np.array([[0.0]]), net, 1e-9)
    assert np.all(c.pairwise(polar, np.array([[0.0]])) >= PI / 2 - 1e-9)


def test_exact_suspenders_certify_with_mesh_correction():
    c = Circle(2 * PI)
    net = epsilon_net(c, 0.01)
    p, q = circle_quarter_suspender(2 * PI)
    cert = measure_tuple(c, net, p, q, 0.05)
    assert cert.raw_defect == pytest.approx(0.0, abs=1e-12)
    assert cert.defect == pytest.approx(2 * net.mesh, abs=1e-12)
    s2 = RoundSphere(2)
    P, Q = suspender_orthonormal_sphere(2, 3)
    cert = measure_tuple(s2, epsilon_net(s2, 0.05), P, Q, 0.2)
    assert cert.raw_defect == pytest.approx(0.0, abs=1e-9)


def test_certified_delta_on_long_circle():
    L = 2 * PI + 0.2
    c = Circle(L)
    net = epsilon_net(c, 0.005)
    p, q = circle_quarter_suspender(L)
    d = certified_delta(c, net, p, q)
    # raw defect (L - 2 pi)/2 = 0.1 plus the 2 * mesh correction, to 1e-3
    assert 0.11 <= d <= 0.111 + 1e-9


def test_search_examples():
    c = Circle(2 * PI + 0.2)
    net = epsilon_net(c, 0.004)
    cert = find_suspender(c, net, 2, 0.11)
    assert cert is not None and cert.defect < 0.11
    assert find_suspender(c, net, 2, 0.04) is None


def test_max_order_circle():
    c = Circle(2 * PI)
    assert max_suspender_order(c, epsilon_net(c, 0.02), 0.05) == 2


def test_budget():
    c = Circle(2 * PI)
    with pytest.raises(SearchBudgetExceeded):
        find_suspender(c, epsilon_net(c, 0.02), 3, 0.05, budget=10)


def test_search_rejects_non_cat1():
    c = Circle(5.0)
    with pytest.raises(ContractViolation):
        find_suspender(c, epsilon_net(c, 0.05), 1, 0.1)


def test_conclusions_hold_for_found_suspenders():
    for L in (2 * PI, 2 * PI + 0.1, 2 * PI + 0.2):
        c = Circle(L)
        net = epsilon_net(c, 0.005)
        p, q = circle_quarter_suspender(L)
        delta = certified_delta(c, net, p, q)
        rep = verify_suspender_conclusions(c, measure_tuple(c, net, p, q, delta), net)
        assert rep.ok, rep.to_dict()


def test_fullsusp_gap_round_circle():
    c = Circle(2 * PI)
    net = epsilon_net(c, 0.01)
    gap = fullsusp_gap(c, net, np.array([[0.0], [PI / 2]]))
    assert gap == pytest.approx(PI / 4, abs=net.mesh)


def test_aperp_exact_case():
    c = Circle(2 * PI)
    res = aperp_check(c, epsilon_net(c, 0.01), np.array([[0.0], [PI / 2]]), 0.01)
    assert not res.empty
    # cos a cos b + sin a sin b = cos(a - b), small when a - b is near pi/2
    assert res.residual <= 0.011


def test_join_splitting_exact_models():
    s2 = RoundSphere(2)
    P, Q = suspender_orthonormal_sphere(2, 3)
    assert verify_join_splitting(s2, epsilon_net(s2, 0.1), P, Q) <= 1e-9
    susp = Suspension(Circle(2 * PI))
    p, q = suspension_suspender(2 * PI)
    poles_and_pair = (np.array([p[0], [PI / 2, 0.0]]), np.array([q[0], [PI / 2, PI]]))
    assert verify_join_splitting(susp, epsilon_net(susp, 0.1), *poles_and_pair) <= 1e-9
    c = Circle(2 * PI)
    assert verify_join_splitting(c, epsilon_net(c, 0.05), np.array([[0.0]]), np.array([[PI]])) <= 1e-9


def _aperp_long_circle(L):
    c = Circle(L)
    return aperp_check(c, epsilon_net(c, 0.01), circle_quarter_suspender(L)[0], 0.11).residual


def test_aperp_residual_ceiling_long_circle():
    assert _aperp_long_circle(2 * PI + 0.2) <= 0.25


def test_aperp_residual_shrinks_with_length():
    r = [_aperp_long_circle(2 * PI + t) for t in (0.2, 0.1, 0.05)]
    assert r[0] > r[1] > r[2]


def test_join_splitting_requires_exact_suspender():
    c = Circle(2 * PI + 0.2)
    net = epsilon_net(c, 0.05)
    p, q = circle_quarter_suspender(c.length)
    with pytest.raises(ContractViolation):
        verify_join_splitting(c, net, p, q)
