import math

import numpy as np
import pytest

from catasym.cat1_models import measure_tuple
from catasym.metric_core import PI, Circle, ContractViolation, EuclideanCone, Suspension, epsilon_net
from catasym.strainer_maps import (IdealStrainer, IterationLimit, StrainerMap, bilipschitz_verify,
                                   canonical_candidate, certify_ideal_strainer, contraction_bound, evaluate_map,
                                   find_strainer, first_variation_inequalities_check, lipschitz_and_open_constants,
                                   openness_iteration, random_probes, sphere_map_distortion)


def cone(L):
    return EuclideanCone(Circle(L))


FLAT = cone(2 * PI)
EXACT = np.array([[0.0], [PI / 2]]), np.array([[PI], [3 * PI / 2]])


def flat_map():
    s = certify_ideal_strainer(FLAT, EXACT, epsilon_net(FLAT.base, 0.01), 0.03)
    return StrainerMap(FLAT, s)


def cone_sample(c, mesh=0.05, radius=3.0):
    return epsilon_net(c, mesh, radius=radius)


def test_certify_examples():
    net = epsilon_net(FLAT.base, 0.01)
    s = certify_ideal_strainer(FLAT, EXACT, net, 0.03)
    assert s is not None and s.spot_ok and s.certificate.raw_defect <= 1e-12
    wide = cone(2 * PI + 0.2)
    s = find_strainer(wide)
    assert s.delta == pytest.approx(0.11, abs=2e-3)
    # at the apex the direction space is the base itself
    assert s.spot_checks[0]["direction_space"] == wide.base.to_config()
    assert s.spot_ok
    assert certify_ideal_strainer(wide, None, epsilon_net(wide.base, 0.005), 0.04, m=2) is None


def test_certify_rejects_non_cat1():
    with pytest.raises(ContractViolation):
        certify_ideal_strainer(cone(5.0), None, epsilon_net(Circle(5.0), 0.05), 0.1, m=1)


def test_evaluate_map_examples():
    sm = flat_map()
    assert np.allclose(evaluate_map(sm, [1, PI / 2]), [0, -1], atol=1e-15)
    assert np.array_equal(evaluate_map(sm, FLAT.apex()), [0, 0])
    assert np.allclose(evaluate_map(sm, [2, PI]), [2, 0], atol=1e-15)


def test_submetry_exactness_on_the_plane():
    sm = flat_map()
    P = FLAT.random(5000, np.random.default_rng(0), 3.0)
    planar = np.stack([P[:, 0] * np.cos(P[:, 1]), P[:, 0] * np.sin(P[:, 1])], 1)
    assert np.abs(-sm(P) - planar).max() <= 1e-9


def test_homogeneity():
    sm = StrainerMap(cone(2 * PI + 0.1), find_strainer(cone(2 * PI + 0.1)))
    rng = np.random.default_rng(1)
    P = sm.cone.random(500, rng, 1.0)
    P[:, 0] = 1.0
    for s in (0.0, 0.3, 1.0, 7.5):
        Q = P.copy()
        Q[:, 0] = s
        assert np.array_equal(sm(Q), s * sm(P))


def test_coordinates_match_busemann_functions():
    sm = flat_map()
    P = FLAT.random(100, np.random.default_rng(2), 3.0)
    for i, b in enumerate(sm.functions):
        assert np.array_equal(sm(P)[:, i], b(P))


def test_pseudo_map_is_a_constant_shift():
    sm = flat_map()
    origin = np.array([1.5, 2.0])
    pm = StrainerMap(FLAT, sm.strainer, origin=origin)
    P = FLAT.random(200, np.random.default_rng(3), 3.0)
    diff = pm(P) - sm(P)
    assert np.allclose(diff, diff[0], atol=1e-12)
    assert np.allclose(pm(origin), 0, atol=1e-12)


def test_openness_exact_case():
    sm = flat_map()
    y, trace = openness_iteration(sm, FLAT.apex(), [0.3, 0.4])
    assert trace.moves == 2 and trace.iterations == 1
    assert trace.residual_l2[-1] <= 1e-12
    assert float(FLAT.dist(FLAT.apex(), y)) == pytest.approx(0.5)
    y, trace = openness_iteration(sm, [1.0, 0.4], [0.0, 0.0])
    assert trace.iterations == 0 and np.array_equal(y, [1.0, 0.4])


def test_openness_long_circle():
    c = cone(2 * PI + 0.1)
    sm = StrainerMap(c, find_strainer(c))
    rho = contraction_bound(sm.strainer)
    rng = np.random.default_rng(4)
    for _ in range(20):
        x0 = np.array([1.0, rng.uniform(0, c.base.length)])
        y, trace = openness_iteration(sm, x0, [0.1, -0.1])
        assert trace.max_ratio <= 0.15
        assert trace.iterations <= 25 and trace.residual_l2[-1] <= 1e-9
        assert np.linalg.norm(sm(y) - sm(x0) - [0.1, -0.1]) <= 1e-9
        assert float(c.dist(x0, y)) <= 0.2 / (1 - rho) + 1e-9
        # residuals are nonincreasing after the first sweep
        assert all(b <= a + 1e-15 for a, b in zip(trace.residual_l1[1:], trace.residual_l1[2:]))


def test_openness_trace_csv_and_errors():
    c = cone(2 * PI + 0.2)
    sm = StrainerMap(c, find_strainer(c))
    with pytest.raises(IterationLimit) as exc:
        openness_iteration(sm, [1.0, 1.0], [0.5, -0.3], tol=0.0, max_iter=1)
    assert exc.value.trace.iterations == 1
    _, trace = openness_iteration(sm, [1.0, 1.0], [0.5, -0.3])
    rows = trace.to_csv().splitlines()
    assert rows[0] == "k,residual_l1,residual_l2,step_distance,ratio"
    assert len(rows) == trace.iterations + 2
    with pytest.raises(ContractViolation):
        openness_iteration(sm, [1.0, 1.0], [0.5])


def test_constants_exact():
    sm = flat_map()
    rep = lipschitz_and_open_constants(sm, cone_sample(FLAT), random_probes(FLAT, 2, 100, 3.0, 1.0, 0),
                                       n_random=100_000)
    assert rep.lip == pytest.approx(1.0, abs=1e-9) and rep.open_c == pytest.approx(1.0, abs=1e-9)


def _constants(L, n_probes=1000):
    c = cone(L)
    sm = StrainerMap(c, find_strainer(c))
    return lipschitz_and_open_constants(sm, cone_sample(c), random_probes(c, 2, n_probes, 3.0, 1.0, 0),
                                        n_random=100_000)


@pytest.mark.slow
def test_constants_long_circle():
    # ten thousand probes take about 20 s
    rep = _constants(2 * PI + 0.2, 10_000)
    assert rep.lip <= 1.25 and rep.open_c <= 1.35
    assert rep.lip <= math.sqrt(2) / (1 - 2 * 0.11)


def test_lipschitz_constant_is_monotone():
    assert _constants(2 * PI + 0.05, 10).lip < _constants(2 * PI + 0.2, 10).lip


def _pairs(c, n, seed):
    rng = np.random.default_rng(seed)
    P, Q = c.random(n, rng, 3.0), c.random(n, rng, 3.0)
    return [(p, q) for p, q in zip(P, Q) if float(c.dist(p, q)) > 1e-3]


def test_first_variation_exact():
    sm = flat_map()
    rep = first_variation_inequalities_check(sm, _pairs(FLAT, 200, 5))
    assert rep.slope_residual <= 1e-9 and rep.derivative_variation <= 1e-9


def test_first_variation_long_circle():
    c = cone(2 * PI + 0.1)
    strainer = certify_ideal_strainer(c, canonical_candidate(c.base, 2), epsilon_net(c.base, 0.002), 0.06)
    sm = StrainerMap(c, strainer)
    pairs = _pairs(c, 300, 6)
    # geodesics through the apex are handled piecewise
    pairs += [(np.array([1.0, 0.0]), np.array([2.0, PI + 0.05])), (np.array([0.5, 1.0]), np.array([1.0, 4.2]))]
    rep = first_variation_inequalities_check(sm, pairs)
    assert rep.n_apex >= 2
    assert rep.slope_residual <= 0.12
    assert rep.violations() == 0


def test_first_variation_level_geodesics():
    c = cone(2 * PI + 0.1)
    sm = StrainerMap(c, find_strainer(c, m=1))
    # reflections across the xi axis share the Busemann value
    pairs = [(np.array([t, a]), np.array([t, c.base.length - a])) for t in (0.5, 1, 2) for a in (1.0, 1.4, 2.5)]
    rep = first_variation_inequalities_check(sm, pairs)
    assert rep.n_level == len(pairs)
    assert rep.violations() == 0


def test_bilipschitz_exact():
    sm = flat_map()
    rep = bilipschitz_verify(sm, cone_sample(FLAT, 0.02), n_random=100_000)
    assert rep.lower == pytest.approx(1, abs=1e-9) and rep.upper == pytest.approx(1, abs=1e-9)
    assert rep.violations == 0


def _bilip(L, mesh=0.02):
    c = cone(L)
    return bilipschitz_verify(StrainerMap(c, find_strainer(c)), cone_sample(c, mesh), n_random=200_000)


def test_bilipschitz_long_circle():
    rep = _bilip(2 * PI + 0.2)
    assert rep.violations == 0 and 0.8 <= rep.lower and rep.upper <= 1.25


def test_bilipschitz_shrinks_with_length():
    reps = [_bilip(2 * PI + t, 0.05) for t in (0.2, 0.1, 0.05)]
    for a, b in zip(reps, reps[1:]):
        assert b.lower >= a.lower and b.upper <= a.upper
    assert _bilip(2 * PI + 0.001, 0.05).upper <= 1.01


def test_bilipschitz_needs_full_order():
    c = cone(2 * PI)
    sm = StrainerMap(c, find_strainer(c, m=1))
    with pytest.raises(ContractViolation):
        bilipschitz_verify(sm, cone_sample(c))


def test_sphere_map_examples():
    z = Circle(2 * PI)
    s = certify_ideal_strainer(FLAT, EXACT, epsilon_net(z, 0.01), 0.03)
    rep = sphere_map_distortion(z, s, epsilon_net(z, 0.005))
    assert rep.lower == pytest.approx(1, abs=1e-9) and rep.upper == pytest.approx(1, abs=1e-9)
    z = Circle(2 * PI + 0.2)
    rep = sphere_map_distortion(z, find_strainer(EuclideanCone(z)), epsilon_net(z, 0.005))
    assert rep.upper <= 1.2 and rep.lower >= 0.85
    assert rep.normalization_failures == 0 and rep.gap_certified > 0.5
    z = Suspension(Circle(2 * PI + 0.1))
    strainer = find_strainer(EuclideanCone(z), mesh=0.02)
    rep = sphere_map_distortion(z, strainer, epsilon_net(z, 0.05), n_random=100_000)
    assert 0.8 <= rep.lower and rep.upper <= 1.25


def test_sphere_map_flags_weak_strainers():
    z = Circle(2 * PI)
    net = epsilon_net(z, 0.01)
    xi, eta = np.array([[0.0], [PI]]), np.array([[PI], [0.0]])
    cert = measure_tuple(z, net, xi, eta, 1.0)
    weak = IdealStrainer(2, xi, eta, 1.0, cert)
    rep = sphere_map_distortion(z, weak, net)
    assert rep.normalization_failures > 0
