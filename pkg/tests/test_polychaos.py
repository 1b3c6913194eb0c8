import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oedopt import polychaos as pc


# ---------------------------------------------------------------------------
# index sets


def test_total_order_degree_one():
    s = pc.total_order_index_set(2, 1)
    assert s.indices.tolist() == [[0, 0], [1, 0], [0, 1]]


def test_total_order_cardinalities():
    assert len(pc.total_order_index_set(2, 2)) == math.comb(2 + 2, 2)
    assert len(pc.total_order_index_set(4, 12)) == math.comb(12 + 4, 4)
    assert math.comb(12 + 4, 4) == 1820


def test_total_order_rejects_zero_dimension():
    with pytest.raises(ValueError):
        pc.total_order_index_set(0, 3)
    with pytest.raises(ValueError):
        pc.total_order_index_set(2, -1)


@settings(deadline=None, max_examples=40)
@given(n_s=st.integers(1, 5), p=st.integers(0, 6))
def test_total_order_properties(n_s, p):
    s = pc.total_order_index_set(n_s, p)
    assert len(s) == math.comb(p + n_s, n_s)
    totals = s.total_orders()
    assert totals.max(initial=0) <= p
    rows = [tuple(r) for r in s.indices]
    assert len(set(rows)) == len(rows)
    # graded lexicographic: total degree ascending, earlier dims ranked higher
    keys = [(t, tuple(-e for e in r)) for t, r in zip(totals, rows)]
    assert keys == sorted(keys)


def test_norm_sq_closed_form():
    s = pc.total_order_index_set(3, 2)
    for row, nsq in zip(s.indices, s.norm_sq):
        assert nsq == pytest.approx(np.prod([1.0 / (2 * b + 1) for b in row]))


# ---------------------------------------------------------------------------
# Legendre values and derivatives


def test_legendre_values():
    assert pc.legendre_value(0, 0.3) == 1.0
    assert pc.legendre_value(1, 0.5) == 0.5
    # closed form (3 xi^2 - 1) / 2 at xi = 0.5
    assert pc.legendre_value(2, 0.5) == pytest.approx((3 * 0.25 - 1) / 2)


def test_legendre_derivatives():
    assert pc.legendre_derivative(0, 0.77) == 0.0
    assert pc.legendre_derivative(1, -1.0) == 1.0
    assert pc.legendre_derivative(2, 0.5) == pytest.approx(3 * 0.5)


def test_legendre_rejects_bad_input():
    with pytest.raises(ValueError):
        pc.legendre_value(-1, 0.0)
    with pytest.raises(ValueError):
        pc.legendre_derivative(-2, 0.0)
    with pytest.raises(ValueError):
        pc.legendre_value(3, 1.5)


def test_legendre_clamps_tiny_excursion():
    assert pc.legendre_value(4, 1.0 + 5e-13) == pc.legendre_value(4, 1.0)


def test_legendre_derivative_finite_at_endpoints():
    # the (1 - xi^2)-divided form blows up here; the differentiated
    # recurrence gives the exact endpoint slope n(n+1)/2
    for n in range(1, 11):
        assert pc.legendre_derivative(n, 1.0) == pytest.approx(n * (n + 1) / 2)
        assert np.isfinite(pc.legendre_derivative(n, -1.0))


@settings(deadline=None, max_examples=60)
@given(n=st.integers(0, 10), xi=st.floats(-0.99, 0.99))
def test_legendre_derivative_matches_finite_difference(n, xi):
    h = 1e-6
    fd = (pc.legendre_value(n, xi + h) - pc.legendre_value(n, xi - h)) / (2 * h)
    d = pc.legendre_derivative(n, xi)
    assert d == pytest.approx(fd, rel=1e-6, abs=1e-6)


def test_legendre_derivative_fd_dense_grid():
    # 100 interior points, orders up to 10
    xs = np.linspace(-0.95, 0.95, 100)
    h = 1e-6
    for n in range(11):
        for x in xs:
            fd = (pc.legendre_value(n, x + h)
                  - pc.legendre_value(n, x - h)) / (2 * h)
            assert pc.legendre_derivative(n, x) == pytest.approx(
                fd, rel=1e-6, abs=1e-7)


# ---------------------------------------------------------------------------
# quadrature


def test_cc_level0():
    r = pc.clenshaw_curtis_1d(0)
    assert r.nodes.ravel().tolist() == [0.0]
    assert r.weights.tolist() == [1.0]


def test_cc_level1_is_simpson():
    r = pc.clenshaw_curtis_1d(1)
    assert r.nodes.ravel().tolist() == [1.0, 0.0, -1.0]
    assert np.allclose(r.weights, [1 / 6, 4 / 6, 1 / 6])
    # uniform second moment on [-1, 1]
    assert (r.weights * r.nodes.ravel() ** 2).sum() == pytest.approx(1 / 3)


@pytest.mark.parametrize("level", [1, 2, 3, 4, 5])
def test_cc_exactness_and_normalization(level):
    r = pc.clenshaw_curtis_1d(level)
    assert r.weights.sum() == pytest.approx(1.0, abs=1e-12)
    x = r.nodes.ravel()
    n_pts = x.size
    for deg in range(n_pts):
        est = (r.weights * x**deg).sum()
        exact = 1.0 / (deg + 1) if deg % 2 == 0 else 0.0
        assert est == pytest.approx(exact, abs=1e-12)


def test_tensor_rule_counts_and_moments():
    r = pc.tensor_quadrature([0, 0])
    assert r.n_points == 1 and r.nodes.tolist() == [[0.0, 0.0]]
    r = pc.tensor_quadrature([1, 1])
    assert r.n_points == 9
    assert r.weights.sum() == pytest.approx(1.0)
    m22 = (r.weights * r.nodes[:, 0] ** 2 * r.nodes[:, 1] ** 2).sum()
    assert m22 == pytest.approx(1 / 9)


def test_tensor_exact_up_to_1d_degrees():
    r = pc.tensor_quadrature([2, 1])
    for i, j in itertools.product(range(5), range(3)):
        est = (r.weights * r.nodes[:, 0] ** i * r.nodes[:, 1] ** j).sum()
        exact = ((1.0 / (i + 1) if i % 2 == 0 else 0.0)
                 * (1.0 / (j + 1) if j % 2 == 0 else 0.0))
        assert est == pytest.approx(exact, abs=1e-12)


def test_point_budget_guard():
    with pytest.raises(pc.PointBudgetError):
        pc.tensor_quadrature([10] * 4, point_budget=1000)
    with pytest.raises(pc.PointBudgetError):
        pc.smolyak_quadrature(6, 6, point_budget=100)


def test_smolyak_level0_and_cross():
    r = pc.smolyak_quadrature(3, 0)
    assert r.n_points == 1
    assert r.nodes.tolist() == [[0.0, 0.0, 0.0]]
    assert r.weights.tolist() == [1.0]
    r = pc.smolyak_quadrature(2, 1)
    assert r.n_points == 5  # cross pattern from the combination rule
    assert r.weights.sum() == pytest.approx(1.0)
    m = (r.weights * (r.nodes[:, 0] ** 2 + r.nodes[:, 1] ** 2)).sum()
    assert m == pytest.approx(2 / 3)


@pytest.mark.parametrize("n_s,level", [(2, 1), (2, 2), (2, 3), (3, 2), (3, 3)])
def test_smolyak_matches_tensor_on_low_degrees(n_s, level):
    sm = pc.smolyak_quadrature(n_s, level)
    tn = pc.tensor_quadrature([level] * n_s)
    max_deg = 2 * level - 1
    for mono in itertools.product(range(max_deg + 1), repeat=n_s):
        if sum(mono) > max_deg:
            continue
        va = sum(sm.weights * np.prod(sm.nodes**np.array(mono), axis=1))
        vb = sum(tn.weights * np.prod(tn.nodes**np.array(mono), axis=1))
        assert va == pytest.approx(vb, abs=1e-12)


def test_orthogonality_under_quadrature():
    # E[psi_m psi_n] = delta_mn / (2n+1), rule exact to degree m + n
    r = pc.clenshaw_curtis_1d(5)
    x = r.nodes.ravel()
    V = pc._legendre_tables(10, x)
    for m in range(11):
        for n in range(11):
            est = (r.weights * V[:, m] * V[:, n]).sum()
            exact = 1.0 / (2 * n + 1) if m == n else 0.0
            assert est == pytest.approx(exact, abs=1e-10)


# ---------------------------------------------------------------------------
# affine maps


@settings(deadline=None, max_examples=50)
@given(lo=st.floats(-10, 9), width=st.floats(0.1, 10), x=st.floats(0, 1))
def test_affine_round_trip(lo, width, x):
    m = pc.box_maps([(lo, lo + width)])[0]
    phys = lo + width * x
    assert m.to_physical(m.to_standard(phys)) == pytest.approx(phys, rel=1e-14,
                                                               abs=1e-12)


def test_affine_rejects_zero_delta():
    with pytest.raises(ValueError):
        pc.AffineMap(gamma=0.0, delta=0.0)
    with pytest.raises(ValueError):
        pc.box_maps([(1.0, 1.0)])


# ---------------------------------------------------------------------------
# projection


def _unit_maps(n):
    return pc.box_maps([(-1.0, 1.0)] * n)


def test_project_constant():
    iset = pc.total_order_index_set(2, 2)
    rule = pc.tensor_quadrature([2, 2])
    e = pc.project(lambda th, d: np.array([3.0]), iset, rule, _unit_maps(2),
                   n_theta=1)
    assert e.coefficients[0, 0] == pytest.approx(3.0, abs=1e-12)
    assert np.abs(e.coefficients[0, 1:]).max() < 1e-12
    assert e.evaluate(np.array([0.11]), np.array([-0.7]))[0] == pytest.approx(3.0)


def test_project_reproduces_basis_and_square():
    iset = pc.total_order_index_set(2, 2)
    rule = pc.tensor_quadrature([2, 2])
    e1 = pc.project(lambda th, d: np.array([th[0]]), iset, rule,
                    _unit_maps(2), n_theta=1)
    coeffs = {tuple(b): c for b, c in zip(iset.indices, e1.coefficients[0])}
    assert coeffs[(1, 0)] == pytest.approx(1.0, abs=1e-12)
    # xi^2 = psi_0 / 3 + 2 psi_2 / 3
    e2 = pc.project(lambda th, d: np.array([th[0] ** 2]), iset, rule,
                    _unit_maps(2), n_theta=1)
    coeffs = {tuple(b): c for b, c in zip(iset.indices, e2.coefficients[0])}
    assert coeffs[(0, 0)] == pytest.approx(1 / 3, abs=1e-12)
    assert coeffs[(2, 0)] == pytest.approx(2 / 3, abs=1e-12)
    assert e2.evaluate(np.array([0.5]), np.array([0.0]))[0] == pytest.approx(0.25)


def test_projection_exactness_random_polynomials(rng):
    # degree <= p polynomial recovered through a rule exact to degree 2p
    p = 3
    iset = pc.total_order_index_set(3, p)
    maps = pc.box_maps([(0, 1), (-2, 2), (0, 4)])
    rule = pc.tensor_quadrature([3, 3, 3])  # 9-point rules, exact degree > 2p
    truth = pc.PCExpansion(iset, rng.standard_normal((2, len(iset))), maps)
    e = pc.project(lambda th, d: truth.evaluate(th, d), iset, rule, maps,
                   n_theta=2)
    pts = rng.random((200, 3))
    phys = np.array([m.gamma + m.delta * (2 * pts[:, j] - 1)
                     for j, m in enumerate(maps)]).T
    worst = 0.0
    for x in phys:
        a = truth.evaluate(x[:2], x[2:])
        b = e.evaluate(x[:2], x[2:])
        worst = max(worst, np.abs(a - b).max() / max(1.0, np.abs(a).max()))
    assert worst <= 1e-10


def test_project_log_space_single_coefficient():
    iset = pc.total_order_index_set(2, 0)
    e = pc.PCExpansion(iset, np.array([[1.3]]), _unit_maps(2), log_space=True)
    v = e.evaluate(np.array([0.2]), np.array([0.9]))
    assert v[0] == pytest.approx(math.exp(1.3))


def test_project_rejects_bad_outputs():
    iset = pc.total_order_index_set(2, 1)
    rule = pc.tensor_quadrature([1, 1])
    with pytest.raises(ValueError, match="non-finite"):
        pc.project(lambda th, d: np.array([np.inf]), iset, rule,
                   _unit_maps(2), n_theta=1)
    with pytest.raises(ValueError, match="positive"):
        pc.project(lambda th, d: np.array([th[0]]), iset, rule,
                   _unit_maps(2), n_theta=1, log_space=True)


# ---------------------------------------------------------------------------
# evaluation and design gradients


def test_evaluate_rejects_out_of_domain():
    iset = pc.total_order_index_set(2, 1)
    e = pc.PCExpansion(iset, np.ones((1, 3)), pc.box_maps([(0, 1), (0, 1)]))
    with pytest.raises(ValueError, match="domain"):
        e.evaluate(np.array([1.5]), np.array([0.5]))


def test_gradient_constant_expansion_is_zero():
    iset = pc.total_order_index_set(3, 0)
    e = pc.PCExpansion(iset, np.array([[2.0], [5.0]]), _unit_maps(3))
    g = e.gradient_wrt_design(np.array([0.1]), np.array([0.2, -0.2]))
    assert g.shape == (2, 2)
    assert np.all(g == 0.0)


def test_gradient_chain_rule_scale():
    # f(theta, d) = xi_design with d = 0.5 + 0.5 xi, so df/dd = 1/delta = 2
    maps = pc.box_maps([(-1, 1), (0, 1)])
    iset = pc.total_order_index_set(2, 1)
    rule = pc.tensor_quadrature([1, 1])
    e = pc.project(lambda th, d: np.array([(d[0] - 0.5) / 0.5]), iset, rule,
                   maps, n_theta=1)
    g = e.gradient_wrt_design(np.array([0.3]), np.array([0.8]))
    assert g[0, 0] == pytest.approx(2.0, rel=1e-12)


@settings(deadline=None, max_examples=100)
@given(trial=st.integers(0, 10_000))
def test_gradient_matches_finite_difference(trial):
    rng = np.random.default_rng(trial)
    iset = pc.total_order_index_set(3, 3)
    maps = pc.box_maps([(0, 1), (0, 2), (-1, 3)])
    log_space = bool(trial % 3 == 0)
    scale = 0.2 if log_space else 1.0
    e = pc.PCExpansion(iset, scale * rng.standard_normal((2, len(iset))),
                       maps, log_space=log_space)
    theta = np.array([0.1 + 0.8 * rng.random(), 0.2 + 1.6 * rng.random()])
    d = np.array([-0.5 + 3.0 * rng.random()])
    h = 1e-6
    fd = (e.evaluate(theta, d + h) - e.evaluate(theta, d - h)) / (2 * h)
    an = e.gradient_wrt_design(theta, d)[:, 0]
    assert np.allclose(an, fd, rtol=1e-5, atol=1e-8)


def test_value_and_gradient_many_consistent(rng):
    iset = pc.total_order_index_set(4, 3)
    maps = pc.box_maps([(0, 1)] * 4)
    e = pc.PCExpansion(iset, rng.standard_normal((5, len(iset))), maps)
    thetas = rng.random((17, 2))
    d = np.array([0.4, 0.6])
    v, g = e.value_and_gradient_many(thetas, d)
    assert np.array_equal(v, e.evaluate_many(thetas, d))
    assert np.array_equal(g, e.gradient_wrt_design_many(thetas, d))


# ---------------------------------------------------------------------------
# serialization


def test_serialization_round_trip(rng):
    iset = pc.total_order_index_set(4, 4)
    maps = pc.box_maps([(0, 1)] * 4)
    e = pc.PCExpansion(iset, rng.standard_normal((5, len(iset))), maps,
                       log_space=False)
    doc = json.loads(json.dumps(e.to_json_dict()))
    assert doc["ordering"] == "grlex"
    assert doc["dimension"] == 4 and doc["degree"] == 4
    assert doc["outputs"] == 5
    e2 = pc.PCExpansion.from_json_dict(doc)
    thetas = rng.random((11, 2))
    d = np.array([0.3, 0.9])
    assert np.array_equal(e.evaluate_many(thetas, d),
                          e2.evaluate_many(thetas, d))
    assert np.array_equal(e.gradient_wrt_design_many(thetas, d),
                          e2.gradient_wrt_design_many(thetas, d))


def test_save_load_file(tmp_path, rng):
    iset = pc.total_order_index_set(2, 1)
    e = pc.PCExpansion(iset, rng.standard_normal((1, 3)), _unit_maps(2))
    path = tmp_path / "exp.json"
    e.save(path)
    e2 = pc.PCExpansion.load(path)
    assert np.array_equal(e.coefficients, e2.coefficients)


def test_from_json_rejects_unknown_ordering():
    doc = {"dimension": 1, "degree": 0, "ordering": "lex",
           "maps": [{"gamma": 0, "delta": 1}], "outputs": 1,
           "log_space": False, "coefficients": [[1.0]]}
    with pytest.raises(ValueError, match="ordering"):
        pc.PCExpansion.from_json_dict(doc)
