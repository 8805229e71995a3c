import numpy as np
import pytest
import scipy.sparse as sp

import tapflow as tf

from lp_oracle import enumerate_lp, random_lp


def make_lp(A, b, c, lower, upper):
    return tf.SparseLp(A=sp.csc_matrix(np.asarray(A, dtype=float)),
                       b=np.asarray(b, dtype=float), c=np.asarray(c, dtype=float),
                       lower=np.asarray(lower, dtype=float),
                       upper=np.asarray(upper, dtype=float))


def test_trivial_equality():
    lp = make_lp([[1.0]], [1.0], [1.0], [0.0], [2.0])
    sol = tf.solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(1.0, abs=1e-9)
    assert sol.objective == pytest.approx(1.0, abs=1e-9)
    assert tf.residuals(lp, sol) == (pytest.approx(0.0, abs=1e-9),
                                     pytest.approx(0.0, abs=1e-12))


def test_unbounded_no_constraints():
    lp = tf.SparseLp(A=sp.csc_matrix((0, 1)), b=np.zeros(0), c=np.array([-1.0]),
                     lower=np.array([0.0]), upper=np.array([np.inf]))
    assert tf.solve_lp(lp).status == "unbounded"


def test_unbounded_with_constraint():
    # min -x - y  s.t.  x - y = 0, both >= 0: the ray x = y -> inf.
    lp = make_lp([[1.0, -1.0]], [0.0], [-1.0, -1.0], [0.0, 0.0],
                 [np.inf, np.inf])
    assert tf.solve_lp(lp).status == "unbounded"


def test_infeasible_box():
    lp = make_lp([[1.0, 1.0]], [5.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0])
    assert tf.solve_lp(lp).status == "infeasible"


def test_bound_flip_path():
    # min -x1 - 2 x2  s.t. x1 + x2 = 1.5, boxes [0,1]: needs an upper-bound pin.
    lp = make_lp([[1.0, 1.0]], [1.5], [-1.0, -2.0], [0, 0], [1, 1])
    sol = tf.solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-2.5, abs=1e-9)
    assert sol.x[1] == pytest.approx(1.0, abs=1e-9)


def test_negative_lower_bounds():
    lp = make_lp([[1.0, 1.0]], [0.0], [1.0, 0.0], [-3.0, -1.0], [2.0, 1.0])
    sol = tf.solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-1.0, abs=1e-9)   # x = (-1, 1)


def test_free_variable():
    # min y  s.t.  y - x = 0, x in [-5, 5], y free.
    lp = make_lp([[-1.0, 1.0]], [0.0], [0.0, 1.0], [-5.0, -np.inf],
                 [5.0, np.inf])
    sol = tf.solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-5.0, abs=1e-9)


def test_beale_cycling_guard():
    """Beale's classic cycling instance terminates under the Bland fallback."""
    A = [[0.25, -60.0, -1.0 / 25.0, 9.0, 1.0, 0.0, 0.0],
         [0.5, -90.0, -1.0 / 50.0, 3.0, 0.0, 1.0, 0.0],
         [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]]
    b = [0.0, 0.0, 1.0]
    c = [-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0]
    n = 7
    lp = make_lp(A, b, c, [0.0] * n, [np.inf] * n)
    sol = tf.solve_lp(lp)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-0.05, abs=1e-9)


def test_random_lps_match_vertex_oracle():
    rng = np.random.default_rng(20240811)
    optimal = infeasible = 0
    for _ in range(50):
        lp = random_lp(rng)
        want_status, want_obj = enumerate_lp(lp)
        sol = tf.solve_lp(lp)
        assert sol.status == want_status
        if want_status == "optimal":
            optimal += 1
            assert sol.objective == pytest.approx(want_obj, abs=1e-7)
            primal, bound = tf.residuals(lp, sol)
            assert primal <= 1e-7 and bound <= 1e-9
        else:
            infeasible += 1
    # The corpus must exercise both classifications.
    assert optimal >= 10 and infeasible >= 5


def test_determinism():
    rng = np.random.default_rng(7)
    lp = random_lp(rng)
    a = tf.solve_lp(lp)
    b = tf.solve_lp(lp)
    assert a.status == b.status and a.iterations == b.iterations
    assert np.array_equal(a.x, b.x)


def test_objective_scaling_keeps_argmin():
    rng = np.random.default_rng(99)
    while True:
        lp = random_lp(rng)
        sol = tf.solve_lp(lp)
        if sol.status == "optimal":
            break
    scaled = tf.SparseLp(A=lp.A, b=lp.b, c=5.0 * lp.c, lower=lp.lower,
                         upper=lp.upper)
    sol5 = tf.solve_lp(scaled)
    assert sol5.status == "optimal"
    assert np.array_equal(sol.x, sol5.x)
    assert sol5.objective == pytest.approx(5.0 * sol.objective, abs=1e-9)


def test_residuals_report_perturbation():
    lp = make_lp([[2.0]], [2.0], [1.0], [0.0], [5.0])
    sol = tf.solve_lp(lp)
    sol.x = sol.x + 0.5
    primal, bound = tf.residuals(lp, sol)
    assert primal == pytest.approx(1.0, abs=1e-12)   # row norm 2 * 0.5
    assert bound == pytest.approx(0.0, abs=1e-12)


def test_dimension_validation():
    with pytest.raises(ValueError):
        make_lp([[1.0, 0.0]], [1.0], [1.0], [0.0], [1.0])
    with pytest.raises(ValueError):
        make_lp([[1.0]], [1.0], [1.0], [2.0], [1.0])     # lower > upper
    with pytest.raises(ValueError):
        make_lp([[0.0]], [1.0], [1.0], [0.0], [1.0])     # empty row


def test_mps_like_dump():
    lp = make_lp([[1.0, -1.0]], [0.5], [1.0, 2.0], [0.0, -1.0], [2.0, np.inf])
    text = tf.dump_mps_like(lp, name="T")
    for section in ("NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
        assert section in text
    assert " E  R0" in text
