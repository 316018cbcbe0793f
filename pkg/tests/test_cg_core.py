import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import random_spd_wishart
from distcg.cg_core import BetaScheme, Quadratic, beta, beta_rows, cg_minimize
from distcg.errors import DivergenceError, InvalidParameterError
from distcg.problems import generate_huber_instance, generate_ls_instance

SCHEMES = [BetaScheme(k) for k in ("hestenes_stiefel", "fletcher_reeves", "polak_ribiere", "pr_plus")]


def test_beta_examples():
    g = np.array([1.0, -2.0])
    s = np.array([0.3, 0.1])
    assert beta(BetaScheme("fr"), g, g, s) == 1.0
    assert beta(BetaScheme("pr"), g, g, s) == 0.0
    z = np.zeros(2)
    for sc in SCHEMES:
        assert beta(sc, z, z, s) == 0.0


def test_beta_formulas():
    rng = np.random.default_rng(0)
    gn, gp, s = rng.standard_normal((3, 6))
    assert beta(BetaScheme("hs"), gn, gp, s) == pytest.approx((gn - gp) @ gn / ((gn - gp) @ s))
    assert beta(BetaScheme("fr"), gn, gp, s) == pytest.approx(gn @ gn / (gp @ gp))
    pr = (gn - gp) @ gn / (gp @ gp)
    assert beta(BetaScheme("pr"), gn, gp, s) == pytest.approx(pr)
    assert beta(BetaScheme("pr_plus"), gn, gp, s) == pytest.approx(max(pr, 0.0))


def test_hs_tiny_denominator():
    g = np.array([1.0, 0.0])
    s = np.array([0.0, 1.0])  # (g_next - g_prev) orthogonal to s
    assert beta(BetaScheme("hs"), 2 * g, g, s) == 0.0


@given(st.lists(st.floats(-10, 10), min_size=9, max_size=9), st.floats(0.01, 2.0))
def test_clamped_range(vals, cap):
    gn, gp, s = np.array(vals).reshape(3, 3)
    b = beta(BetaScheme("pr", cap), gn, gp, s)
    assert 0.0 <= b <= cap
    assert beta(BetaScheme("pr_plus"), gn, gp, s) >= 0.0


def test_beta_rows_matches_scalar():
    rng = np.random.default_rng(5)
    gn, gp, s = rng.standard_normal((3, 7, 4))
    gp[2] = 0.0
    gn[2] = 0.0
    for sc in SCHEMES + [BetaScheme("fr", 0.3)]:
        rows = beta_rows(sc, gn, gp, s)
        assert np.allclose(rows, [beta(sc, gn[i], gp[i], s[i]) for i in range(7)], rtol=1e-14)


def test_parse_and_label():
    assert BetaScheme.parse("clamped(fr,0.5)") == BetaScheme("fletcher_reeves", 0.5)
    assert BetaScheme.parse("pr@0.2") == BetaScheme("polak_ribiere", 0.2)
    assert BetaScheme.parse(BetaScheme("hs", 0.25).label()) == BetaScheme("hs", 0.25)
    with pytest.raises(InvalidParameterError):
        BetaScheme("steepest")
    with pytest.raises(InvalidParameterError):
        BetaScheme("fr", 0.0)


def _quadratics(count=20, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(3, 11))
        a = random_spd_wishart(rng, n)
        yield Quadratic(a, rng.standard_normal(n)), rng.standard_normal(n)


def test_finite_termination_all_schemes():
    for q, x0 in _quadratics():
        n = q.b.size
        for sc in SCHEMES:
            x, tr = cg_minimize(q, x0, sc, "exact", tol=1e-10, max_iter=n)
            assert tr.converged, (sc, n, tr.grad_norms[-1])
            assert tr.iterations <= n
            assert np.allclose(x, q.minimizer(), rtol=1e-8, atol=1e-8)


def test_schemes_agree_on_quadratics():
    for q, x0 in _quadratics(seed=1):
        traces = [cg_minimize(q, x0, sc, "exact", tol=1e-10, max_iter=q.b.size)[1] for sc in SCHEMES]
        k = min(t.iterations for t in traces)
        for t in traces[1:]:
            for a, b in zip(traces[0].xs[:k + 1], t.xs[:k + 1]):
                assert np.max(np.abs(a - b)) <= 1e-8


def test_conjugacy_and_descent():
    for q, x0 in _quadratics(seed=2):
        _, tr = cg_minimize(q, x0, BetaScheme("fr"), "exact", tol=1e-10, max_iter=q.b.size)
        d = tr.directions
        for k in range(tr.iterations - 1):
            lhs = abs(d[k + 1] @ q.a @ d[k])
            assert lhs <= 1e-8 * np.linalg.norm(d[k + 1]) * np.linalg.norm(q.a @ d[k])
        assert all(b <= a + 1e-12 for a, b in zip(tr.values, tr.values[1:]))


def test_start_at_minimizer():
    q, _ = next(_quadratics(1))
    x_opt = q.minimizer()
    x0 = x_opt - np.linalg.solve(q.a, q.gradient(x_opt))  # one refinement step
    x, tr = cg_minimize(q, x0, tol=1e-10)
    assert tr.iterations == 0
    assert np.array_equal(x, x0)


def test_ls_instance_matches_normal_equations():
    p = generate_ls_instance(seed=3)
    x, tr = cg_minimize(p, np.zeros(p.dim), BetaScheme("fr"), "exact", tol=1e-12, max_iter=50)
    assert tr.converged
    assert p.rse(x[None, :])[0] <= 1e-10


def test_huber_armijo():
    p, _ = generate_huber_instance(seed=1)
    x, tr = cg_minimize(p, np.zeros(p.dim), BetaScheme("pr_plus"), "armijo", tol=1e-10, max_iter=500)
    assert tr.converged
    assert np.linalg.norm(x - p.x_star) <= 1e-8 * np.linalg.norm(p.x_star)


def test_exact_rule_requires_quadratic():
    p, _ = generate_huber_instance(seed=1)
    with pytest.raises(InvalidParameterError):
        cg_minimize(p, np.zeros(p.dim), step_rule="exact")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fixed_step_divergence():
    q = Quadratic(np.diag([1.0, 100.0]), np.ones(2))
    with pytest.raises(DivergenceError) as exc:
        cg_minimize(q, np.ones(2), BetaScheme("fr"), step_rule=1.0, max_iter=10_000, restart=False)
    assert exc.value.iteration > 0


def test_max_iter_flag():
    q = Quadratic(np.diag([1.0, 100.0]), np.ones(2))
    _, tr = cg_minimize(q, np.zeros(2), step_rule=1e-4, max_iter=5)
    assert tr.max_iter_reached and not tr.converged


def test_tol_must_be_positive():
    q = Quadratic(np.eye(2), np.ones(2))
    with pytest.raises(InvalidParameterError):
        cg_minimize(q, np.zeros(2), tol=0.0)
