import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import fixed_step_cg_iterations
from distcg.cg_core import BetaScheme
from distcg.dcgrad import run as run_dcgrad
from distcg.errors import InvalidParameterError, TuningError, UnsupportedLossError
from distcg.graph import Graph, generate_random_connected
from distcg.mixing import metropolis_hastings
from distcg.problems import generate_huber_instance, generate_ls_instance
from distcg.tuning import (INV_PHI, default_alpha_bracket, fractional_iterations,
                           golden_section, score_record, tune_algorithm)


def test_golden_quadratic():
    res = golden_section(lambda x: (x - 2.0) ** 2, 0.0, 5.0, 1e-6)
    assert abs(res.best_param - 2.0) <= 1e-6
    assert not res.exhausted


def test_golden_abs():
    res = golden_section(lambda x: abs(x - 1.0), 0.0, 3.0, 1e-6)
    assert abs(res.best_param - 1.0) <= 1e-6


def test_golden_degenerate_bracket():
    calls = []
    res = golden_section(lambda x: calls.append(x) or x * x, 0.7, 0.7)
    assert res.best_param == 0.7 and calls == [0.7]


def test_golden_exhausted_returns_best_seen():
    res = golden_section(lambda x: (x - 2.0) ** 2, 0.0, 5.0, 1e-12, max_evals=5)
    assert res.exhausted
    assert len(res.evaluations) == 5
    assert res.best_score == min(v for _, v in res.evaluations)


def test_golden_validation():
    with pytest.raises(InvalidParameterError):
        golden_section(abs, 1.0, 0.0)
    with pytest.raises(InvalidParameterError):
        golden_section(abs, 0.0, 1.0, 0.0)


@given(st.floats(-5, 5), st.floats(0.1, 10))
def test_bracket_shrinks_by_golden_ratio(center, width):
    lo, hi = center - width, center + width
    res = golden_section(lambda x: (x - center - 0.1 * width) ** 2, lo, hi, 1e-3, max_evals=12)
    a, b = res.bracket
    # two evaluations initialize the bracket; each further one shrinks it once
    k = len(res.evaluations) - 2
    assert math.isclose(b - a, (hi - lo) * INV_PHI ** k, rel_tol=1e-9)


def test_fractional_iterations():
    assert fractional_iterations([1.0, 1e-1, 1e-3], 1e-2) == pytest.approx(1.5)
    assert fractional_iterations([1e-3], 1e-2) == 0.0
    assert fractional_iterations([1.0, 0.5], 1e-2) is None


@pytest.fixture(scope="module")
def fixed_ls():
    p = generate_ls_instance(10, 4, (4, 9), seed=3)
    g = generate_random_connected(10, 0.5, seed=3)
    return p, g, metropolis_hastings(g).w


def _iters(rec):
    return rec.iterations if rec.converged else math.inf


def test_tuned_alpha_beats_random_probes(fixed_ls):
    p, g, w = fixed_ls
    tol, max_iter = 1e-10, 3000
    res = tune_algorithm("dcgrad", p, g, w, budget=30, tol=tol, max_iter=max_iter)
    scheme = BetaScheme.parse(res.params["beta_scheme"])
    tuned = _iters(run_dcgrad(p, g, w, res.params["alpha"], scheme, tol, max_iter))
    lo, hi = default_alpha_bracket(p)
    rng = np.random.default_rng(0)
    probes = np.concatenate([rng.uniform(lo, hi, 50),
                             10.0 ** rng.uniform(math.log10(lo), math.log10(hi), 50)])
    best_probe = min(_iters(run_dcgrad(p, g, w, a, scheme, tol, max_iter)) for a in probes)
    assert tuned <= best_probe


@pytest.mark.parametrize("seed", [0, 2])
def test_single_agent_matches_central_sweep(seed):
    p = generate_ls_instance(1, 4, (8, 12), seed=seed)
    g, w = Graph.complete(1), np.ones((1, 1))
    cap, tol, max_iter = 0.2, 1e-10, 300
    res = tune_algorithm("dcgrad", p, g, w, budget=40, tol=tol, max_iter=max_iter, beta_caps=(cap,))
    a = p.agents[0]
    _, hi = default_alpha_bracket(p)
    grid = np.geomspace(hi / 20, hi, 400)
    its = np.array([fixed_step_cg_iterations(a.c, a.y, p.x_star, al, cap, tol, max_iter) or np.inf
                    for al in grid])
    best = grid[np.argmin(its)]
    tuned = run_dcgrad(p, g, w, res.params["alpha"], BetaScheme("fletcher_reeves", cap), tol, max_iter)
    assert tuned.converged and tuned.iterations <= its.min()
    assert abs(math.log10(res.params["alpha"] / best)) <= 0.05


def test_tune_is_deterministic(fixed_ls):
    p, g, w = fixed_ls
    kw = dict(budget=15, tol=1e-8, max_iter=2000)
    a = tune_algorithm("abm", p, g, w, gammas=(0.3, 0.6), **kw)
    b = tune_algorithm("abm", p, g, w, gammas=(0.3, 0.6), **kw)
    assert a.params == b.params and a.log == b.log


def test_admm_huber_unsupported():
    p, _ = generate_huber_instance(4, 3, seed=0)
    g = Graph.complete(4)
    with pytest.raises(UnsupportedLossError):
        tune_algorithm("c_admm", p, g, metropolis_hastings(g).w)


def test_nothing_converges(fixed_ls):
    p, g, w = fixed_ls
    with pytest.raises(TuningError) as exc:
        tune_algorithm("diging_atc", p, g, w, bracket=(1e-6, 1e-5), budget=6, max_iter=20)
    assert len(exc.value.scores) > 0
    res = tune_algorithm("diging_atc", p, g, w, bracket=(1e-6, 1e-5), budget=6, max_iter=20,
                         require_convergence=False)
    assert not res.converged


def test_score_ordering(fixed_ls):
    p, g, w = fixed_ls
    ok = run_dcgrad(p, g, w, 0.02, BetaScheme("fr", 0.2), 1e-8, 2000)
    slow = run_dcgrad(p, g, w, 1e-4, BetaScheme("fr", 0.2), 1e-8, 2000)
    bad = run_dcgrad(p, g, w, 5.0, BetaScheme("fr", 0.2), 1e-8, 2000)
    assert ok.converged and not slow.converged and bad.diverged
    assert score_record(ok, 1e-8, 2000) < score_record(slow, 1e-8, 2000) < score_record(bad, 1e-8, 2000)


def test_bad_bracket(fixed_ls):
    p, g, w = fixed_ls
    with pytest.raises(InvalidParameterError):
        tune_algorithm("diging_atc", p, g, w, bracket=(0.0, 1.0))
    with pytest.raises(InvalidParameterError):
        tune_algorithm("extra", p, g, w)
