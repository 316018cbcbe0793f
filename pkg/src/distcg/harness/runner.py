"""Experiment orchestration: graphs, instances, tuning and final runs."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import dcgrad
from ..baselines import ABM_FORM, BaselineKind, run_baseline
from ..cg_core import BetaScheme
from ..errors import TuningError, UnsupportedLossError
from ..graph import connectivity_ratio, generate_random_connected
from ..mixing import laplacian_weights, metropolis_hastings
from ..problems import generate_huber_instance, generate_ls_instance
from ..tuning import tune_algorithm
from .config import ExperimentConfig
from .records import RunRecord

log = logging.getLogger(__name__)


@dataclass
class TrialSetup:
    kappa_target: float
    trial: int
    graph_seed: int
    problem_seed: int
    graph: object
    mixing: object
    problem: object
    x0: np.ndarray | None

    @property
    def kappa(self):
        return connectivity_ratio(self.graph)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list = field(default_factory=list)
    setups: list = field(default_factory=list)

    def by(self, algorithm, kappa_target):
        return [r for r in self.records if r.algorithm == algorithm and r.kappa == kappa_target]


def trial_seeds(base_seed, kappa_index, trial):
    """Deterministic (graph, problem) seeds for one trial."""
    state = np.random.SeedSequence([int(base_seed), int(kappa_index), int(trial)]).generate_state(2)
    return int(state[0]), int(state[1])


def build_trial(cfg: ExperimentConfig, kappa_index, trial) -> TrialSetup:
    kappa = cfg.kappas[kappa_index]
    gs, ps = trial_seeds(cfg.seed, kappa_index, trial)
    g = generate_random_connected(cfg.n_agents, kappa, gs)
    mm = metropolis_hastings(g) if cfg.mixing == "metropolis" else laplacian_weights(g)
    if cfg.family == "ls":
        problem = generate_ls_instance(cfg.n_agents, cfg.dim, (cfg.m_min, cfg.m_max), ps)
        x0 = None
    else:
        problem, x0 = generate_huber_instance(cfg.n_agents, cfg.dim, cfg.xi, ps)
    return TrialSetup(kappa, trial, gs, ps, g, mm, problem, x0)


def final_run(algo, params, setup: TrialSetup, cfg: ExperimentConfig, keep_history=False):
    p, g, w = setup.problem, setup.graph, setup.mixing.w
    if algo == "dcgrad":
        return dcgrad.run(p, g, w, params["alpha"], BetaScheme.parse(params["beta_scheme"]),
                          cfg.tol, cfg.max_iter, setup.x0, keep_history=keep_history)
    if algo == "c_admm":
        kind = BaselineKind("c_admm", rho=params["rho"])
        return run_baseline(kind, p, g, w, None, cfg.tol, cfg.max_iter, setup.x0, keep_history)
    kind = BaselineKind(algo, gamma=params.get("gamma", 0.0))
    return run_baseline(kind, p, g, w, params["alpha"], cfg.tol, cfg.max_iter, setup.x0,
                        keep_history)


def tune(algo, setup: TrialSetup, cfg: ExperimentConfig):
    scheme = BetaScheme.parse(cfg.beta_scheme)
    kw = {}
    if algo == "dcgrad":
        kw = dict(scheme=scheme, beta_caps=cfg.beta_caps)
    elif algo == "abm":
        kw = dict(gammas=cfg.gammas)
    return tune_algorithm(algo, setup.problem, setup.graph, setup.mixing.w,
                          budget=cfg.tune_budget, tol=cfg.tol, max_iter=cfg.max_iter,
                          x0=setup.x0, require_convergence=False, **kw)


def run_trial(cfg: ExperimentConfig, setup: TrialSetup, keep_history=False):
    """Tune and run every configured algorithm on one (graph, instance) pair."""
    out = []
    seeds = {"graph": setup.graph_seed, "problem": setup.problem_seed}
    for algo in cfg.algorithms:
        try:
            tuned = tune(algo, setup, cfg)
            rec = final_run(algo, tuned.params, setup, cfg, keep_history)
            rec.params = dict(tuned.params, tune_score=tuned.score)
            if algo == "abm":
                rec.params["form"] = ABM_FORM
        except (TuningError, UnsupportedLossError) as exc:
            log.warning("%s failed at kappa=%s trial=%s: %s", algo, setup.kappa_target,
                        setup.trial, exc)
            rec = RunRecord(algo, error=f"{type(exc).__name__}: {exc}")
        rec.seeds = dict(seeds)
        rec.kappa = setup.kappa_target
        rec.trial = setup.trial
        if not keep_history:
            rec.final_state = None
        out.append(rec)
    return out


def run_experiment(cfg: ExperimentConfig, keep_history=False) -> ExperimentResult:
    """All kappa values x trials x algorithms; failures are recorded, not raised."""
    result = ExperimentResult(cfg)
    for ki in range(len(cfg.kappas)):
        for trial in range(cfg.trials):
            setup = build_trial(cfg, ki, trial)
            log.info("kappa=%s trial=%d (actual kappa %.4f, lambda %.4g)",
                     setup.kappa_target, trial, setup.kappa, setup.mixing.lam)
            result.setups.append(setup)
            result.records.extend(run_trial(cfg, setup, keep_history))
    return result
