"""Command-line entry point: ``distcg <subcommand> [--config FILE] [--seed S] [--out PATH]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .cg_core import BetaScheme, cg_minimize
from .diagnostics import IterateTrace, appendix_b_sequences, write_diagnostics_csv
from .errors import InvalidParameterError, TuningError, UnsupportedLossError
from .graph import connectivity_ratio, generate_random_connected, write_edge_list
from .harness.config import ALGORITHMS, ExperimentConfig, load_config
from .harness.outputs import emit_outputs, kappa_label, plot_traces, write_trace
from .harness.runner import build_trial, final_run, run_experiment, tune
from .mixing import laplacian_weights, metropolis_hastings
from .problems import load_problem


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _out_dir(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup(args, cfg):
    if not 0 <= args.kappa_index < len(cfg.kappas):
        raise InvalidParameterError(f"kappa index {args.kappa_index} out of range")
    return build_trial(cfg, args.kappa_index, args.trial)


def cmd_graph(args):
    cfg = _config(args)
    n = args.n_agents or cfg.n_agents
    kappa = args.kappa if args.kappa is not None else cfg.kappas[0]
    g = generate_random_connected(n, kappa, cfg.seed)
    mm = metropolis_hastings(g) if args.mixing == "metropolis" else laplacian_weights(g)
    print(f"N={g.n_agents} edges={g.n_edges} kappa={connectivity_ratio(g):.6f} "
          f"lambda({args.mixing})={mm.lam:.6g}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_edge_list(g, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_solve_central(args):
    cfg = _config(args)
    if args.problem:
        problem, x0 = load_problem(args.problem)
    else:
        problem, x0 = build_trial(cfg, 0, 0).problem, None
    if x0 is None:
        x0 = np.zeros(problem.dim)
    else:
        x0 = np.asarray(x0)[0] if np.ndim(x0) == 2 else x0
    rule = "exact" if problem.is_quadratic else "armijo"
    scheme = BetaScheme.parse(args.scheme)
    x, trace = cg_minimize(problem, x0, scheme, rule, tol=args.tol, max_iter=args.max_iter)
    err = np.linalg.norm(x - problem.x_star) / np.linalg.norm(problem.x_star) \
        if problem.x_star is not None else float("nan")
    print(f"{scheme.label()} ({rule} steps): {trace.iterations} iterations, "
          f"|grad|={trace.grad_norms[-1]:.3e}, rel. error vs reference={err:.3e}")
    if args.out:
        out = _out_dir(args, ".")
        with open(out / "central_trace.csv", "w", newline="") as fh:
            fh.write("# distcg-trace v1 centralized\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "grad_norm", "value"])
            for k, (gn, v) in enumerate(zip(trace.grad_norms, trace.values)):
                w.writerow([k, repr(float(gn)), repr(float(v))])
        (out / "x_central.csv").write_text(",".join(repr(float(v)) for v in x) + "\n")
    return 0


def cmd_run(args):
    cfg = _config(args)
    setup = _setup(args, cfg)
    if args.alpha is not None:
        params = {"alpha": args.alpha, "rho": args.alpha, "gamma": args.gamma,
                  "beta_scheme": args.scheme or cfg.beta_scheme}
    else:
        params = tune(args.algo, setup, cfg).params
    rec = final_run(args.algo, params, setup, cfg)
    out = _out_dir(args, "run_out")
    label = kappa_label(setup.kappa_target)
    write_trace(out / f"rse_trace_{args.algo}_{label}.csv", rec)
    plot_traces(out / f"rse_{args.algo}_{label}.png", label, [(args.algo, rec)])
    shown = {k: v for k, v in params.items() if k in ("alpha", "rho", "gamma", "beta_scheme")}
    print(f"{args.algo}: iterations={rec.iterations} converged={rec.converged} "
          f"final max RSE={rec.final_rse:.3e} mean bytes/agent={rec.mean_bytes:.0f} params={shown}")
    return 0 if rec.converged else 1


def cmd_tune(args):
    cfg = _config(args)
    setup = _setup(args, cfg)
    algos = [args.algo] if args.algo else list(cfg.algorithms)
    out = _out_dir(args, "tune_out")
    with open(out / "tune_log.csv", "w", newline="") as fh:
        fh.write("# distcg-tune-log v1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "evaluation", "parameter", "value", "extra", "score"])
        for algo in algos:
            try:
                res = tune(algo, setup, cfg)
            except (TuningError, UnsupportedLossError) as exc:
                print(f"{algo}: {exc}")
                continue
            for row in res.log_rows():
                w.writerow([row[0], row[1], row[2], repr(float(row[3])), row[4], repr(float(row[5]))])
            print(f"{algo}: score={res.score:.2f} params={res.params}")
    return 0


def cmd_bench(args):
    cfg = _config(args)
    result = run_experiment(cfg)
    out = _out_dir(args, "bench_out")
    paths = emit_outputs(result, out, figures=not args.no_figures)
    failed = [r for r in result.records if not r.converged]
    print(f"{len(result.records)} runs, {len(failed)} not converged; wrote {len(paths)} files to {out}")
    return 0


def cmd_diagnose(args):
    cfg = _config(args)
    setup = _setup(args, cfg)
    if args.alpha is not None:
        params = {"alpha": args.alpha, "beta_scheme": args.scheme or cfg.beta_scheme}
    else:
        params = tune("dcgrad", setup, cfg).params
    rec = final_run("dcgrad", params, setup, cfg, keep_history=True)
    trace = IterateTrace.from_history(rec.history)
    out = _out_dir(args, "diagnose_out")
    rows = write_diagnostics_csv(trace, out / "diagnostics.csv", setup.mixing.lam,
                                 setup.problem.lipschitz)
    ok = {name: all(r.get(f"{name}_ok", 1) for r in rows) for name in ("x_tilde", "s_tilde", "z_tilde")}
    _plot_diagnostics(out / "diagnostics.png", trace)
    seq = appendix_b_sequences(trace)
    print(f"dcgrad: iterations={rec.iterations} converged={rec.converged}; "
          f"bound checks hold at every iteration: {ok}; final R={seq['R'][-1] if seq['R'].size else 0:.4g}")
    return 0 if all(ok.values()) else 1


def _plot_diagnostics(path, trace):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .diagnostics import consensus_violation

    ks = np.arange(trace.n_snapshots)
    cv = np.array([consensus_violation(trace, k) for k in ks])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for j, name in enumerate(("x~", "s~", "z~", "g~")):
        ax.semilogy(ks, np.maximum(cv[:, j], 1e-300), label=f"||{name}||")
    ax.set_xlabel("iteration")
    ax.set_ylabel("consensus violation (spectral norm)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value experiment config file")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--out", help="output file (graph) or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    trial = argparse.ArgumentParser(add_help=False)
    trial.add_argument("--kappa-index", type=int, default=0,
                       help="which entry of the config's kappa list to use")
    trial.add_argument("--trial", type=int, default=0)

    p = argparse.ArgumentParser(prog="distcg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("graph", parents=[common], help="generate a random connected graph")
    sp.add_argument("--n-agents", type=int)
    sp.add_argument("--kappa", type=float)
    sp.add_argument("--mixing", choices=("metropolis", "laplacian"), default="metropolis")
    sp.set_defaults(func=cmd_graph)

    sp = sub.add_parser("solve-central", parents=[common], help="centralized nonlinear CG")
    sp.add_argument("--problem", help="problem fixture file")
    sp.add_argument("--scheme", default="fletcher_reeves")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--max-iter", type=int, default=1000)
    sp.set_defaults(func=cmd_solve_central)

    sp = sub.add_parser("run", parents=[common, trial], help="run one algorithm on one trial")
    sp.add_argument("--algo", choices=ALGORITHMS, default="dcgrad")
    sp.add_argument("--alpha", type=float, help="step-size (rho for c_admm); tuned if omitted")
    sp.add_argument("--gamma", type=float, default=0.0, help="ABm momentum")
    sp.add_argument("--scheme", help="beta scheme, e.g. fr, pr_plus, clamped(fr,0.2)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("tune", parents=[common, trial], help="golden-section tuning log as CSV")
    sp.add_argument("--algo", choices=ALGORITHMS)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("bench", parents=[common], help="full experiment with tables and figures")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("diagnose", parents=[common, trial], help="analysis quantities of a DC-Grad run")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--scheme")
    sp.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidParameterError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
