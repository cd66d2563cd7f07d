"""Config-driven experiment runner.

Verbs:

* ``mfo solve    --config cfg.json [--seed S] [--out DIR] [--repeats R]``
* ``mfo bridge   --mu0 final.json --m1 marginal.json --problem NAME [--config cfg.json] [--out DIR]``
* ``mfo quantize --dist SPEC --n N --method {sample,grid} [--seed S] [--out FILE]``
* ``mfo report   --run DIR``

Configs are versioned JSON (see README).  Every numeric artifact is
reproducible from (config, seed); the only non-reproducible column is
the measured ``time_ms`` in ``history.csv``.  Batch repeats run
concurrently with independent seeds; the worker count comes from the
``MFO_THREADS`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .examples import PROBLEM_BUILDERS
from .measures import EmpiricalMeasure
from .problem import OracleError, aggregate
from .quantize import SourceDistribution, grid_truncation, quantize_grid, quantize_sample
from .solvers import SolverConfig, fw_solve, sfw_solve
from .transport import bridge

CONFIG_SCHEMA = 1


class ConfigError(ValueError):
    pass


def _require(cfg: dict, field: str, context: str):
    if field not in cfg:
        raise ConfigError(f"missing field {context}.{field}")
    return cfg[field]


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if cfg.get("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {cfg.get('schema')!r}")
    return cfg


def build_problem(problem_cfg: dict):
    name = _require(problem_cfg, "name", "problem")
    if name not in PROBLEM_BUILDERS:
        raise ConfigError(f"unknown problem {name!r}; available: {sorted(PROBLEM_BUILDERS)}")
    return PROBLEM_BUILDERS[name](problem_cfg)


def build_marginal(marginal_cfg: dict, problem, seed: int) -> EmpiricalMeasure:
    if "file" in marginal_cfg:
        return EmpiricalMeasure.load_json(marginal_cfg["file"])
    if "atoms" in marginal_cfg:
        return EmpiricalMeasure.from_atoms(
            "X", [(a["x"], a["w"]) for a in marginal_cfg["atoms"]], merge=False
        )
    dist = SourceDistribution.parse(_require(marginal_cfg, "dist", "marginal"))
    n = int(_require(marginal_cfg, "n", "marginal"))
    method = marginal_cfg.get("method", "sample")
    if method == "grid":
        m = quantize_grid(dist, n)
    elif method == "sample":
        m = quantize_sample(dist, n, marginal_cfg.get("seed", seed))
    else:
        raise ConfigError(f"unknown quantization method {method!r}")
    cap = getattr(problem, "stock_cap", None)
    if cap is not None:
        xs = np.clip(m.xs, 0.0, cap)
        m = EmpiricalMeasure("X", xs=xs, weights=m.weights, validate=False)
    return m


def build_solver_config(solver_cfg: dict, seed_override=None) -> tuple[str, SolverConfig]:
    algorithm = solver_cfg.get("algorithm", "fw")
    if algorithm not in ("fw", "sfw"):
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    seed = seed_override if seed_override is not None else solver_cfg.get("seed", 0)
    cfg = SolverConfig(
        iterations=int(solver_cfg.get("iterations", 100)),
        n_sims=solver_cfg.get("n_sims", 1),
        seed=int(seed),
        monotone_guard=bool(solver_cfg.get("monotone_guard", True)),
        gap_tol=solver_cfg.get("gap_tol"),
    )
    return algorithm, cfg


def _write_resource_dumps(problem, report, m_n, out: Path):
    lam = report.certificate.lam
    if report.agent_state is not None:
        profiles = report.agent_state.decisions
    else:
        profiles = problem.best_response_batch(lam, m_n.xs)
    with open(out / "extraction.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent", "t", "time", "q", "stock"])
        for i, (x, q) in enumerate(zip(m_n.xs, profiles)):
            stocks = problem.stock_trajectory(x, q)
            for t in range(problem.steps):
                writer.writerow([i, t, repr(problem.times[t]), repr(float(q[t])), repr(float(stocks[t]))])
    beta = aggregate(problem, report.final_measure) if report.final_measure is not None else None
    if beta is not None:
        rate = problem.aggregate_rate(beta)
        with open(out / "aggregate.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "time", "Q"])
            for t in range(problem.steps):
                writer.writerow([t, repr(problem.times[t]), repr(float(rate[t]))])


def _write_congestion_dumps(problem, report, m_n, out: Path):
    if report.agent_state is not None:
        trajs = report.agent_state.decisions
    else:
        trajs = problem.best_response_batch(report.certificate.lam, m_n.xs)
    with open(out / "trajectories.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent", "t", "time", "position"])
        for i, tr in enumerate(trajs):
            for t in range(problem.steps + 1):
                writer.writerow([i, t, repr(t * problem.dt), repr(float(tr[t]))])


def _write_traffic_dumps(problem, report, m_n, out: Path):
    beta = aggregate(problem, report.final_measure)
    flows = problem.edge_flows(beta)
    lam = problem.f_grad(beta)
    with open(out / "flows.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["edge", "tail", "head", "flow", "latency"])
        for e, edge in enumerate(problem.edges):
            writer.writerow([e, edge.tail, edge.head, repr(float(flows[e])), repr(float(lam.values[e]))])


_DUMPERS = {
    "resource": _write_resource_dumps,
    "congestion": _write_congestion_dumps,
    "traffic": _write_traffic_dumps,
}


def _run_single(cfg, seed, out: Path):
    problem = build_problem(_require(cfg, "problem", "config"))
    marginal_cfg = dict(_require(cfg, "marginal", "config"))
    if seed is not None and "seed" not in marginal_cfg:
        marginal_cfg["seed"] = seed
    algorithm, solver_cfg = build_solver_config(cfg.get("solver", {}), seed)
    m_n = build_marginal(marginal_cfg, problem, solver_cfg.seed)
    solver = sfw_solve if algorithm == "sfw" else fw_solve
    try:
        report = solver(problem, m_n, solver_cfg)
    except OracleError as exc:
        raise OracleError(f"{exc} (run seed {solver_cfg.seed})") from exc
    out.mkdir(parents=True, exist_ok=True)
    report.write_history_csv(out / "history.csv")
    report.save_final_json(out / "final.json")
    m_n.save_json(out / "marginal.json")
    dumper = _DUMPERS.get(problem.name)
    if dumper:
        dumper(problem, report, m_n, out)
    return problem, m_n, report


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    if args.problem:
        cfg.setdefault("problem", {})["name"] = args.problem
    out = Path(args.out)
    repeats = args.repeats if args.repeats is not None else int(cfg.get("repeats", 1))
    if repeats < 1:
        raise ConfigError("repeats must be at least 1")
    base_seed = args.seed if args.seed is not None else cfg.get("solver", {}).get("seed", 0)
    if repeats <= 1:
        problem, _, report = _run_single(cfg, base_seed, out)
        print(f"solve[{problem.name}] iterations={report.iterations_run} "
              f"objective={report.certificate.primal_value:.8g} gap={report.certificate.gap:.3g}")
        return 0
    workers = max(1, int(os.environ.get("MFO_THREADS", "1")))

    def one(r):
        return _run_single(cfg, base_seed + r, out / f"rep{r:03d}")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, range(repeats)))
    problem = results[0][0]
    if problem.name == "resource":
        rates = []
        for prob, _, report in results:
            beta = aggregate(prob, report.final_measure)
            rates.append(prob.aggregate_rate(beta))
        rates = np.vstack(rates)
        with open(out / "aggregate_batch.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "time", "mean", "std"])
            for t in range(problem.steps):
                writer.writerow([t, repr(problem.times[t]),
                                 repr(float(rates[:, t].mean())), repr(float(rates[:, t].std()))])
    gaps = [rep.certificate.gap for _, _, rep in results]
    print(f"solve[{problem.name}] repeats={repeats} max_gap={max(gaps):.3g}")
    return 0


def _load_mu0(path):
    with open(path) as fh:
        payload = json.load(fh)
    if "measure" in payload:
        mu0 = EmpiricalMeasure.from_json_dict(payload["measure"])
        eps0 = float(payload["certificate"]["gap"])
        return mu0, eps0
    return EmpiricalMeasure.from_json_dict(payload), None


def cmd_bridge(args) -> int:
    if args.config:
        problem = build_problem(_require(load_config(args.config), "problem", "config"))
    elif args.problem:
        problem = build_problem({"name": args.problem})
    else:
        raise ConfigError("bridge needs --problem or --config")
    mu0, eps0 = _load_mu0(args.mu0)
    if eps0 is None:
        if args.eps0 is None:
            raise ConfigError("mu0 carries no gap certificate; pass --eps0")
        eps0 = args.eps0
    m1 = EmpiricalMeasure.load_json(args.m1)
    result = bridge(mu0, m1, problem, details=True)
    eta = eps0 + 2.0 * problem.set_lipschitz * (
        problem.sup_grad_norm + problem.grad_lipschitz * problem.sup_g_norm
    ) * result.transport_cost
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.measure.save_json(out / "bridged.json")
    report = {
        "schema": 1,
        "problem": problem.describe(),
        "eps0": eps0,
        "d1": result.transport_cost,
        "eta": eta,
        "aggregate_shift": result.aggregate_shift,
        "objective_before": result.objective_before,
        "objective_after": result.objective_after,
        "coupling": result.coupling.to_json_dict(),
    }
    with open(out / "bridge_report.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, separators=(",", ":"))
    print(f"bridge[{problem.name}] d1={result.transport_cost:.6g} eta={eta:.6g} "
          f"objective {result.objective_before:.8g} -> {result.objective_after:.8g}")
    return 0


def cmd_quantize(args) -> int:
    dist = SourceDistribution.parse(args.dist)
    if args.method == "grid":
        m = quantize_grid(dist, args.n)
        trunc = grid_truncation(dist, args.n)
        if trunc:
            print(f"truncated {dist.describe()} at quantile {trunc[0]} (x <= {trunc[1]:.6g})")
    else:
        m = quantize_sample(dist, args.n, args.seed)
    m.save_json(args.out)
    print(f"quantize[{args.method}] {dist.describe()} n={args.n} -> {args.out}")
    return 0


def cmd_report(args) -> int:
    run = Path(args.run)
    with open(run / "final.json") as fh:
        final = json.load(fh)
    cert = final["certificate"]
    print(f"algorithm      : {final['algorithm']}")
    print(f"problem        : {final['problem'].get('name')}")
    print(f"iterations run : {final['iterations_run']}"
          + (" (early exit)" if final.get("stopped_early") else ""))
    print(f"objective      : {cert['primal_value']:.10g}")
    print(f"gap            : {cert['gap']:.4g}")
    print(f"lower bound    : {cert['primal_value'] - cert['gap']:.10g}")
    info = final["problem"]
    if {"grad_lipschitz", "sup_g_diff_sq"} <= info.keys():
        k = final["iterations_run"]
        print(f"2LD/K at K={k}  : {2 * info['grad_lipschitz'] * info['sup_g_diff_sq'] / k:.4g}")
    if final.get("beyond_guarantee"):
        print("note           : K exceeds twice the support size; outside the guaranteed regime")
    hist = run / "history.csv"
    if hist.exists():
        with open(hist) as fh:
            gaps = [float(r["gap"]) for r in csv.DictReader(fh)]
        if gaps:
            print(f"min gap seen   : {min(gaps):.4g}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("solve", help="run a solver from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--problem", default=None, help="override the configured problem name")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=None)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("bridge", help="transport a solution to a new marginal")
    p.add_argument("--mu0", required=True, help="final.json of a run, or a bare measure JSON")
    p.add_argument("--m1", required=True, help="target marginal JSON")
    p.add_argument("--problem", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--eps0", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bridge)

    p = sub.add_parser("quantize", help="discretize a marginal")
    p.add_argument("--dist", required=True, help="e.g. uniform:0,1 or exponential:1")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--method", choices=("sample", "grid"), default="sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_quantize)

    p = sub.add_parser("report", help="summarize a finished run")
    p.add_argument("--run", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
