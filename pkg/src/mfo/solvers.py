"""Frank-Wolfe and stochastic Frank-Wolfe solvers over a fixed marginal.

The deterministic solver mixes the running measure with one
best-response measure per iteration (open-loop step ``2/(k+2)``),
growing the support by at most one atom per support point per
iteration; the aggregate is updated incrementally so the per-iteration
cost does not grow with the support.

The stochastic variant keeps exactly one decision per support point:
each iteration draws, independently per agent, Bernoulli switches from
the incumbent to the best response, simulates ``n_k`` such candidate
states, and keeps the cheapest (optionally also guarding with the
incumbent, which makes the objective non-increasing).  Randomness comes
from counter-based streams keyed on ``(seed; iteration, candidate)``,
so agent draws are independent of execution order and runs are
bit-reproducible per backend.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .measures import EmpiricalMeasure
from .problem import DualCertificate, MfoProblem, OracleError, aggregate, clamp_gap, fw_gap


def default_step(k: int) -> float:
    return 2.0 / (k + 2.0)


def fictitious_play_step(k: int) -> float:
    """Step rule 1/(k+1): the iterate becomes the running average of the
    best-response measures, i.e. fictitious play."""
    return 1.0 / (k + 1.0)


@dataclass(frozen=True)
class SolverConfig:
    """Iteration budget, step rule, simulation counts and seeding."""

    iterations: int = 100
    step_rule: object = None          # callable k -> weight in [0, 1]; default 2/(k+2)
    n_sims: object = 1                # int, sequence, or callable k -> count
    seed: int = 0
    monotone_guard: bool = True
    gap_tol: float | None = None
    store_measure: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iteration count must be at least 1")

    def omega(self, k: int) -> float:
        w = default_step(k) if self.step_rule is None else self.step_rule(k)
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"step weight {w} outside [0, 1] at iteration {k}")
        return float(w)

    def sims_at(self, k: int) -> int:
        if callable(self.n_sims):
            n = self.n_sims(k)
        elif np.isscalar(self.n_sims):
            n = self.n_sims
        else:
            n = self.n_sims[min(k, len(self.n_sims) - 1)]
        n = int(n)
        if n < 1:
            raise ValueError("simulation count must be at least 1")
        return n

    def to_json_dict(self):
        return {
            "iterations": self.iterations,
            "step_rule": "2/(k+2)" if self.step_rule is None else "custom",
            "n_sims": self.n_sims if np.isscalar(self.n_sims) or isinstance(self.n_sims, list) else "custom",
            "seed": self.seed,
            "monotone_guard": self.monotone_guard,
            "gap_tol": self.gap_tol,
        }


@dataclass(frozen=True)
class IterationRecord:
    k: int
    objective: float
    gap: float
    lambda_norm: float
    time_ms: float
    n_candidates: int | None = None


@dataclass(frozen=True)
class AgentState:
    """One decision per support point (the stochastic solver's state)."""

    decisions: np.ndarray

    def __len__(self):
        return len(self.decisions)


@dataclass
class SolveReport:
    """Per-iteration history plus the final measure and certificate."""

    algorithm: str
    records: list
    certificate: DualCertificate
    final_measure: EmpiricalMeasure | None
    seed: int
    config: dict
    n_support: int
    iterations_run: int
    stopped_early: bool = False
    beyond_guarantee: bool = False
    agent_state: AgentState | None = None
    problem_info: dict = field(default_factory=dict)

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records])

    @property
    def gaps(self):
        return np.array([r.gap for r in self.records])

    def lower_bound(self) -> float:
        """Certified lower bound on the optimal value."""
        per_iter = min((r.objective - r.gap for r in self.records), default=-np.inf)
        final = self.certificate.primal_value - self.certificate.gap
        return max(per_iter, final)

    def write_history_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "objective", "gap", "lambda_norm", "time_ms"])
            for r in self.records:
                writer.writerow([r.k, repr(r.objective), repr(r.gap),
                                 repr(r.lambda_norm), repr(r.time_ms)])

    def final_json_dict(self):
        out = {
            "schema": 1,
            "algorithm": self.algorithm,
            "seed": self.seed,
            "config": self.config,
            "problem": self.problem_info,
            "iterations_run": self.iterations_run,
            "stopped_early": self.stopped_early,
            "beyond_guarantee": self.beyond_guarantee,
            "certificate": self.certificate.to_json_dict(),
        }
        if self.final_measure is not None:
            out["measure"] = self.final_measure.to_json_dict()
        return out

    def save_final_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.final_json_dict(), fh, sort_keys=True, separators=(",", ":"))


def _check_marginal(m_N):
    if m_N.space != "X":
        raise ValueError("the prescribed marginal must live on X")


def _sweep(problem, lam, xs):
    ys = problem.best_response_batch(lam, xs)
    G = problem.g_eval_batch(xs, ys)
    u_vals = G @ (problem.hilbert_weights * lam.values)
    return ys, G, u_vals


def fw_solve(problem: MfoProblem, m_N: EmpiricalMeasure, config: SolverConfig,
             mu0: EmpiricalMeasure | None = None) -> SolveReport:
    """Frank-Wolfe over measures with the prescribed marginal.

    Unless supplied, the starting measure is the best-response measure
    at the gradient of an arbitrary feasible aggregate.  After ``K``
    iterations with the default step rule the suboptimality is at most
    ``2 * grad_lipschitz * sup_g_diff_sq / K``.
    """
    _check_marginal(m_N)
    xs, w = m_N.xs, m_N.weights
    blocks = []          # (xs, ys, raw weights); effective weight = raw * factor
    factor = 1.0

    if mu0 is None:
        y_init = np.vstack([problem.initial_decision(x) for x in xs])
        beta0 = problem.vector(w @ problem.g_eval_batch(xs, y_init))
        ys0, G0, _ = _sweep(problem, problem.f_grad(beta0), xs)
        beta = problem.vector(w @ G0)
        blocks.append((xs, ys0, w.copy()))
    else:
        beta = aggregate(problem, mu0)
        blocks.append((mu0.xs, mu0.ys, mu0.weights.copy()))

    records = []
    stopped_early = False
    iterations_run = 0
    for k in range(config.iterations):
        tic = time.perf_counter()
        lam = problem.f_grad(beta)
        try:
            ys_br, G_br, u_vals = _sweep(problem, lam, xs)
        except OracleError as exc:
            exc.partial_records = list(records)
            raise
        gap = clamp_gap(lam.dot(beta) - float(w @ u_vals))
        objective = problem.f_value(beta)
        if config.gap_tol is not None and gap <= config.gap_tol:
            records.append(IterationRecord(k, objective, gap, lam.norm(),
                                           (time.perf_counter() - tic) * 1e3))
            iterations_run = k + 1
            stopped_early = True
            break
        om = config.omega(k)
        beta = problem.vector((1.0 - om) * beta.values + om * (w @ G_br))
        if om >= 1.0:
            blocks = []
            factor = 1.0
        else:
            factor *= 1.0 - om
        if om > 0.0:
            blocks.append((xs, ys_br, om * w / factor))
        records.append(IterationRecord(k, objective, gap, lam.norm(),
                                       (time.perf_counter() - tic) * 1e3))
        iterations_run = k + 1

    if config.store_measure:
        xs_all = np.vstack([b[0] for b in blocks])
        ys_all = np.vstack([b[1] for b in blocks])
        w_all = np.concatenate([b[2] for b in blocks]) * factor
        final = EmpiricalMeasure("Z", xs=xs_all, ys=ys_all, weights=w_all, validate=False).merged()
        cert = fw_gap(problem, final)
    else:
        final = None
        lam = problem.f_grad(beta)
        _, _, u_vals = _sweep(problem, lam, xs)
        gap = clamp_gap(lam.dot(beta) - float(w @ u_vals))
        primal = problem.f_value(beta)
        cert = DualCertificate(lam=lam, primal_value=primal, dual_value=gap - primal, gap=gap)

    return SolveReport(
        algorithm="fw",
        records=records,
        certificate=cert,
        final_measure=final,
        seed=config.seed,
        config=config.to_json_dict(),
        n_support=len(m_N),
        iterations_run=iterations_run,
        stopped_early=stopped_early,
        problem_info=problem.describe(),
    )


def candidate_rng(seed: int, k: int, j: int) -> np.random.Generator:
    """Counter-based stream for candidate ``j`` of iteration ``k``."""
    bitgen = np.random.Philox(key=np.uint64(seed & (2 ** 64 - 1)), counter=[0, 0, k, j])
    return np.random.Generator(bitgen)


def candidate_objective(problem: MfoProblem, m_N: EmpiricalMeasure, state) -> float:
    """Exact objective of one decision per support point."""
    decisions = state.decisions if isinstance(state, AgentState) else np.asarray(state)
    G = problem.g_eval_batch(m_N.xs, decisions)
    return problem.f_value(problem.vector(m_N.weights @ G))


def measure_from_state(m_N: EmpiricalMeasure, state) -> EmpiricalMeasure:
    """The empirical pair measure of an agent state (support kept as-is)."""
    decisions = state.decisions if isinstance(state, AgentState) else np.asarray(state)
    return EmpiricalMeasure("Z", xs=m_N.xs, ys=np.asarray(decisions, dtype=float),
                            weights=m_N.weights, validate=False)


def sfw_solve(problem: MfoProblem, m_N: EmpiricalMeasure, config: SolverConfig) -> SolveReport:
    """Stochastic Frank-Wolfe keeping one decision per support point.

    Requires a uniform marginal.  For ``K`` up to twice the support
    size, the expected suboptimality after ``K`` iterations is at most
    ``4 * grad_lipschitz * sup_g_diff_sq / K`` whatever the simulation
    counts; runs past that horizon are flagged ``beyond_guarantee``.
    """
    _check_marginal(m_N)
    n = len(m_N)
    if float(np.max(np.abs(m_N.weights - 1.0 / n))) > 1e-12:
        raise ValueError("the stochastic solver needs uniform weights 1/N")
    xs, w = m_N.xs, m_N.weights
    wH = problem.hilbert_weights

    y_feas = np.vstack([problem.initial_decision(x) for x in xs])
    beta0 = problem.vector(w @ problem.g_eval_batch(xs, y_feas))
    y = problem.best_response_batch(problem.f_grad(beta0), xs)

    records = []
    iterations_run = 0
    stopped_early = False
    for k in range(config.iterations):
        tic = time.perf_counter()
        G = problem.g_eval_batch(xs, y)
        beta = problem.vector(w @ G)
        objective = problem.f_value(beta)
        lam = problem.f_grad(beta)
        try:
            y_br = problem.best_response_batch(lam, xs)
        except OracleError as exc:
            exc.partial_records = list(records)
            raise
        G_br = problem.g_eval_batch(xs, y_br)
        gap = clamp_gap(lam.dot(beta) - float(w @ (G_br @ (wH * lam.values))))
        if config.gap_tol is not None and gap <= config.gap_tol:
            elapsed = (time.perf_counter() - tic) * 1e3
            records.append(IterationRecord(k, objective, gap, lam.norm(), elapsed, n_candidates=0))
            iterations_run = k + 1
            stopped_early = True
            break
        n_k = config.sims_at(k)
        om = config.omega(k)
        best_val = np.inf
        best_y = None
        for j in range(n_k):
            pick = candidate_rng(config.seed, k, j).random(n) < om
            y_cand = np.where(pick[:, None], y_br, y)
            val = problem.f_value(problem.vector(w @ problem.g_eval_batch(xs, y_cand)))
            if val < best_val:
                best_val, best_y = val, y_cand
        if config.monotone_guard and objective < best_val:
            best_y = y
        y = best_y
        elapsed = (time.perf_counter() - tic) * 1e3
        records.append(IterationRecord(k, objective, gap, lam.norm(), elapsed, n_candidates=n_k))
        iterations_run = k + 1

    state = AgentState(decisions=np.asarray(y, dtype=float))
    final = measure_from_state(m_N, state)
    cert = fw_gap(problem, final)
    return SolveReport(
        algorithm="sfw",
        records=records,
        certificate=cert,
        final_measure=final if config.store_measure else None,
        seed=config.seed,
        config=config.to_json_dict(),
        n_support=n,
        iterations_run=iterations_run,
        stopped_early=stopped_early,
        beyond_guarantee=config.iterations > 2 * n,
        agent_state=state,
        problem_info=problem.describe(),
    )
