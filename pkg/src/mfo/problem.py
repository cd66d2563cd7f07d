"""Problem contract and first-order/duality analysis operations.

A mean field optimization problem minimizes ``f(aggregate(mu))`` over
probability measures ``mu`` on feasible parameter/decision pairs with a
prescribed parameter marginal.  The aggregate lives in a finite
weighted-inner-product space (diagonal weights, e.g. discounted
trapezoid weights for time-discretized models), so that discrete inner
products reproduce the continuous ones bit for bit.

Concrete games subclass :class:`MfoProblem` and supply the contribution
map ``g``, the cost ``f`` with its gradient and (optionally) Fenchel
conjugate, a best-response oracle, a transport-selection oracle, and
analytic constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import EmpiricalMeasure, first_marginal, mix


@dataclass(frozen=True)
class AggregateVector:
    """Element of the aggregation space: values with diagonal weights.

    The inner product is ``<a, b> = sum_i weights[i] * a[i] * b[i]``.
    Weights are positive and shared by every vector of one problem
    instance.
    """

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.values.shape != self.weights.shape or self.values.ndim != 1:
            raise ValueError("values and weights must be matching vectors")
        if np.any(self.weights <= 0):
            raise ValueError("inner-product weights must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("aggregate entries must be finite")

    def dot(self, other: "AggregateVector") -> float:
        return float(np.sum(self.weights * self.values * other.values))

    def norm(self) -> float:
        return math.sqrt(max(self.dot(self), 0.0))

    def with_values(self, values) -> "AggregateVector":
        return AggregateVector(np.asarray(values, dtype=float), self.weights)

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: float):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def tolist(self):
        return self.values.tolist()


class OracleError(RuntimeError):
    """A problem oracle violated its contract."""


class MfoProblem:
    """Contract bundling the model data and oracles of one game.

    Subclasses must define:

    * ``hilbert_weights`` -- diagonal weights of the aggregation space;
    * ``g_eval(x, y)`` -- contribution vector of one pair;
    * ``f_value(beta)`` / ``f_grad(beta)`` -- cost and its gradient
      (gradient taken w.r.t. the weighted inner product);
    * ``best_response(lam, x)`` -- a minimizer of ``<lam, g(x, .)>``
      over the feasible decisions at ``x``;
    * ``feasible(x, y)`` -- feasibility predicate ``y in Z_x``;
    * ``transport_select(x, y, x2)`` -- a decision at ``x2`` whose
      contribution moves by at most ``set_lipschitz * d(x, x2)``;
    * ``initial_decision(x)`` -- any feasible decision (solver warm
      start);
    * constants ``grad_lipschitz``, ``sup_g_norm``, ``sup_g_diff_sq``,
      ``sup_grad_norm``, ``set_lipschitz`` and a ``metric``.

    ``f_conj`` may raise :class:`NotImplementedError` when the conjugate
    is unavailable; dual operations then refuse to run.  All oracles
    must be pure: concurrent calls for distinct ``x`` share only
    read-only data.
    """

    name = "abstract"

    # analytic constants; subclasses assign instance attributes
    grad_lipschitz: float
    sup_g_norm: float
    sup_g_diff_sq: float
    sup_grad_norm: float
    set_lipschitz: float

    @property
    def hilbert_weights(self) -> np.ndarray:
        raise NotImplementedError

    def vector(self, values) -> AggregateVector:
        return AggregateVector(values, self.hilbert_weights)

    def zero_vector(self) -> AggregateVector:
        return self.vector(np.zeros_like(self.hilbert_weights))

    def g_eval(self, x, y) -> AggregateVector:
        raise NotImplementedError

    def g_eval_batch(self, xs, ys) -> np.ndarray:
        """Contribution matrix, one row per pair; override for speed."""
        return np.vstack([self.g_eval(x, y).values for x, y in zip(xs, ys)])

    def f_value(self, beta: AggregateVector) -> float:
        raise NotImplementedError

    def f_grad(self, beta: AggregateVector) -> AggregateVector:
        raise NotImplementedError

    def f_conj(self, lam: AggregateVector) -> float:
        raise NotImplementedError("conjugate not available for this problem")

    def best_response(self, lam: AggregateVector, x) -> np.ndarray:
        raise NotImplementedError

    def best_response_batch(self, lam: AggregateVector, xs) -> np.ndarray:
        out = []
        for i, x in enumerate(xs):
            try:
                out.append(self.best_response(lam, x))
            except Exception as exc:
                raise OracleError(f"best response failed for agent {i} (x={x}): {exc}") from exc
        return np.vstack(out)

    def feasible(self, x, y) -> bool:
        raise NotImplementedError

    def transport_select(self, x, y, x2) -> np.ndarray:
        raise NotImplementedError

    def initial_decision(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def metric(self):
        raise NotImplementedError

    def describe(self) -> dict:
        return {
            "name": self.name,
            "grad_lipschitz": self.grad_lipschitz,
            "sup_g_norm": self.sup_g_norm,
            "sup_g_diff_sq": self.sup_g_diff_sq,
            "sup_grad_norm": self.sup_grad_norm,
            "set_lipschitz": self.set_lipschitz,
        }


#: certificates more negative than this indicate a broken oracle, not roundoff
GAP_NEGATIVITY_TOL = 1e-9


def clamp_gap(raw: float) -> float:
    """Zero out float-cancellation negatives; reject genuine ones."""
    if raw < -GAP_NEGATIVITY_TOL:
        raise RuntimeError(f"negative optimality gap {raw:.3e}: an oracle violated its contract")
    return max(raw, 0.0)


@dataclass(frozen=True)
class DualCertificate:
    """First-order certificate at a candidate measure.

    ``gap = <lam, aggregate> - integral of the best-response value``
    bounds the suboptimality of the measure from above; it vanishes
    exactly at solutions.  ``dual_value`` is the dual objective at
    ``lam`` (so ``gap = primal_value + dual_value`` and
    ``-dual_value`` is a certified lower bound on the optimal value).
    """

    lam: AggregateVector
    primal_value: float
    dual_value: float
    gap: float

    def to_json_dict(self):
        return {
            "lambda": self.lam.tolist(),
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
        }


def aggregate(problem: MfoProblem, mu: EmpiricalMeasure, validate: bool = True) -> AggregateVector:
    """Weight-sum of contributions ``sum_i w_i g(x_i, y_i)``.

    Atoms are checked against the feasibility predicate unless
    ``validate=False`` (hot paths that construct feasible atoms by
    design skip the check).
    """
    if mu.space != "Z":
        raise ValueError("aggregate needs a measure on pairs")
    if validate:
        for i in range(len(mu)):
            if not problem.feasible(mu.xs[i], mu.ys[i]):
                raise OracleError(f"infeasible atom {i}: x={mu.xs[i]}")
    G = problem.g_eval_batch(mu.xs, mu.ys)
    return problem.vector(mu.weights @ G)


def u_lambda(problem: MfoProblem, lam: AggregateVector, x):
    """Best-response value and minimizer of ``<lam, g(x, .)>`` at ``x``."""
    y = problem.best_response(lam, x)
    value = lam.dot(problem.g_eval(x, y))
    return value, y


def _support_values(problem, lam, m):
    ys = problem.best_response_batch(lam, m.xs)
    G = problem.g_eval_batch(m.xs, ys)
    values = G @ (lam.weights * lam.values)
    return ys, values


def linearized_solve(problem: MfoProblem, lam: AggregateVector, m: EmpiricalMeasure) -> EmpiricalMeasure:
    """Minimize the linearized cost: one best response per support point."""
    if m.space != "X":
        raise ValueError("the prescribed marginal lives on X")
    ys, _ = _support_values(problem, lam, m)
    return EmpiricalMeasure("Z", xs=m.xs, ys=ys, weights=m.weights, validate=False).merged()


def fw_gap(problem: MfoProblem, mu: EmpiricalMeasure) -> DualCertificate:
    """First-order optimality certificate of ``mu``.

    With ``lam = f_grad(aggregate(mu))`` the gap equals
    ``<lam, aggregate(mu)> - sum_i w_i u_lam(x_i)``; by convexity it
    dominates ``f(aggregate(mu)) - optimal value``, and by Fenchel's
    relation it also equals ``primal + dual objective at lam`` without
    requiring the conjugate.
    """
    beta = aggregate(problem, mu)
    lam = problem.f_grad(beta)
    m = first_marginal(mu)
    _, values = _support_values(problem, lam, m)
    linear_best = float(m.weights @ values)
    gap = clamp_gap(lam.dot(beta) - linear_best)
    primal = problem.f_value(beta)
    return DualCertificate(lam=lam, primal_value=primal, dual_value=gap - primal, gap=gap)


def dual_value(problem: MfoProblem, lam: AggregateVector, m: EmpiricalMeasure) -> float:
    """Dual objective ``f_conj(lam) - sum_i w_i u_lam(x_i)``.

    Returns ``+inf`` when ``lam`` falls outside the conjugate's domain.
    Minimizing this over the domain and flipping the sign gives the
    optimal value of the primal problem (strong duality).
    """
    conj = problem.f_conj(lam)
    if not math.isfinite(conj):
        return math.inf
    _, values = _support_values(problem, lam, m)
    return conj - float(m.weights @ values)


def value_directional_derivative(problem: MfoProblem, m0, m1, lam_star_m0: AggregateVector) -> float:
    """Directional derivative of the optimal value along ``m1 - m0``.

    ``lam_star_m0`` must be the dual solution at ``m0`` (the gradient of
    ``f`` at a converged aggregate); the derivative is the integral of
    the best-response value against the signed measure ``m1 - m0``.
    """
    _, v1 = _support_values(problem, lam_star_m0, m1)
    _, v0 = _support_values(problem, lam_star_m0, m0)
    return float(m1.weights @ v1) - float(m0.weights @ v0)


def marginal_segment(m0: EmpiricalMeasure, m1: EmpiricalMeasure, t: float) -> EmpiricalMeasure:
    """The mixture ``m0 + t (m1 - m0)`` as an empirical measure."""
    return mix(m0, m1, t)
