"""Competition between producers exploiting exhaustible private stocks.

Each producer owns a stock ``x`` and picks a discounted extraction
profile ``q`` with rates in ``[0, 1/2]`` and total extraction at most
``x``.  The unit price drops linearly in the producer's own rate and in
the population aggregate, so the population cost is a convex quadratic
of the aggregate and the game is a potential game: its Nash equilibria
are exactly the minimizers of the mean field objective.

Aggregation space: one scalar slot for the discounted self-interaction
term plus one slot per time step, with discounted trapezoid weights
``dt * exp(-r t)`` so the discrete inner product matches the discounted
integral exactly.

Ground metric on stocks: ``sqrt(|x - x2|)``.  The budget constraint set
moves only Hoelder-1/2 continuously in the stock under the plain
distance (near ``x = 0`` a stock increase of ``h`` admits profiles at
L2 distance of order ``sqrt(h)``), so the square-root metric is the one
under which the feasible-contribution map is genuinely Lipschitz and
the transport-selection certificates are rigorous.
"""

from __future__ import annotations

import math

import numpy as np

from .._kernels import resource_br
from ..problem import AggregateVector, MfoProblem
from ..transport import MetricSpec

_FEAS_TOL = 1e-9


class ResourceProblem(MfoProblem):
    name = "resource"

    def __init__(self, horizon=10.0, steps=50, discount=1.0, price_impact=1.0,
                 stock_cap=15.0):
        if not 0.0 < price_impact <= 1.0:
            raise ValueError("price impact must lie in (0, 1]")
        if discount < 0 or horizon <= 0 or steps < 1:
            raise ValueError("bad resource instance parameters")
        self.horizon = float(horizon)
        self.steps = int(steps)
        self.discount = float(discount)
        self.price_impact = float(price_impact)
        self.stock_cap = float(stock_cap)
        self.dt = self.horizon / self.steps
        self.times = self.dt * np.arange(self.steps)
        self.discount_factors = np.exp(-self.discount * self.times)
        self.exp_rt = np.exp(self.discount * self.times)
        self._weights = np.concatenate([[1.0], self.dt * self.discount_factors])
        self._weights.setflags(write=False)
        mass = float(np.sum(self.dt * self.discount_factors))
        self.grad_lipschitz = self.price_impact
        self.sup_g_norm = math.sqrt(mass ** 2 / 16.0 + mass / 4.0)
        self.sup_g_diff_sq = mass ** 2 / 16.0 + mass / 4.0
        self.sup_grad_norm = math.sqrt(1.0 + self.price_impact ** 2 * mass / 4.0)
        self.set_lipschitz = math.sqrt(self.stock_cap + 0.5)
        self._metric = MetricSpec("sqrt_euclidean")

    @classmethod
    def from_config(cls, cfg: dict) -> "ResourceProblem":
        keys = ("horizon", "steps", "discount", "price_impact", "stock_cap")
        return cls(**{k: cfg[k] for k in keys if k in cfg})

    @property
    def hilbert_weights(self):
        return self._weights

    @property
    def metric(self):
        return self._metric

    def describe(self):
        d = super().describe()
        d.update(
            horizon=self.horizon,
            steps=self.steps,
            discount=self.discount,
            price_impact=self.price_impact,
            stock_cap=self.stock_cap,
        )
        return d

    # -- model ------------------------------------------------------------

    def g_eval(self, x, q):
        q = np.asarray(q, dtype=float)
        self_term = float(np.sum(self.dt * self.discount_factors * (q * q - q)))
        return self.vector(np.concatenate([[self_term], q]))

    def g_eval_batch(self, xs, qs):
        qs = np.asarray(qs, dtype=float)
        w = self.dt * self.discount_factors
        self_terms = (qs * qs - qs) @ w
        return np.column_stack([self_terms, qs])

    def f_value(self, beta: AggregateVector) -> float:
        v = beta.values
        return float(v[0] + 0.5 * self.price_impact * np.sum(self._weights[1:] * v[1:] ** 2))

    def f_grad(self, beta: AggregateVector) -> AggregateVector:
        v = beta.values
        return self.vector(np.concatenate([[1.0], self.price_impact * v[1:]]))

    def f_conj(self, lam: AggregateVector) -> float:
        v = lam.values
        if abs(v[0] - 1.0) > 1e-9:
            return math.inf
        return float(np.sum(self._weights[1:] * v[1:] ** 2) / (2.0 * self.price_impact))

    # -- oracles ------------------------------------------------------------

    def best_response(self, lam: AggregateVector, x) -> np.ndarray:
        q, _ = self.best_response_with_multiplier(lam, x)
        return q

    def best_response_with_multiplier(self, lam: AggregateVector, x):
        """Best response plus the budget multiplier (for KKT checks)."""
        q, theta = self._br_batch(lam, np.array([[float(np.atleast_1d(x)[0])]]))
        return q[0], float(theta[0])

    def best_response_batch(self, lam: AggregateVector, xs) -> np.ndarray:
        return self._br_batch(lam, xs)[0]

    def _br_batch(self, lam, xs):
        lam1 = float(lam.values[0])
        if lam1 <= 0:
            raise ValueError("best response needs a positive self-interaction weight")
        top = lam1 - np.asarray(lam.values[1:], dtype=float)
        budgets = np.asarray(xs, dtype=float).reshape(-1)
        return resource_br(top, self.exp_rt, lam1, self.dt, budgets)

    def feasible(self, x, q) -> bool:
        q = np.asarray(q, dtype=float)
        x0 = float(np.atleast_1d(x)[0])
        return bool(
            np.all(q >= -_FEAS_TOL)
            and np.all(q <= 0.5 + _FEAS_TOL)
            and self.dt * float(q.sum()) <= x0 + _FEAS_TOL
        )

    def transport_select(self, x, q, x2) -> np.ndarray:
        """Budget truncation: keep the profile until the new stock runs out."""
        x0 = float(np.atleast_1d(x)[0])
        x1 = float(np.atleast_1d(x2)[0])
        q = np.asarray(q, dtype=float)
        if x1 >= x0:
            return q.copy()
        spent = self.dt * np.cumsum(q)
        before = spent - self.dt * q
        out = np.where(spent <= x1 + 1e-15, q, 0.0)
        partial = np.flatnonzero((before < x1) & (spent > x1 + 1e-15))
        if len(partial):
            t = partial[0]
            out[t] = max(x1 - before[t], 0.0) / self.dt
        return out

    def initial_decision(self, x) -> np.ndarray:
        return np.zeros(self.steps)

    # -- reporting helpers ---------------------------------------------------

    def stock_trajectory(self, x, q) -> np.ndarray:
        """Remaining stock before each step, plus the final level."""
        x0 = float(np.atleast_1d(x)[0])
        return x0 - self.dt * np.concatenate([[0.0], np.cumsum(q)])

    def aggregate_rate(self, beta: AggregateVector) -> np.ndarray:
        """Population extraction rate per time step."""
        return beta.values[1:].copy()

    def depletion_step(self, x, q, tol=1e-6):
        """First step at which the remaining stock is exhausted, else None."""
        stocks = self.stock_trajectory(x, q)
        hit = np.flatnonzero(stocks <= tol)
        return int(hit[0]) if len(hit) else None
