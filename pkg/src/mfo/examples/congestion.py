"""Minimal-time crowd motion with congestion aversion on the unit segment.

Agents start at positions in ``[0, 1]``, move forward with speed in
``[0, vmax]`` on a uniform time grid, and pay for every step spent
before the target point ``1`` plus a quadratic penalty on the local
crowd density.  Densities are measured through a smooth partition of
unity: one plateau bump per spatial cell, built from a smoothstep so
that the cell bumps sum exactly to the before-target indicator bump on
``[0, 1 - 1/smoothing]``.

Best responses are computed by dynamic programming over a per-agent
position grid aligned with the agent's start, with the one-step move
``vmax*dt`` an exact multiple of the grid step: the grid optimum is
global for the discretized decision set, and the zero-penalty optimum
is the exact maximal-speed path halting at the target.
"""

from __future__ import annotations

import math

import numpy as np

from .._kernels import congestion_dp
from ..problem import AggregateVector, MfoProblem
from ..transport import MetricSpec

_FEAS_TOL = 1e-9


def smoothstep(u):
    """C-infinity monotone step: 0 below 0, 1 above 1."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape)
    out[u >= 1.0] = 1.0
    mid = (u > 0.0) & (u < 1.0)
    um = u[mid]
    with np.errstate(over="ignore"):
        out[mid] = 1.0 / (1.0 + np.exp(1.0 / um - 1.0 / (1.0 - um)))
    return out


def rising_step(x, k):
    """Smooth 0-to-1 transition over ``(0, 1/k)``."""
    return smoothstep(k * np.asarray(x, dtype=float))


def cell_bump(x, k, dx):
    """Smoothed indicator of ``[0, dx]`` with transition width ``1/k``.

    Rises over ``(-1/k, 0)``, plateaus at 1 on ``[0, dx - 1/k]`` and
    falls over ``(dx - 1/k, dx)``; consecutive shifted copies overlap so
    that they sum to one.
    """
    x = np.asarray(x, dtype=float)
    up = rising_step(x + 1.0 / k, k)
    down = 1.0 - rising_step(x - dx + 1.0 / k, k)
    out = np.where(x < 0.0, up, down)
    return np.where(x <= -1.0 / k, 0.0, np.where((x >= 0.0) & (x <= dx - 1.0 / k), 1.0, out))


def bump_family(x, cells, k):
    """Evaluate the target bump and the cell bumps.

    Returns ``(h0, H)`` with ``h0`` the smoothed before-target indicator
    and ``H[j - 1]`` the bump of spatial cell ``j``; the cell bumps sum
    to ``h0`` on ``[0, 1 - 1/k]``.
    """
    x = np.asarray(x, dtype=float)
    dx = 1.0 / cells
    h0 = np.where(x < 1.0 - 1.0 / k, 1.0, 1.0 - rising_step(x - 1.0 + 1.0 / k, k))
    h0 = np.where(x < 0.0, 1.0, h0)
    H = np.stack([cell_bump(x - j * dx, k, dx) for j in range(cells)])
    return h0, H


class CongestionProblem(MfoProblem):
    name = "congestion"

    def __init__(self, horizon=1.0, steps=20, vmax=3.0, alpha=1.0, cells=5,
                 smoothing=20, grid_substeps=50):
        if smoothing < cells:
            raise ValueError("smoothing parameter must be at least the cell count")
        if alpha < 0 or vmax <= 0 or horizon <= 0 or steps < 1 or grid_substeps < 1:
            raise ValueError("bad congestion instance parameters")
        self.horizon = float(horizon)
        self.steps = int(steps)
        self.vmax = float(vmax)
        self.alpha = float(alpha)
        self.cells = int(cells)
        self.smoothing = int(smoothing)
        self.grid_substeps = int(grid_substeps)
        self.dt = self.horizon / self.steps
        self.dx = 1.0 / self.cells
        self.max_move = self.vmax * self.dt
        self.grid_step = self.max_move / self.grid_substeps
        self._weights = np.concatenate([[1.0], np.full(self.cells * self.steps, self.dt)])
        self._weights.setflags(write=False)
        T = self.horizon
        self.grad_lipschitz = 2.0 * self.alpha / self.dx
        self.sup_g_norm = math.sqrt(T * T + T)
        self.sup_g_diff_sq = T * T + 4.0 * T
        self.sup_grad_norm = math.sqrt(1.0 + (2.0 * self.alpha / self.dx) ** 2 * T)
        self.set_lipschitz = 2.0 * self.smoothing * math.sqrt(T * T + 4.0 * T)
        self._metric = MetricSpec("euclidean")

    @classmethod
    def from_config(cls, cfg: dict) -> "CongestionProblem":
        keys = ("horizon", "steps", "vmax", "alpha", "cells", "smoothing", "grid_substeps")
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
            vmax=self.vmax,
            alpha=self.alpha,
            cells=self.cells,
            smoothing=self.smoothing,
            grid_substeps=self.grid_substeps,
        )
        return d

    # -- model ------------------------------------------------------------

    def bumps(self, x):
        return bump_family(x, self.cells, self.smoothing)

    def g_eval(self, x, traj):
        traj = np.asarray(traj, dtype=float)
        p = traj[: self.steps]
        h0, H = self.bumps(p)
        return self.vector(np.concatenate([[self.dt * float(h0.sum())], H.ravel()]))

    def g_eval_batch(self, xs, trajs):
        trajs = np.asarray(trajs, dtype=float)
        n = trajs.shape[0]
        p = trajs[:, : self.steps].ravel()
        h0, H = self.bumps(p)
        g1 = self.dt * h0.reshape(n, self.steps).sum(axis=1)
        g2 = H.reshape(self.cells, n, self.steps).transpose(1, 0, 2).reshape(n, -1)
        return np.column_stack([g1, g2])

    def f_value(self, beta: AggregateVector) -> float:
        v = beta.values
        return float(v[0] + (self.alpha / self.dx) * np.sum(self._weights[1:] * v[1:] ** 2))

    def f_grad(self, beta: AggregateVector) -> AggregateVector:
        v = beta.values
        return self.vector(np.concatenate([[1.0], (2.0 * self.alpha / self.dx) * v[1:]]))

    def f_conj(self, lam: AggregateVector) -> float:
        v = lam.values
        if abs(v[0] - 1.0) > 1e-9:
            return math.inf
        if self.alpha == 0.0:
            return 0.0 if float(np.max(np.abs(v[1:]), initial=0.0)) <= 1e-12 else math.inf
        return float(np.sum(self._weights[1:] * v[1:] ** 2) * self.dx / (4.0 * self.alpha))

    # -- oracles ------------------------------------------------------------

    def best_response(self, lam: AggregateVector, x) -> np.ndarray:
        x0 = float(np.atleast_1d(x)[0])
        lam1 = float(lam.values[0])
        lam2 = lam.values[1:].reshape(self.cells, self.steps)
        pos_cap = 1.0 + self.max_move
        n_pos = max(1, int(math.ceil((pos_cap - x0) / self.grid_step)) + 1)
        positions = x0 + self.grid_step * np.arange(n_pos)
        h0, H = self.bumps(positions)
        cost = self.dt * (lam1 * h0[:, None] + H.T @ lam2)
        below = positions < 1.0
        _, path = congestion_dp(cost, self.grid_substeps, below, 0)
        return positions[path]

    def feasible(self, x, traj) -> bool:
        traj = np.asarray(traj, dtype=float)
        x0 = float(np.atleast_1d(x)[0])
        if traj.shape != (self.steps + 1,) or abs(traj[0] - x0) > _FEAS_TOL:
            return False
        moves = np.diff(traj)
        return bool(np.all(moves >= -_FEAS_TOL) and np.all(moves <= self.max_move + _FEAS_TOL))

    def transport_select(self, x, traj, x2) -> np.ndarray:
        # pure translation keeps every speed constraint
        shift = float(np.atleast_1d(x2)[0]) - float(np.atleast_1d(x)[0])
        return np.asarray(traj, dtype=float) + shift

    def initial_decision(self, x) -> np.ndarray:
        return np.full(self.steps + 1, float(np.atleast_1d(x)[0]))

    # -- reporting helpers ---------------------------------------------------

    def arrival_step(self, traj):
        """First time index at or past the target point, else None."""
        hit = np.flatnonzero(np.asarray(traj) >= 1.0 - 1e-12)
        return int(hit[0]) if len(hit) else None

    def max_speed_trajectory(self, x) -> np.ndarray:
        """Full-speed path halting at its first point past the target."""
        x0 = float(np.atleast_1d(x)[0])
        steps_to_target = max(0, math.ceil((1.0 - x0) / self.max_move - 1e-12))
        t = np.minimum(np.arange(self.steps + 1), steps_to_target)
        return x0 + self.grid_step * (t * self.grid_substeps)
