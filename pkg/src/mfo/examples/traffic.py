"""Static traffic assignment on a directed network (Wardrop equilibria).

Agents are origin-destination pairs; decisions are admissible paths,
represented by their edge-indicator vectors so the contribution map is
the identity on indicators.  The population cost sums one convex edge
potential per edge (the primitive of its latency), making the gradient
the vector of edge latencies at the current flows: minimizers are
exactly the states where every used path of an origin-destination pair
is a cheapest admissible path.

Path sets are enumerated up front (simple paths up to a hop bound) and
kept in lexicographic edge-id order, so best responses are exact
argmins over an explicit finite set and ties break deterministically.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..problem import AggregateVector, MfoProblem
from ..transport import MetricSpec


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    phi_kind: str          # "affine" or "bpr"
    coeffs: tuple          # affine: (a, b) -> a q + b; bpr: (t0, c, p) -> t0 (1 + c q^p)

    def latency(self, q):
        if self.phi_kind == "affine":
            a, b = self.coeffs
            return a * np.maximum(q, 0.0) + b
        t0, c, p = self.coeffs
        return t0 * (1.0 + c * np.maximum(q, 0.0) ** p)

    def potential(self, q):
        # primitive of the latency, extended constant-latency below zero
        if self.phi_kind == "affine":
            a, b = self.coeffs
            qp = np.maximum(q, 0.0)
            return 0.5 * a * qp ** 2 + b * q
        t0, c, p = self.coeffs
        qp = np.maximum(q, 0.0)
        return t0 * (q + c * qp ** (p + 1) / (p + 1))

    def latency_slope_bound(self):
        if self.phi_kind == "affine":
            return abs(self.coeffs[0])
        t0, c, p = self.coeffs
        return abs(t0 * c * p)


def _enumerate_paths(n_nodes, edges, origin, dest, hop_bound):
    """All simple paths as edge-id tuples, lexicographic by edge ids."""
    out_edges = [[] for _ in range(n_nodes)]
    for e, edge in enumerate(edges):
        out_edges[edge.tail].append(e)
    for lst in out_edges:
        lst.sort()
    paths = []

    def walk(node, visited, prefix):
        if node == dest:
            paths.append(tuple(prefix))
            return
        if len(prefix) >= hop_bound:
            return
        for e in out_edges[node]:
            nxt = edges[e].head
            if nxt in visited:
                continue
            walk(nxt, visited | {nxt}, prefix + [e])

    walk(origin, {origin}, [])
    paths.sort()
    return paths


def _hop_distances(n_nodes, edges):
    # undirected breadth-first hop counts between all node pairs
    adj = [set() for _ in range(n_nodes)]
    for e in edges:
        adj[e.tail].add(e.head)
        adj[e.head].add(e.tail)
    dist = np.full((n_nodes, n_nodes), np.inf)
    for s in range(n_nodes):
        dist[s, s] = 0.0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if not np.isfinite(dist[s, v]):
                    dist[s, v] = dist[s, u] + 1.0
                    queue.append(v)
    return dist


class TrafficProblem(MfoProblem):
    name = "traffic"

    def __init__(self, n_nodes, edges, od_pairs, hop_bound=None):
        self.n_nodes = int(n_nodes)
        self.edges = list(edges)
        self.od_pairs = [tuple(int(v) for v in od) for od in od_pairs]
        self.hop_bound = int(hop_bound) if hop_bound else self.n_nodes - 1
        n_e = len(self.edges)
        probe = np.linspace(0.0, 1.0, 17)
        for e, edge in enumerate(self.edges):
            lat = np.atleast_1d(edge.latency(probe))
            if np.any(lat < 0) or np.any(np.diff(lat) < -1e-12):
                raise ValueError(f"edge {e}: latency must be nonnegative and non-decreasing on [0, 1]")
        self.paths: dict[tuple, list] = {}
        self.indicators: dict[tuple, np.ndarray] = {}
        max_len = 1
        for od in self.od_pairs:
            paths = _enumerate_paths(self.n_nodes, self.edges, od[0], od[1], self.hop_bound)
            if not paths:
                raise ValueError(f"origin-destination pair {od} is disconnected")
            ind = np.zeros((len(paths), n_e))
            for i, p in enumerate(paths):
                ind[i, list(p)] = 1.0
            self.paths[od] = paths
            self.indicators[od] = ind
            max_len = max(max_len, max(len(p) for p in paths))
        self._weights = np.ones(n_e)
        self._weights.setflags(write=False)
        self.grad_lipschitz = max(e.latency_slope_bound() for e in self.edges)
        self.sup_g_norm = math.sqrt(max_len)
        self.sup_g_diff_sq = 2.0 * max_len
        self.sup_grad_norm = math.sqrt(sum(float(e.latency(1.0)) ** 2 for e in self.edges))
        self.set_lipschitz = math.sqrt(2.0 * max_len)
        self._metric = MetricSpec("graph_hop", node_distances=_hop_distances(self.n_nodes, self.edges))

    @classmethod
    def from_config(cls, cfg: dict) -> "TrafficProblem":
        network = cfg.get("network", "pigou")
        if network == "pigou":
            built = pigou_network()
        elif network == "grid10":
            built = grid_network()
        elif isinstance(network, dict):
            built = load_network(network["edges_csv"], network["od_csv"])
        else:
            raise ValueError(f"unknown traffic network {network!r}")
        n_nodes, edges, od_pairs = built
        return cls(n_nodes, edges, od_pairs, hop_bound=cfg.get("hop_bound"))

    @property
    def hilbert_weights(self):
        return self._weights

    @property
    def metric(self):
        return self._metric

    def describe(self):
        d = super().describe()
        d.update(n_nodes=self.n_nodes, n_edges=len(self.edges), od_pairs=self.od_pairs)
        return d

    # -- model ------------------------------------------------------------

    def _od_of(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return (int(round(x[0])), int(round(x[1])))

    def g_eval(self, x, y):
        return self.vector(np.asarray(y, dtype=float))

    def g_eval_batch(self, xs, ys):
        return np.asarray(ys, dtype=float)

    def f_value(self, beta: AggregateVector) -> float:
        return float(sum(e.potential(q) for e, q in zip(self.edges, beta.values)))

    def f_grad(self, beta: AggregateVector) -> AggregateVector:
        return self.vector([float(e.latency(q)) for e, q in zip(self.edges, beta.values)])

    # f_conj left unavailable: edge potentials are only defined
    # piecewise and the dual operations are exercised on the games with
    # quadratic costs.

    # -- oracles ------------------------------------------------------------

    def best_response(self, lam: AggregateVector, x) -> np.ndarray:
        od = self._od_of(x)
        costs = self.indicators[od] @ lam.values
        return self.indicators[od][int(np.argmin(costs))].copy()

    def feasible(self, x, y) -> bool:
        od = self._od_of(x)
        y = np.asarray(y, dtype=float)
        return bool(np.any(np.all(np.abs(self.indicators[od] - y) <= 1e-9, axis=1)))

    def transport_select(self, x, y, x2) -> np.ndarray:
        od, od2 = self._od_of(x), self._od_of(x2)
        if od == od2:
            return np.asarray(y, dtype=float).copy()
        return self.indicators[od2][0].copy()

    def initial_decision(self, x) -> np.ndarray:
        return self.indicators[self._od_of(x)][0].copy()

    # -- reporting helpers ---------------------------------------------------

    def edge_flows(self, beta: AggregateVector) -> np.ndarray:
        return beta.values.copy()

    def path_costs(self, lam: AggregateVector, od) -> np.ndarray:
        return self.indicators[tuple(od)] @ lam.values

    def wardrop_residual(self, mu, used_mass=1e-9) -> float:
        """Worst excess of a used path's cost over the cheapest admissible one."""
        from ..problem import aggregate

        lam = self.f_grad(aggregate(self, mu))
        worst = 0.0
        for od in self.od_pairs:
            costs = self.path_costs(lam, od)
            best = float(np.min(costs))
            for x, y, w in mu.atoms():
                if self._od_of(x) != od or w <= used_mass:
                    continue
                worst = max(worst, float(y @ lam.values) - best)
        return worst


# -- network builders ----------------------------------------------------


def pigou_network():
    """Two parallel edges: latencies ``q`` and ``1``."""
    edges = [Edge(0, 1, "affine", (1.0, 0.0)), Edge(0, 1, "affine", (0.0, 1.0))]
    return 2, edges, [(0, 1)]


def grid_network():
    """A 2x4 directed grid (10 edges) with mixed affine latencies."""
    # nodes 0..3 top row, 4..7 bottom row; rightward and downward edges
    specs = [
        (0, 1, (1.0, 0.5)),
        (1, 2, (2.0, 0.3)),
        (2, 3, (1.0, 0.4)),
        (4, 5, (1.5, 0.2)),
        (5, 6, (1.0, 0.6)),
        (6, 7, (0.5, 0.5)),
        (0, 4, (2.0, 0.1)),
        (1, 5, (1.0, 0.2)),
        (2, 6, (1.5, 0.3)),
        (3, 7, (1.0, 0.1)),
    ]
    edges = [Edge(u, v, "affine", c) for u, v, c in specs]
    return 8, edges, [(0, 7), (1, 7), (0, 6)]


def load_network(edges_csv, od_csv):
    """Edge-list and origin-destination CSV files.

    Edge rows: ``from,to,phi_kind,coeff...``; OD rows: ``origin,dest``.
    """
    edges = []
    n_nodes = 0
    with open(edges_csv) as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "from":
                continue
            u, v, kind = int(row[0]), int(row[1]), row[2]
            coeffs = tuple(float(c) for c in row[3:])
            edges.append(Edge(u, v, kind, coeffs))
            n_nodes = max(n_nodes, u + 1, v + 1)
    od_pairs = []
    with open(od_csv) as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#") or row[0] == "origin":
                continue
            od_pairs.append((int(row[0]), int(row[1])))
            n_nodes = max(n_nodes, od_pairs[-1][0] + 1, od_pairs[-1][1] + 1)
    return n_nodes, edges, od_pairs
