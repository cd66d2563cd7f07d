import numpy as np
import pytest

from mfo import EmpiricalMeasure, SolverConfig, fw_solve
from mfo.examples import TrafficProblem, grid_network, load_network, pigou_network
from mfo.examples.traffic import Edge


def five_node_network():
    specs = [
        (0, 1, (1.0, 0.2)),
        (0, 2, (0.5, 0.4)),
        (1, 2, (0.0, 0.1)),
        (1, 3, (2.0, 0.3)),
        (2, 3, (1.0, 0.2)),
        (2, 4, (0.5, 0.6)),
        (3, 4, (1.5, 0.1)),
    ]
    edges = [Edge(u, v, "affine", c) for u, v, c in specs]
    return TrafficProblem(5, edges, [(0, 4), (0, 3)])


def exhaustive_best_cost(prob, lam_values, od):
    # walk each enumerated path and sum edge costs directly
    best = np.inf
    for path in prob.paths[od]:
        best = min(best, sum(lam_values[e] for e in path))
    return best


class TestBestResponse:
    def test_zero_costs_pick_lexicographic_first(self, pigou_problem):
        lam = pigou_problem.zero_vector()
        y = pigou_problem.best_response(lam, [0, 1])
        np.testing.assert_allclose(y, pigou_problem.indicators[(0, 1)][0])

    def test_pigou_direct_comparison(self, pigou_problem):
        y = pigou_problem.best_response(pigou_problem.vector([0.7, 1.0]), [0, 1])
        np.testing.assert_allclose(y, [1.0, 0.0])

    def test_matches_exhaustive_enumeration(self):
        prob = five_node_network()
        rng = np.random.default_rng(0)
        for _ in range(50):
            lam_values = rng.uniform(0.0, 2.0, len(prob.edges))
            lam = prob.vector(lam_values)
            for od in prob.od_pairs:
                y = prob.best_response(lam, od)
                assert float(y @ lam_values) == pytest.approx(
                    exhaustive_best_cost(prob, lam_values, od), abs=1e-12
                )

    def test_disconnected_od_rejected(self):
        edges = [Edge(0, 1, "affine", (1.0, 0.0))]
        with pytest.raises(ValueError, match="disconnected"):
            TrafficProblem(3, edges, [(0, 2)])

    def test_decreasing_latency_rejected(self):
        edges = [Edge(0, 1, "affine", (-1.0, 2.0))]
        with pytest.raises(ValueError, match="non-decreasing"):
            TrafficProblem(2, edges, [(0, 1)])


class TestPotentialGradient:
    def test_affine_at_zero_flow(self):
        prob = five_node_network()
        lam = prob.f_grad(prob.zero_vector())
        np.testing.assert_allclose(lam.values, [e.coeffs[1] for e in prob.edges])

    def test_pigou_at_full_flow(self, pigou_problem):
        lam = pigou_problem.f_grad(pigou_problem.vector([1.0, 0.0]))
        np.testing.assert_allclose(lam.values, [1.0, 1.0])

    def test_finite_difference_match(self):
        prob = five_node_network()
        rng = np.random.default_rng(1)
        q = rng.uniform(0.05, 0.95, len(prob.edges))
        beta = prob.vector(q)
        grad = prob.f_grad(beta).values
        h = 1e-6
        for i in range(len(q)):
            e = np.zeros(len(q))
            e[i] = h
            fd = (prob.f_value(prob.vector(q + e)) - prob.f_value(prob.vector(q - e))) / (2 * h)
            assert fd == pytest.approx(grad[i], abs=1e-7)

    def test_bpr_latency(self):
        edge = Edge(0, 1, "bpr", (2.0, 0.15, 4))
        assert edge.latency(0.0) == pytest.approx(2.0)
        assert edge.latency(1.0) == pytest.approx(2.3)
        h = 1e-6
        fd = (edge.potential(0.5 + h) - edge.potential(0.5 - h)) / (2 * h)
        assert fd == pytest.approx(edge.latency(0.5), abs=1e-7)


class TestWardrop:
    def test_pigou_used_paths_equalize(self, pigou_problem):
        m = EmpiricalMeasure.from_atoms("X", [([0, 1], 1.0)])
        report = fw_solve(pigou_problem, m, SolverConfig(iterations=800))
        assert pigou_problem.wardrop_residual(report.final_measure) <= 1e-4

    def test_grid_network_shape(self):
        n_nodes, edges, od_pairs = grid_network()
        assert len(edges) == 10
        prob = TrafficProblem(n_nodes, edges, od_pairs)
        assert all(len(prob.paths[od]) >= 2 for od in od_pairs)


class TestSelectionAndConstants:
    def test_same_od_keeps_path(self, pigou_problem):
        y = pigou_problem.indicators[(0, 1)][1]
        np.testing.assert_array_equal(pigou_problem.transport_select([0, 1], y, [0, 1]), y)

    def test_cross_od_selection_within_bound(self):
        prob = five_node_network()
        for od in prob.od_pairs:
            for od2 in prob.od_pairs:
                for y in prob.indicators[od]:
                    y2 = prob.transport_select(od, y, od2)
                    assert prob.feasible(od2, y2)
                    shift = (prob.g_eval(od2, y2) - prob.g_eval(od, y)).norm()
                    assert shift <= prob.set_lipschitz * prob.metric.dist(od, od2) + 1e-12

    def test_constants_dominate_samples(self):
        prob = five_node_network()
        rng = np.random.default_rng(2)
        inds = np.vstack([prob.indicators[od] for od in prob.od_pairs])
        norms = np.linalg.norm(inds, axis=1)
        assert norms.max() <= prob.sup_g_norm + 1e-12
        for _ in range(200):
            i, j = rng.integers(0, len(inds), size=2)
            assert np.sum((inds[i] - inds[j]) ** 2) <= prob.sup_g_diff_sq + 1e-12
        for _ in range(200):
            q = rng.random(len(prob.edges))
            assert prob.f_grad(prob.vector(q)).norm() <= prob.sup_grad_norm + 1e-12
            q2 = rng.random(len(prob.edges))
            lhs = (prob.f_grad(prob.vector(q)) - prob.f_grad(prob.vector(q2))).norm()
            assert lhs <= prob.grad_lipschitz * np.linalg.norm(q - q2) + 1e-12


class TestNetworkFiles:
    def test_csv_roundtrip(self, tmp_path):
        edges_csv = tmp_path / "edges.csv"
        od_csv = tmp_path / "od.csv"
        edges_csv.write_text(
            "from,to,phi_kind,a,b\n0,1,affine,1.0,0.0\n0,1,affine,0.0,1.0\n"
        )
        od_csv.write_text("origin,dest\n0,1\n")
        n_nodes, edges, od_pairs = load_network(edges_csv, od_csv)
        prob = TrafficProblem(n_nodes, edges, od_pairs)
        ref = TrafficProblem(*pigou_network())
        assert prob.od_pairs == ref.od_pairs
        assert len(prob.edges) == 2
        y = prob.best_response(prob.vector([0.3, 1.0]), [0, 1])
        np.testing.assert_allclose(y, [1.0, 0.0])
