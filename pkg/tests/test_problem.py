import math

import numpy as np
import pytest

from mfo import (
    EmpiricalMeasure,
    MetricSpec,
    SolverConfig,
    aggregate,
    dual_value,
    fw_gap,
    fw_solve,
    linearized_solve,
    ot_solve,
    u_lambda,
    value_directional_derivative,
)
from mfo.problem import MfoProblem
from mfo.examples import TrafficProblem
from mfo.examples.traffic import Edge

from conftest import uniform_marginal


class QuadToy(MfoProblem):
    """Finite decision set, f = half squared norm; conjugate known exactly."""

    name = "quad_toy"

    def __init__(self, options):
        self.options = np.asarray(options, dtype=float)
        dim = self.options.shape[1]
        self._w = np.ones(dim)
        self.grad_lipschitz = 1.0
        norms = np.linalg.norm(self.options, axis=1)
        self.sup_g_norm = float(norms.max())
        self.sup_g_diff_sq = float((2 * norms.max()) ** 2)
        self.sup_grad_norm = float(norms.max())
        self.set_lipschitz = 0.0

    @property
    def hilbert_weights(self):
        return self._w

    @property
    def metric(self):
        return MetricSpec("euclidean")

    def g_eval(self, x, y):
        return self.vector(np.asarray(y, dtype=float))

    def f_value(self, beta):
        return 0.5 * beta.dot(beta)

    def f_grad(self, beta):
        return self.vector(beta.values.copy())

    def f_conj(self, lam):
        return 0.5 * lam.dot(lam)

    def best_response(self, lam, x):
        costs = self.options @ lam.values
        return self.options[int(np.argmin(costs))].copy()

    def feasible(self, x, y):
        return bool(np.any(np.all(np.abs(self.options - y) <= 1e-9, axis=1)))

    def initial_decision(self, x):
        return self.options[0].copy()


def twin_pigou():
    """Two independent two-edge routing choices; value solvable by grid search."""
    edges = [
        Edge(0, 1, "affine", (1.0, 0.0)),
        Edge(0, 1, "affine", (0.0, 1.0)),
        Edge(2, 3, "affine", (2.0, 0.0)),
        Edge(2, 3, "affine", (0.0, 0.5)),
    ]
    prob = TrafficProblem(4, edges, [(0, 1), (2, 3)])
    m = EmpiricalMeasure.from_atoms("X", [([0, 1], 0.5), ([2, 3], 0.5)])
    return prob, m


def twin_pigou_value(prob, grid=2001):
    th1 = np.linspace(0.0, 1.0, grid)[:, None]
    th2 = np.linspace(0.0, 1.0, grid)[None, :]
    q0, q1 = 0.5 * th1, 0.5 * (1.0 - th1)
    q2, q3 = 0.5 * th2, 0.5 * (1.0 - th2)
    f = 0.5 * q0 ** 2 + q1 + q2 ** 2 + 0.5 * q3
    return float(f.min())


class TestAggregate:
    def test_dirac(self, resource_problem):
        q = np.full(resource_problem.steps, 0.25)
        mu = EmpiricalMeasure.from_atoms("Z", [([5.0], q, 1.0)])
        np.testing.assert_allclose(
            aggregate(resource_problem, mu).values,
            resource_problem.g_eval([5.0], q).values,
            atol=1e-15,
        )

    def test_linearity_midpoint(self, resource_problem):
        rng = np.random.default_rng(0)
        q1, q2 = rng.uniform(0, 0.5, size=(2, resource_problem.steps))
        mu = EmpiricalMeasure.from_atoms("Z", [([9.0], q1, 0.5), ([8.0], q2, 0.5)])
        mid = 0.5 * (resource_problem.g_eval([9.0], q1).values + resource_problem.g_eval([8.0], q2).values)
        np.testing.assert_allclose(aggregate(resource_problem, mu).values, mid, atol=1e-15)

    def test_resource_half_extraction_first_coordinate(self, resource_problem):
        # q identically 1/2 with ample stock: first coordinate is sum of
        # discounted weights times (1/4 - 1/2)
        q = np.full(resource_problem.steps, 0.5)
        mu = EmpiricalMeasure.from_atoms("Z", [([resource_problem.horizon], q, 1.0)])
        expected = float(np.sum(resource_problem.dt * resource_problem.discount_factors * (0.25 - 0.5)))
        assert aggregate(resource_problem, mu).values[0] == pytest.approx(expected, abs=1e-15)


class TestFeasibilityChecks:
    def test_aggregate_rejects_infeasible_atoms(self, resource_problem):
        from mfo import OracleError, validate_feasible

        # over-budget control: spends the whole horizon at rate 1/2 on a tiny stock
        bad = EmpiricalMeasure.from_atoms(
            "Z", [([0.1], np.full(resource_problem.steps, 0.5), 1.0)]
        )
        with pytest.raises(OracleError, match="infeasible atom 0"):
            aggregate(resource_problem, bad)
        with pytest.raises(ValueError, match="infeasible"):
            validate_feasible(bad, resource_problem)
        good = EmpiricalMeasure.from_atoms(
            "Z", [([10.0], np.full(resource_problem.steps, 0.5), 1.0)]
        )
        validate_feasible(good, resource_problem)
        aggregate(resource_problem, good)


class TestULambda:
    def test_zero_dual_gives_zero_value(self, pigou_problem):
        lam = pigou_problem.zero_vector()
        value, argmin = u_lambda(pigou_problem, lam, [0, 1])
        assert value == 0.0
        assert pigou_problem.feasible([0, 1], argmin)

    def test_traffic_shortest_path(self, pigou_problem):
        lam = pigou_problem.vector([0.7, 1.0])
        value, argmin = u_lambda(pigou_problem, lam, [0, 1])
        assert value == pytest.approx(0.7)
        np.testing.assert_allclose(argmin, [1.0, 0.0])

    def test_resource_closed_form(self, resource_problem):
        # with no aggregate pressure and ample stock the pointwise optimum
        # is q = 1/2 with value -1/4 of the discounted mass
        lam = resource_problem.vector(np.concatenate([[1.0], np.zeros(resource_problem.steps)]))
        x = [resource_problem.horizon]
        value, argmin = u_lambda(resource_problem, lam, x)
        np.testing.assert_allclose(argmin, 0.5, atol=1e-12)
        mass = float(np.sum(resource_problem.dt * resource_problem.discount_factors))
        assert value == pytest.approx(-0.25 * mass, abs=1e-12)

    def test_lipschitz_estimate(self, resource_problem):
        # |u(lam1, x1) - u(lam2, x2)| <= L_g |lam1| d(x1,x2) + M |lam1 - lam2|
        rng = np.random.default_rng(1)
        prob = resource_problem
        for _ in range(50):
            lam1 = prob.vector(np.concatenate([[1.0], rng.uniform(0, 0.5, prob.steps)]))
            lam2 = prob.vector(np.concatenate([[1.0], rng.uniform(0, 0.5, prob.steps)]))
            x1, x2 = rng.uniform(0, prob.stock_cap, size=2)
            v1, _ = u_lambda(prob, lam1, [x1])
            v2, _ = u_lambda(prob, lam2, [x2])
            bound = (
                prob.set_lipschitz * lam1.norm() * prob.metric.dist([x1], [x2])
                + prob.sup_g_norm * (lam1 - lam2).norm()
            )
            assert abs(v1 - v2) <= bound + 1e-7


class TestLinearizedSolve:
    def test_single_atom(self, resource_problem):
        lam = resource_problem.vector(np.concatenate([[1.0], np.zeros(resource_problem.steps)]))
        m = uniform_marginal([2.0])
        mu = linearized_solve(resource_problem, lam, m)
        assert len(mu) == 1
        np.testing.assert_allclose(mu.ys[0], resource_problem.best_response(lam, [2.0]))

    def test_pigou_strict_preference(self, pigou_problem):
        mu = linearized_solve(pigou_problem, pigou_problem.vector([0.3, 1.0]), uniform_marginal_od())
        assert len(mu) == 1
        np.testing.assert_allclose(mu.ys[0], [1.0, 0.0])

    def test_cost_matches_u_integral(self, resource_problem):
        rng = np.random.default_rng(2)
        lam = resource_problem.vector(np.concatenate([[1.0], rng.uniform(0, 0.5, resource_problem.steps)]))
        m = EmpiricalMeasure("X", xs=rng.uniform(0, 5, size=(6, 1)), weights=np.full(6, 1 / 6))
        mu = linearized_solve(resource_problem, lam, m)
        cost = lam.dot(aggregate(resource_problem, mu))
        expected = sum(w * u_lambda(resource_problem, lam, x)[0] for x, w in m.atoms())
        assert cost == pytest.approx(expected, abs=1e-9)


def uniform_marginal_od():
    return EmpiricalMeasure.from_atoms("X", [([0, 1], 1.0)])


class TestFwGap:
    def test_zero_at_equilibrium_support(self, pigou_problem):
        mu = EmpiricalMeasure.from_atoms("Z", [([0, 1], [1.0, 0.0], 1.0)])
        cert = fw_gap(pigou_problem, mu)
        assert cert.gap == pytest.approx(0.0, abs=1e-12)
        # support containment: the atom is a best response at the certificate dual
        y_cost = float(mu.ys[0] @ cert.lam.values)
        u_val, _ = u_lambda(pigou_problem, cert.lam, [0, 1])
        assert y_cost <= u_val + 1e-9

    def test_pigou_all_mass_on_constant_edge(self, pigou_problem):
        mu = EmpiricalMeasure.from_atoms("Z", [([0, 1], [0.0, 1.0], 1.0)])
        cert = fw_gap(pigou_problem, mu)
        assert cert.gap == pytest.approx(1.0, abs=1e-12)

    def test_nonnegative_on_random_measures(self, resource_problem):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = 5
            xs = rng.uniform(0.1, 5.0, size=(n, 1))
            ys = rng.uniform(0, 0.5, size=(n, resource_problem.steps))
            # repair feasibility by truncating to the budget
            ys = np.vstack(
                [resource_problem.transport_select([10.0], q, x) for q, x in zip(ys, xs)]
            )
            mu = EmpiricalMeasure("Z", xs=xs, ys=ys, weights=np.full(n, 1 / n))
            assert fw_gap(resource_problem, mu).gap >= 0.0

    def test_gap_bounds_suboptimality_brute_force(self):
        prob, m = twin_pigou()
        val = twin_pigou_value(prob)
        rng = np.random.default_rng(4)
        for _ in range(10):
            th1, th2 = rng.random(2)
            mu = EmpiricalMeasure.from_atoms(
                "Z",
                [
                    ([0, 1], [1.0, 0.0, 0.0, 0.0], 0.5 * th1),
                    ([0, 1], [0.0, 1.0, 0.0, 0.0], 0.5 * (1 - th1)),
                    ([2, 3], [0.0, 0.0, 1.0, 0.0], 0.5 * th2),
                    ([2, 3], [0.0, 0.0, 0.0, 1.0], 0.5 * (1 - th2)),
                ],
            )
            cert = fw_gap(prob, mu)
            assert cert.primal_value - val <= cert.gap + 1e-6


class TestDerivativeChecks:
    def test_f_grad_finite_differences(self, resource_problem, congestion_problem):
        rng = np.random.default_rng(5)
        for prob in (resource_problem, congestion_problem):
            w = prob.hilbert_weights
            beta = prob.vector(rng.uniform(-0.3, 0.3, size=len(w)))
            grad = prob.f_grad(beta).values
            h = 1e-6
            for i in rng.integers(0, len(w), size=8):
                e = np.zeros(len(w))
                e[i] = h
                fd = (prob.f_value(prob.vector(beta.values + e)) -
                      prob.f_value(prob.vector(beta.values - e))) / (2 * h)
                # finite differences give the euclidean partial: weight times
                # the weighted-inner-product gradient
                assert fd == pytest.approx(w[i] * grad[i], rel=1e-6, abs=1e-9)

    def test_fenchel_young(self, resource_problem):
        rng = np.random.default_rng(6)
        prob = resource_problem
        for _ in range(30):
            beta = prob.vector(rng.uniform(-0.3, 0.3, size=len(prob.hilbert_weights)))
            lam = prob.vector(np.concatenate([[1.0], rng.uniform(-0.5, 0.5, prob.steps)]))
            assert prob.f_value(beta) + prob.f_conj(lam) >= lam.dot(beta) - 1e-12
            grad = prob.f_grad(beta)
            equality = prob.f_value(beta) + prob.f_conj(grad) - grad.dot(beta)
            assert abs(equality) <= 1e-8


class TestDualValue:
    def test_quadratic_toy_at_zero(self):
        toy = QuadToy(options=[[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
        m = uniform_marginal([0.0])
        lam = toy.vector([0.0, 0.0])
        assert dual_value(toy, lam, m) == pytest.approx(0.0, abs=1e-15)

    def test_resource_conjugate_formula(self, resource_problem):
        prob = resource_problem
        rng = np.random.default_rng(7)
        lam2 = rng.uniform(-0.5, 0.5, prob.steps)
        lam = prob.vector(np.concatenate([[1.0], lam2]))
        # Legendre transform computed independently: stationary point of
        # <lam, beta> - f(beta) over beta
        norm2 = float(np.sum(prob.hilbert_weights[1:] * lam2 ** 2))
        assert prob.f_conj(lam) == pytest.approx(norm2 / (2.0 * prob.price_impact), abs=1e-12)
        bad = prob.vector(np.concatenate([[0.9], lam2]))
        assert prob.f_conj(bad) == math.inf
        assert dual_value(prob, bad, uniform_marginal([1.0])) == math.inf

    def test_weak_duality(self, resource_problem, exp_marginal_50):
        prob = resource_problem
        rng = np.random.default_rng(8)
        m = exp_marginal_50
        lam = prob.vector(np.concatenate([[1.0], rng.uniform(0, 0.5, prob.steps)]))
        lower = -dual_value(prob, lam, m)
        mu = linearized_solve(prob, prob.vector(np.concatenate([[1.0], np.zeros(prob.steps)])), m)
        assert lower <= prob.f_value(aggregate(prob, mu)) + 1e-12

    def test_strong_duality_at_convergence(self, resource_problem, exp_marginal_50):
        report = fw_solve(resource_problem, exp_marginal_50,
                          SolverConfig(iterations=400, gap_tol=1e-9))
        cert = report.certificate
        dm = dual_value(resource_problem, cert.lam, exp_marginal_50)
        assert abs(cert.primal_value + dm) <= 2 * max(cert.gap, 1e-12)

    def test_strong_convexity_midpoint(self, resource_problem):
        # dual objective is strongly convex with modulus 1/L
        prob = resource_problem
        m = uniform_marginal([0.4, 1.3, 2.7])
        rng = np.random.default_rng(9)
        for _ in range(10):
            l1 = prob.vector(np.concatenate([[1.0], rng.uniform(-0.4, 0.6, prob.steps)]))
            l2 = prob.vector(np.concatenate([[1.0], rng.uniform(-0.4, 0.6, prob.steps)]))
            mid = prob.vector(0.5 * (l1.values + l2.values))
            d_mid = dual_value(prob, mid, m)
            d_avg = 0.5 * dual_value(prob, l1, m) + 0.5 * dual_value(prob, l2, m)
            gap_term = (l1 - l2).dot(l1 - l2) / (8.0 * prob.grad_lipschitz)
            assert d_mid <= d_avg - gap_term + 1e-10


class TestDirectionalDerivative:
    def _lambda_star(self, prob, m):
        report = fw_solve(prob, m, SolverConfig(iterations=3000, gap_tol=1e-11,
                                                store_measure=False))
        return report.certificate, report

    def test_same_marginal_gives_zero(self, small_resource_problem):
        m = uniform_marginal([0.5, 2.0])
        cert, _ = self._lambda_star(small_resource_problem, m)
        assert value_directional_derivative(small_resource_problem, m, m, cert.lam) == pytest.approx(0.0, abs=1e-12)

    def test_finite_difference_consistency(self, small_resource_problem):
        prob = small_resource_problem
        m0 = EmpiricalMeasure.from_atoms("X", [([0.5], 0.7), ([2.0], 0.3)])
        m1 = EmpiricalMeasure.from_atoms("X", [([0.5], 0.3), ([2.0], 0.7)])
        cert0, _ = self._lambda_star(prob, m0)
        deriv = value_directional_derivative(prob, m0, m1, cert0.lam)
        t = 1e-2
        from mfo.problem import marginal_segment

        mt = marginal_segment(m0, m1, t)
        cert_t, _ = self._lambda_star(prob, mt)
        fd = (cert_t.primal_value - cert0.primal_value) / t
        ld = prob.grad_lipschitz * prob.sup_g_diff_sq
        tol = ld * t / 2.0 + 4.0 * (cert0.gap + cert_t.gap) / t
        assert abs(fd - deriv) <= tol

    def test_sign_more_stock_lowers_value(self, small_resource_problem):
        prob = small_resource_problem
        m0 = EmpiricalMeasure.from_atoms("X", [([0.5], 0.6), ([3.0], 0.4)])
        m1 = EmpiricalMeasure.from_atoms("X", [([0.5], 0.2), ([3.0], 0.8)])
        cert0, _ = self._lambda_star(prob, m0)
        assert value_directional_derivative(prob, m0, m1, cert0.lam) <= 1e-10
        cert1, _ = self._lambda_star(prob, m1)
        assert cert1.primal_value - cert1.gap <= cert0.primal_value + 1e-9


class TestDualStability:
    def test_dual_solutions_hoelder_in_marginal(self, small_resource_problem):
        prob = small_resource_problem
        rng = np.random.default_rng(10)
        marginals = [
            uniform_marginal(np.clip(rng.exponential(1.0, size=8), 0, prob.stock_cap))
            for _ in range(3)
        ]
        certs = [
            fw_solve(prob, m, SolverConfig(iterations=3000, gap_tol=1e-11,
                                           store_measure=False)).certificate
            for m in marginals
        ]
        c_star = max(c.lam.norm() for c in certs)
        for i in range(3):
            for j in range(i + 1, 3):
                d = ot_solve(marginals[i], marginals[j], prob.metric).cost
                lhs = (certs[i].lam - certs[j].lam).dot(certs[i].lam - certs[j].lam)
                rhs = 2.0 * c_star * prob.set_lipschitz * prob.grad_lipschitz * d
                assert lhs <= rhs + 1e-6
