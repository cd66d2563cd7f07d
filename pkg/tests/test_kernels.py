import numpy as np
import pytest

from mfo import _kernels


def random_br_inputs(rng, n_agents=20, steps=40):
    top = rng.uniform(-0.5, 1.0, steps)
    rate = 1.0
    dt = 10.0 / steps
    ert = np.exp(rate * dt * np.arange(steps))
    budgets = rng.uniform(0.0, 4.0, n_agents)
    return top, ert, 1.0, dt, budgets


class TestResourceKernel:
    def test_numpy_output_is_feasible(self):
        rng = np.random.default_rng(0)
        top, ert, lam1, dt, budgets = random_br_inputs(rng)
        q, theta = _kernels.resource_br_numpy(top, ert, lam1, dt, budgets)
        assert np.all(q >= 0.0) and np.all(q <= 0.5)
        assert np.all(theta >= 0.0)
        assert np.all(dt * q.sum(axis=1) <= budgets + 1e-12)

    @pytest.mark.skipif(_kernels.resource_br_numba is None, reason="numba unavailable")
    def test_backends_agree(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            top, ert, lam1, dt, budgets = random_br_inputs(rng)
            q_np, th_np = _kernels.resource_br_numpy(top, ert, lam1, dt, budgets)
            q_nb, th_nb = _kernels.resource_br_numba(top, ert, lam1, dt, budgets)
            np.testing.assert_allclose(q_nb, q_np, atol=1e-10)
            np.testing.assert_allclose(th_nb, th_np, atol=1e-10)


class TestCongestionKernel:
    def test_numpy_path_is_optimal_on_tiny_case(self):
        rng = np.random.default_rng(2)
        n_pos, steps, qmax = 7, 4, 2
        cost = rng.random((n_pos, steps))
        below = np.ones(n_pos, dtype=bool)
        value, path = _kernels.congestion_dp_numpy(cost, qmax, below, 0)
        import itertools

        best = np.inf
        for moves in itertools.product(range(qmax + 1), repeat=steps):
            pos = np.concatenate([[0], np.cumsum(moves)])
            if pos[-1] >= n_pos:
                continue
            best = min(best, sum(cost[pos[t], t] for t in range(steps)))
        assert value == pytest.approx(best, abs=1e-12)
        assert path[0] == 0
        assert np.all(np.diff(path) >= 0) and np.all(np.diff(path) <= qmax)

    @pytest.mark.skipif(_kernels.congestion_dp_numba is None, reason="numba unavailable")
    def test_backends_agree_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            n_pos = int(rng.integers(5, 60))
            steps = int(rng.integers(2, 15))
            qmax = int(rng.integers(1, 8))
            cost = rng.random((n_pos, steps))
            below = rng.random(n_pos) < 0.8
            s0 = int(rng.integers(0, n_pos))
            v_np, p_np = _kernels.congestion_dp_numpy(cost, qmax, below, s0)
            v_nb, p_nb = _kernels.congestion_dp_numba(cost, qmax, below, s0)
            assert v_nb == pytest.approx(v_np, abs=1e-12)
            np.testing.assert_array_equal(p_nb, p_np)

    def test_tie_break_prefers_progress_below_target(self):
        # flat costs: walk at full speed while below, stay once past
        cost = np.zeros((9, 3))
        below = np.array([True] * 4 + [False] * 5)
        _, path = _kernels.congestion_dp_numpy(cost, 2, below, 0)
        assert path.tolist() == [0, 2, 4, 4]


class TestBackendSelection:
    def test_backend_reported(self):
        assert _kernels.BACKEND in ("numba", "numpy")

    def test_numpy_env_flag(self):
        import subprocess, sys

        out = subprocess.run(
            [sys.executable, "-c", "import mfo; print(mfo.BACKEND)"],
            env={"PATH": "/usr/bin:/bin", "MFO_BACKEND": "numpy"},
            capture_output=True,
            text=True,
            check=True,
        )
        assert out.stdout.strip() == "numpy"
