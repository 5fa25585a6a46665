import dataclasses
import math

import numpy as np
import pytest

from etc_sim.analysis import (
    check_lyapunov_decrease,
    composite_lyapunov,
    convergence_report,
    estimate_lipschitz,
    trigger_stats,
)
from etc_sim.errors import EmptyLog, NeverSettles
from etc_sim.simulator import SimulationResult, TriggerEvent, simulate
from etc_sim.triggering import IdealNode


def _synthetic(t, x, events=(), disturbances=()):
    """Result with a given ``x`` trajectory and an exact observer."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float).reshape(t.size, -1)
    zeros1 = np.zeros((t.size, 1))
    return SimulationResult(
        t=t, x=x, xhat=x.copy(), ubar=zeros1, ybar=zeros1, u=zeros1, y=zeros1,
        on_grid=np.ones(t.size, dtype=bool), trigger_log=list(events), node_labels=["u1", "y1"],
        node_kinds=["actuator", "sensor"], node_dwell=[0.0, 0.0], disturbance_times=list(disturbances),
        dt=float(t[1] - t[0]), event_tol=1e-6, t_end=float(t[-1]),
    )


class TestTriggerStats:
    def test_single_transmission(self):
        ev = [TriggerEvent(0.0, 0, "actuator", (0.0,)), TriggerEvent(0.0, 0, "sensor", (0.0,))]
        stats = trigger_stats(_synthetic([0, 1], [[0.0], [0.0]], ev))
        node = stats.by_label("u1")
        assert node.count == 1 and node.post_initial == 0
        assert node.min_gap is None and node.mean_gap is None and node.max_gap is None

    def test_periodic(self, periodic_result):
        stats = trigger_stats(periodic_result)
        for node in stats.nodes:
            assert node.count == 301
            assert node.min_gap == pytest.approx(0.05) and node.max_gap == pytest.approx(0.05)

    def test_fewer_sensor_events_than_periodic(self, benchmark_result, periodic_result):
        ev, per = trigger_stats(benchmark_result), trigger_stats(periodic_result)
        for label in ("y1", "y2"):
            assert ev.by_label(label).post_initial < per.by_label(label).post_initial

    def test_empty(self):
        with pytest.raises(EmptyLog):
            trigger_stats(_synthetic([0, 1], [[0.0], [0.0]]))


class TestConvergence:
    def test_zero(self):
        rep = convergence_report(_synthetic(np.linspace(0, 1, 11), np.zeros(11)), 0.05)
        assert rep.settling_time == 0.0 and rep.tail_sup == 0.0

    def test_exponential(self):
        dt = 1e-3
        t = np.arange(0, 5 + dt / 2, dt)
        rep = convergence_report(_synthetic(t, np.exp(-t)), 0.05)
        assert rep.settling_time == pytest.approx(math.log(20), abs=dt)
        assert rep.decay_rate == pytest.approx(1.0, rel=1e-6)

    def test_diverging(self):
        t = np.linspace(0, 1, 11)
        rep = convergence_report(_synthetic(t, np.exp(t)), 0.05)
        assert rep.never_settles
        with pytest.raises(NeverSettles):
            convergence_report(_synthetic(t, np.exp(t)), 0.05, strict=True)

    def test_settling_measured_after_last_disturbance(self):
        t = np.linspace(0, 2, 201)
        x = np.where(t < 1, np.exp(-10 * t), 0.0)
        rep = convergence_report(_synthetic(t, x, disturbances=[1.0]), 0.05)
        assert rep.settling_time == pytest.approx(1.0)


class TestLyapunov:
    def test_equilibrium(self, benchmark_scenario, benchmark_lyap, benchmark_cert):
        sc = dataclasses.replace(benchmark_scenario, x0=np.zeros(4), disturbances=[], t_end=0.05)
        r = simulate(sc.with_policies(benchmark_cert.ideal_policies()))
        check = check_lyapunov_decrease(r, benchmark_lyap, benchmark_cert)
        assert check.violations == [] and check.status == "pass"

    def test_certified_run(self, ideal_report, benchmark_lyap, benchmark_cert):
        check = check_lyapunov_decrease(ideal_report.result, benchmark_lyap, benchmark_cert)
        assert check.violations == []
        assert check.checked > 100
        assert check.status == "pass"

    def test_value_is_positive_definite(self, ideal_report, benchmark_lyap, benchmark_cert):
        V = composite_lyapunov(ideal_report.result, benchmark_lyap, benchmark_cert.lambda_c)
        assert np.all(V > 0)

    def test_inflated_budget_is_not_a_pass(self, benchmark_scenario, benchmark_lyap, benchmark_cert):
        pols = [IdealNode(100 * k, tau) for k, tau in zip(benchmark_cert.kappa, benchmark_cert.tau_min)]
        sc = benchmark_scenario.with_policies(pols, dt=1e-5, event_tol=1e-8, t_end=0.05, disturbances=[])
        check = check_lyapunov_decrease(simulate(sc), benchmark_lyap, benchmark_cert, within_budget=False)
        assert check.status in ("violations", "inconclusive")

    def test_detects_growth(self, benchmark_lyap, benchmark_cert):
        # a state that grows cannot satisfy a decrease inequality with zero sampling error
        t = np.arange(0, 0.1, 1e-3)
        x = np.outer(np.exp(5 * t), [1.0, 0, 0, 0])
        r = _synthetic(t, x)
        r.xhat = 0.5 * x
        check = check_lyapunov_decrease(r, benchmark_lyap, benchmark_cert)
        assert check.status == "violations"


class TestLipschitzEstimate:
    def test_linear_map(self):
        M = np.array([[1.0, 2.0], [0.0, 3.0]])
        est = estimate_lipschitz(lambda x: M @ x, [0.0, 0.0], 1.0, 10_000)
        norm = np.linalg.norm(M, 2)
        assert 0.9 * norm <= est <= norm * (1 + 1e-12)

    def test_sine(self):
        est = estimate_lipschitz(np.sin, [0.0], math.pi, 10_000)
        assert 0.95 <= est <= 1.0

    def test_more_samples_never_lower(self):
        f = lambda x: np.tanh(3 * x)  # noqa: E731
        a = estimate_lipschitz(f, [0.0, 0.0], 2.0, 500, seed=4)
        b = estimate_lipschitz(f, [0.0, 0.0], 2.0, 2000, seed=4)
        assert b >= a

    def test_deterministic(self):
        f = lambda x: np.sin(x)  # noqa: E731
        assert estimate_lipschitz(f, [0.0] * 3, 1.0, 300, seed=9) == estimate_lipschitz(f, [0.0] * 3, 1.0, 300, seed=9)
