import dataclasses
import math

import numpy as np
import pytest

from etc_sim.errors import BudgetExceeded, NonFinite, ValidationError, ZenoSuspect
from etc_sim.models import LipschitzAffinePlant, NodePartition, Nonlinearity, builtin_plant, flexible_link_plant
from etc_sim.simulator import DisturbanceEvent, Scenario, run_ideal_validation, simulate, simulate_periodic_baseline
from etc_sim.triggering import NodeRelativeActuator, NodeRelativeSensor, Periodic


def _grid_values(result, times):
    g = result.t[result.on_grid]
    idx = np.searchsorted(g, np.asarray(times) - 1e-12)
    assert np.allclose(g[idx], times, atol=1e-12)
    return result.x[result.on_grid][idx]


class TestEquilibrium:
    def test_stays_at_zero(self, benchmark_scenario):
        sc = dataclasses.replace(benchmark_scenario, x0=np.zeros(4), disturbances=[], t_end=2.0)
        r = simulate(sc)
        assert np.all(r.x == 0) and np.all(r.xhat == 0)
        assert [len(r.event_times(k)) for k in range(3)] == [1, 1, 1]

    def test_periodic_fires_anyway(self, benchmark_scenario):
        sc = dataclasses.replace(benchmark_scenario, x0=np.zeros(4), disturbances=[])
        r = simulate_periodic_baseline(sc, 0.05)
        assert [len(r.event_times(k)) for k in range(3)] == [301] * 3


class TestScalarClosedForm:
    def test_exponential_decay(self):
        plant = builtin_plant("scalar-linear")
        pols = [NodeRelativeActuator(0.2, 1.0, 0.01), NodeRelativeSensor(0.2, 1.0, 0.01)]
        sc = Scenario(plant, np.zeros((1, 1)), np.zeros((1, 1)), pols, [1.0], [1.0], t_end=1.0)
        r = simulate(sc)
        assert r.x[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-6)
        assert r.t[-1] == pytest.approx(1.0)


class TestPeriodic:
    def test_counts(self, periodic_result):
        assert [len(periodic_result.event_times(k)) for k in range(3)] == [301] * 3
        gaps = np.diff(periodic_result.event_times(0))
        np.testing.assert_allclose(gaps, 0.05, atol=1e-9)

    def test_short_horizon(self, benchmark_scenario):
        r = simulate_periodic_baseline(dataclasses.replace(benchmark_scenario, t_end=1.0, disturbances=[]), 0.5)
        assert [len(r.event_times(k)) - 1 for k in range(3)] == [2, 2, 2]

    def test_integrator_converges_under_periodic_sampling(self, benchmark_scenario):
        sc = dataclasses.replace(benchmark_scenario, t_end=3.0)
        coarse = simulate_periodic_baseline(sc, 0.05)
        fine = simulate_periodic_baseline(dataclasses.replace(sc, dt=1e-4), 0.05)
        times = np.arange(0, 3.0001, 0.25)
        np.testing.assert_allclose(_grid_values(coarse, times), _grid_values(fine, times), atol=1e-8)


class TestBenchmark:
    def test_decays(self, benchmark_result):
        assert benchmark_result.norm_x[-1] <= 0.05
        assert benchmark_result.norm_z[-1] <= 0.05

    def test_disturbance_applied(self, benchmark_result):
        r = benchmark_result
        at = np.nonzero(np.isclose(r.t, 2.0, rtol=0, atol=1e-12))[0]
        assert at.size == 1  # the row at t = 2 holds the post-jump state
        before = at[0] - 1
        assert r.t[at[0]] - r.t[before] <= r.dt
        # one step of flow is small next to the unit jump
        np.testing.assert_allclose(r.x[at[0]] - r.x[before], np.ones(4), atol=0.1)
        assert 2.0 in r.disturbance_times

    def test_fine_step_reference(self, benchmark_scenario):
        # event times are localized to event_tol, so switching sequences agree
        # only over the first few hundred milliseconds; both runs must settle
        sc = dataclasses.replace(benchmark_scenario, t_end=15.0)
        coarse = simulate(dataclasses.replace(sc, t_end=4.0))
        fine = simulate(dataclasses.replace(sc, dt=1e-4))
        times = np.arange(0, 0.5001, 0.05)
        np.testing.assert_allclose(_grid_values(coarse, times), _grid_values(fine, times), atol=1e-3)
        assert fine.norm_x[-1] <= 0.05 and fine.norm_z[-1] <= 0.05

    def test_time_strictly_increasing(self, benchmark_result):
        assert np.all(np.diff(benchmark_result.t) > 0)

    def test_row_count(self, benchmark_result):
        r = benchmark_result
        n_grid = math.floor(r.t_end / r.dt + 1e-9) + 1
        assert r.on_grid.sum() == n_grid
        off = {e.t for e in r.trigger_log} - set(r.t[r.on_grid])
        assert len(r.t) == n_grid + len(off)

    def test_dwell(self, benchmark_result):
        for k, dwell in enumerate(benchmark_result.node_dwell):
            gaps = np.diff(benchmark_result.event_times(k))
            assert gaps.min() >= dwell - benchmark_result.event_tol

    def test_held_values_are_last_transmission(self, benchmark_result):
        r = benchmark_result
        for e in r.trigger_log:
            if e.kind != "actuator":
                continue
            rows = np.nonzero(r.t == e.t)[0]
            assert r.ubar[rows[-1], e.node] == pytest.approx(e.value[0])


class TestIdealValidation:
    def test_equilibrium(self, benchmark_scenario, benchmark_cert):
        sc = dataclasses.replace(benchmark_scenario, x0=np.zeros(4), disturbances=[], t_end=0.01)
        assert run_ideal_validation(sc, benchmark_cert).violations == []

    def test_benchmark(self, ideal_report):
        assert ideal_report.ok
        assert ideal_report.samples_checked > 1000
        assert ideal_report.worst_ratio <= ideal_report.sigma_prime

    def test_refuses_inflated_budget(self, benchmark_scenario, benchmark_cert):
        bad = dataclasses.replace(benchmark_cert, kappa=tuple(2 * k for k in benchmark_cert.kappa))
        with pytest.raises(BudgetExceeded):
            run_ideal_validation(benchmark_scenario, bad)


class TestErrors:
    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            Scenario(flexible_link_plant(), np.zeros(3), np.zeros((4, 2)), [Periodic(0.1)] * 3,
                     np.zeros(4), np.zeros(4), 1.0)

    def test_policy_kind_mismatch(self):
        with pytest.raises(ValidationError):
            Scenario(flexible_link_plant(), np.zeros(4), np.zeros((4, 2)),
                     [NodeRelativeSensor(0.2, 1, 0.01)] + [Periodic(0.1)] * 2, np.zeros(4), np.zeros(4), 1.0)

    def test_disturbance_outside_horizon(self, benchmark_scenario):
        with pytest.raises(ValidationError):
            dataclasses.replace(benchmark_scenario, disturbances=[DisturbanceEvent(20.0, np.ones(4))])

    def test_divergence(self):
        plant = LipschitzAffinePlant(np.array([[60.0]]), np.array([[1.0]]), np.array([[1.0]]), Nonlinearity(1), 0.0,
                                     NodePartition.singletons(1), NodePartition.singletons(1))
        sc = Scenario(plant, [[0.0]], [[0.0]], [Periodic(1.0)] * 2, [1.0], [1.0], t_end=20.0)
        with pytest.raises(NonFinite):
            simulate(sc)

    def test_zeno_guard(self, benchmark_scenario):
        sc = dataclasses.replace(benchmark_scenario, max_events_per_node=5)
        with pytest.raises(ZenoSuspect):
            simulate(sc)
