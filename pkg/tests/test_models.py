import math

import numpy as np
import pytest

import oracles
from etc_sim.errors import RhoViolated
from etc_sim.models import (
    FLEX_A,
    FLEX_K_PRINTED,
    FLEX_L,
    FlexibleLinkBenchmark,
    LinearController,
    LipschitzAffinePlant,
    LuenbergerObserver,
    NodePartition,
    Nonlinearity,
    PhiTerm,
    builtin_plant,
    controller_eval,
    flexible_link_plant,
    observer_dynamics,
    phi_lipschitz_check,
    plant_dynamics,
)


class TestPartition:
    def test_from_widths(self):
        p = NodePartition.from_widths([2, 1])
        assert p.widths == [2, 1] and len(p) == 2 and p.total_dim == 3
        assert [a.tolist() for a in p.split(np.arange(3.0))] == [[0, 1], [2]]

    def test_rejects_bad_width(self):
        with pytest.raises(ValueError):
            NodePartition.from_widths([0, 1])


class TestPlant:
    def test_benchmark_matrices_as_published(self):
        np.testing.assert_array_equal(FLEX_A, oracles.A)
        np.testing.assert_array_equal(FLEX_K_PRINTED, oracles.K_PRINTED)
        np.testing.assert_array_equal(FLEX_L, oracles.L)

    def test_equilibrium(self):
        assert np.all(plant_dynamics(flexible_link_plant(), np.zeros(4), np.zeros(1)) == 0)

    def test_benchmark_point(self):
        # A x + (0, 0, 0, 3.3 sin(pi/2)) with x = (0, 0, pi/2, 0), by hand
        h = math.pi / 2
        expected = [0.0, 48.6 * h, 0.0, -19.5 * h + 3.3]
        np.testing.assert_allclose(plant_dynamics(flexible_link_plant(), [0, 0, h, 0], [0.0]), expected, atol=1e-12)
        np.testing.assert_allclose(expected, [0, 76.3407, 0, -27.3305], atol=1e-3)

    def test_pure_integrator(self):
        pl = LipschitzAffinePlant(np.zeros((2, 2)), np.eye(2), np.eye(2), Nonlinearity(2), 0.0,
                                  NodePartition.singletons(2), NodePartition.singletons(2))
        np.testing.assert_array_equal(plant_dynamics(pl, [5.0, -1.0], [2.0, 3.0]), [2.0, 3.0])

    def test_phi_must_vanish_at_origin(self):
        with pytest.raises(ValueError):
            PhiTerm(0, 1.0, "cos", 0)

    def test_registry(self):
        assert builtin_plant("flexible-link").n == 4
        with pytest.raises(KeyError):
            builtin_plant("nope")


class TestObserver:
    def test_zero_innovation(self):
        pl = LipschitzAffinePlant(np.zeros((2, 2)), np.eye(2), np.eye(2), Nonlinearity(2), 0.0,
                                  NodePartition.singletons(2), NodePartition.singletons(2))
        obs = LuenbergerObserver(np.eye(2), np.eye(2), NodePartition.singletons(2))
        xh = np.array([0.3, -0.7])
        assert np.all(observer_dynamics(pl, obs, xh, np.zeros(2), pl.C @ xh) == 0)

    def test_first_column_of_L(self):
        b = FlexibleLinkBenchmark()
        out = observer_dynamics(b.plant(), b.observer(), np.zeros(4), np.zeros(1), [1.0, 0.0])
        np.testing.assert_allclose(out, [9.3334, -48.7804, -0.0524, 19.4066], atol=1e-9)

    def test_zero(self):
        b = FlexibleLinkBenchmark()
        assert np.all(observer_dynamics(b.plant(), b.observer(), np.zeros(4), np.zeros(1), np.zeros(2)) == 0)


class TestController:
    def test_zero_gain(self):
        ctrl = LinearController(np.zeros((1, 4)), NodePartition.singletons(1))
        assert controller_eval(ctrl, np.ones(4))[0] == 0

    def test_printed_gain(self):
        ctrl = LinearController(FLEX_K_PRINTED, NodePartition.singletons(1))
        assert controller_eval(ctrl, [1, 0, 0, 0])[0] == pytest.approx(7.8428)
        assert controller_eval(ctrl, [1, 1, 1, 1])[0] == pytest.approx(7.8428 + 1.1212 - 4.3666 + 1.1243, abs=1e-9)

    def test_effective_gain_is_negated_printed_row(self):
        np.testing.assert_array_equal(FlexibleLinkBenchmark().K, -FLEX_K_PRINTED)


class TestLipschitzCheck:
    def test_zero_phi(self):
        pl = builtin_plant("scalar-linear")
        assert phi_lipschitz_check(pl, 200) == 0

    def test_benchmark(self):
        est = phi_lipschitz_check(flexible_link_plant(), 4000, domain_radius=1.0)
        assert 3.2 <= est <= 3.3

    def test_violation(self):
        pl = LipschitzAffinePlant(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)),
                                  Nonlinearity(1, (PhiTerm(0, 2.0, "lin", 0),)), 1.0,
                                  NodePartition.singletons(1), NodePartition.singletons(1))
        with pytest.raises(RhoViolated):
            phi_lipschitz_check(pl, 200)
