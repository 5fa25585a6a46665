import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from etc_sim.scenario import load_scenario  # noqa: E402
from etc_sim.simulator import run_ideal_validation, simulate, simulate_periodic_baseline  # noqa: E402
from etc_sim.triggering import LyapunovPair, build_certificate  # noqa: E402

# fine grid for the ideal-policy audits: triggers fire every few steps, so
# exclusion windows of 2 dt must leave samples behind
IDEAL_DT = 1e-7
IDEAL_EVENT_TOL = 1e-9
IDEAL_T_END = 0.002


@pytest.fixture(scope="session")
def benchmark_scenario():
    return load_scenario("flexible-link-paper")


@pytest.fixture(scope="session")
def benchmark_result(benchmark_scenario):
    return simulate(benchmark_scenario)


@pytest.fixture(scope="session")
def periodic_result(benchmark_scenario):
    return simulate_periodic_baseline(benchmark_scenario, 0.05)


@pytest.fixture(scope="session")
def benchmark_lyap(benchmark_scenario):
    sc = benchmark_scenario
    return LyapunovPair.from_gains(sc.plant, sc.controller(), sc.observer())


@pytest.fixture(scope="session")
def benchmark_cert(benchmark_scenario, benchmark_lyap):
    sc = benchmark_scenario
    return build_certificate(sc.plant, sc.controller(), sc.observer(), benchmark_lyap)


@pytest.fixture(scope="session")
def ideal_report(benchmark_scenario, benchmark_cert):
    sc = benchmark_scenario.with_policies(
        benchmark_scenario.policies, dt=IDEAL_DT, event_tol=IDEAL_EVENT_TOL, t_end=IDEAL_T_END, disturbances=[])
    return run_ideal_validation(sc, benchmark_cert)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(acc.RESULTS):
        terminalreporter.write_line(acc.RESULTS[number])
