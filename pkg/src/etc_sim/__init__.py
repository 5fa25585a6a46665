"""Event-triggered observer-based control of Lipschitz nonlinear systems."""
from .analysis import (
    check_lyapunov_decrease,
    composite_lyapunov,
    convergence_report,
    estimate_lipschitz,
    trigger_stats,
)
from .models import (
    FlexibleLinkBenchmark,
    LinearController,
    LipschitzAffinePlant,
    LuenbergerObserver,
    NodePartition,
    Nonlinearity,
    PhiTerm,
    builtin_plant,
    flexible_link_plant,
)
from .numcore import eigenvalues, is_hurwitz, locate_event, rk4_step, solve_lyapunov, spectral_norm
from .scenario import BUILTIN_SCENARIOS, load_scenario, parse_scenario, serialize_scenario
from .simulator import (
    DisturbanceEvent,
    Scenario,
    SimulationResult,
    run_ideal_validation,
    simulate,
    simulate_periodic_baseline,
)
from .triggering import IssCertificate, LyapunovPair, build_certificate

__version__ = "0.1.0"
