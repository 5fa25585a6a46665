"""Hybrid closed-loop simulation with per-node zero-order holds.

Between transmissions the plant and the observer flow under the held input
``ubar`` and held output ``ybar``. Trigger predicates are checked at the end of
every integrator step; a crossing is then localized by bisection, the state is
re-integrated to the crossing, and the node's register is refreshed.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import BudgetExceeded, NonFinite, NonFiniteDerivative, ValidationError, ZenoSuspect
from .models import LinearController, LipschitzAffinePlant, LuenbergerObserver
from .numcore import DEFAULT_DT, DEFAULT_EVENT_TOL, as_vec, locate_event, rk4_step
from .triggering import (
    DWELL_EPS,
    IdealNode,
    IssCertificate,
    NodeRegister,
    NodeRelativeActuator,
    NodeRelativeSensor,
    Periodic,
    TriggerPolicy,
    trigger_margin,
    validate_certificate,
)

log = logging.getLogger(__name__)

DEFAULT_MAX_EVENTS = 10**6


@dataclass(frozen=True, eq=False)
class DisturbanceEvent:
    """Instantaneous jump added to the plant state ``x``."""

    time: float
    state_jump: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "state_jump", as_vec(self.state_jump))


@dataclass(eq=False)
class Scenario:
    plant: LipschitzAffinePlant
    K: np.ndarray
    L: np.ndarray
    policies: list[TriggerPolicy]
    x0: np.ndarray
    xhat0: np.ndarray
    t_end: float
    dt: float = DEFAULT_DT
    event_tol: float = DEFAULT_EVENT_TOL
    disturbances: list[DisturbanceEvent] = field(default_factory=list)
    name: str = "scenario"
    model_name: str | None = None
    auto_triggers: list[bool] | None = None
    budget: Literal["ignore", "enforce"] = "ignore"
    outputs: dict[str, str] = field(default_factory=dict)
    max_events_per_node: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        n, m, p = self.plant.n, self.plant.m, self.plant.p
        self.K = np.asarray(self.K, dtype=float).reshape(m, -1)
        self.L = np.asarray(self.L, dtype=float).reshape(n, -1)
        if self.K.shape != (m, n):
            raise ValidationError(f"K must be {m}x{n}, got {self.K.shape[0]}x{self.K.shape[1]}")
        if self.L.shape != (n, p):
            raise ValidationError(f"L must be {n}x{p}, got {self.L.shape[0]}x{self.L.shape[1]}")
        self.x0 = as_vec(self.x0)
        self.xhat0 = as_vec(self.xhat0)
        if self.x0.size != n or self.xhat0.size != n:
            raise ValidationError(f"initial states must have {n} entries")
        if not (self.dt > 0 and self.t_end > 0 and self.event_tol > 0):
            raise ValidationError("dt, t_end and event_tol must be positive")
        q, r = len(self.plant.input_partition), len(self.plant.output_partition)
        self.policies = list(self.policies)
        if len(self.policies) != q + r:
            raise ValidationError(f"expected {q + r} trigger policies (actuators then sensors), got {len(self.policies)}")
        for i, pol in enumerate(self.policies):
            if i < q and isinstance(pol, NodeRelativeSensor):
                raise ValidationError(f"actuator node {i + 1} cannot use a sensor policy")
            if i >= q and isinstance(pol, NodeRelativeActuator):
                raise ValidationError(f"sensor node {i - q + 1} cannot use an actuator policy")
        for d in self.disturbances:
            if not 0 < d.time < self.t_end:
                raise ValidationError(f"disturbance time {d.time} outside (0, t_end)")
            if d.state_jump.size != n:
                raise ValidationError(f"disturbance jump must have {n} entries")
        self.disturbances = sorted(self.disturbances, key=lambda d: d.time)
        if self.auto_triggers is not None and len(self.auto_triggers) != q + r:
            raise ValidationError("auto_triggers must flag every node")

    @property
    def actuator_count(self) -> int:
        return len(self.plant.input_partition)

    def controller(self) -> LinearController:
        return LinearController(self.K, self.plant.input_partition)

    def observer(self) -> LuenbergerObserver:
        return LuenbergerObserver(self.L, self.plant.C, self.plant.output_partition)

    def with_policies(self, policies: Sequence[TriggerPolicy], **changes) -> "Scenario":
        return dataclasses.replace(self, policies=list(policies), auto_triggers=None, **changes)


@dataclass(frozen=True)
class TriggerEvent:
    t: float
    node: int
    kind: Literal["actuator", "sensor"]
    value: tuple[float, ...]

    @property
    def label(self) -> str:
        return f"{'u' if self.kind == 'actuator' else 'y'}{self.node + 1}"


@dataclass(eq=False)
class SimulationResult:
    """Dense log of one run: one row per integrator step plus one per off-grid event."""

    t: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    ubar: np.ndarray
    ybar: np.ndarray
    u: np.ndarray
    y: np.ndarray
    on_grid: np.ndarray
    trigger_log: list[TriggerEvent]
    node_labels: list[str]
    node_kinds: list[str]
    node_dwell: list[float]
    disturbance_times: list[float]
    dt: float
    event_tol: float
    t_end: float

    @property
    def z(self) -> np.ndarray:
        return self.x - self.xhat

    @property
    def norm_x(self) -> np.ndarray:
        return np.linalg.norm(self.x, axis=1)

    @property
    def norm_z(self) -> np.ndarray:
        return np.linalg.norm(self.z, axis=1)

    @property
    def norm_X(self) -> np.ndarray:
        return np.sqrt(np.sum(self.xhat**2, axis=1) + np.sum(self.z**2, axis=1))

    @property
    def E(self) -> np.ndarray:
        return np.hstack([self.u - self.ubar, self.y - self.ybar])

    def events_for(self, node_index: int) -> list[TriggerEvent]:
        label = self.node_labels[node_index]
        return [e for e in self.trigger_log if e.label == label]

    def event_times(self, node_index: int) -> np.ndarray:
        return np.array([e.t for e in self.events_for(node_index)])

    @property
    def summary(self):
        from .analysis import trigger_stats

        return trigger_stats(self)


class _Run:
    """Mutable state of one simulation; owned by a single ``simulate`` call."""

    def __init__(self, sc: Scenario):
        plant = sc.plant
        self.sc = sc
        self.n, self.m, self.p = plant.n, plant.m, plant.p
        self.A, self.B, self.C, self.K, self.L = plant.A, plant.B, plant.C, sc.K, sc.L
        self.phi = plant.phi
        q = sc.actuator_count
        self.regs: list[NodeRegister] = []
        self.slices: list[slice] = []
        for i, pol in enumerate(sc.policies):
            if i < q:
                self.regs.append(NodeRegister(i, "actuator", pol, np.zeros(plant.input_partition.widths[i])))
                self.slices.append(plant.input_partition.slice(i))
            else:
                j = i - q
                self.regs.append(NodeRegister(j, "sensor", pol, np.zeros(plant.output_partition.widths[j])))
                self.slices.append(plant.output_partition.slice(j))
        self.q = q
        self.ubar = np.zeros(self.m)
        self.ybar = np.zeros(self.p)
        n = self.n
        # s = (x, xhat): s' = M s + c(ubar, ybar) + phi(x), phi(xhat)
        self.M = np.block([[self.A, np.zeros((n, n))], [np.zeros((n, n)), self.A - self.L @ self.C]])
        self.c = np.zeros(2 * n)
        self.rows: list[tuple] = []
        self.log: list[TriggerEvent] = []

    # dynamics ---------------------------------------------------------------
    def rhs(self, t: float, s: np.ndarray) -> np.ndarray:
        return self.M @ s + self.c + self.phi(s.reshape(2, self.n), self.ubar).reshape(-1)

    def refresh_inputs(self) -> None:
        n = self.n
        Bu = self.B @ self.ubar
        self.c[:n] = Bu
        self.c[n:] = Bu + self.L @ self.ybar

    def advance(self, t: float, s: np.ndarray, t_to: float) -> np.ndarray:
        if t_to <= t:
            return s
        try:
            out = rk4_step(self.rhs, t, s, t_to - t)
        except NonFiniteDerivative as exc:
            raise NonFinite(f"divergence near t={t:.6g}: {exc}") from exc
        if not np.all(np.isfinite(out)):
            raise NonFinite(f"non-finite state at t={t_to:.6g}")
        return out

    # node signals -------------------------------------------------------------
    def node_value(self, k: int, s: np.ndarray) -> np.ndarray:
        n = self.n
        if k < self.q:
            return self.K[self.slices[k]] @ s[n:]
        return self.C[self.slices[k]] @ s[:n]

    def margin(self, k: int, s: np.ndarray) -> float:
        reg = self.regs[k]
        x_norm = None
        if isinstance(reg.policy, IdealNode):
            n = self.n
            xh = s[n:]
            z = s[:n] - xh
            x_norm = math.sqrt(float(xh @ xh + z @ z))
        return trigger_margin(reg.policy, reg.held_value, self.node_value(k, s), x_norm=x_norm)

    def transmit(self, k: int, t: float, s: np.ndarray) -> None:
        reg = self.regs[k]
        value = self.node_value(k, s)
        reg.reset(t, value)
        if reg.trigger_count > self.sc.max_events_per_node:
            raise ZenoSuspect(f"node {reg.label} exceeded {self.sc.max_events_per_node} events by t={t:.6g}")
        target = self.ubar if reg.kind == "actuator" else self.ybar
        target[self.slices[k]] = value
        self.refresh_inputs()
        self.log.append(TriggerEvent(float(t), reg.node, reg.kind, tuple(float(v) for v in value)))

    def record(self, t: float, s: np.ndarray, grid: bool) -> None:
        n = self.n
        row = (t, s[:n].copy(), s[n:].copy(), self.ubar.copy(), self.ybar.copy(),
               self.K @ s[n:], self.C @ s[:n], grid)
        if self.rows and self.rows[-1][0] == t:
            grid = grid or self.rows[-1][7]
            self.rows[-1] = row[:7] + (grid,)
        else:
            self.rows.append(row)


def _snap(t: float) -> float:
    return 1e-9 * max(1.0, abs(t))


def simulate(scenario: Scenario) -> SimulationResult:
    sc = scenario
    run = _Run(sc)
    n = run.n
    s = np.concatenate((sc.x0, sc.xhat0)).astype(float)
    t = 0.0
    for k in range(len(run.regs)):
        run.transmit(k, 0.0, s)
    run.record(0.0, s, True)

    steps = int(math.floor(sc.t_end / sc.dt + 1e-9))
    grid = [i * sc.dt for i in range(1, steps + 1)]
    if not grid or sc.t_end - grid[-1] > _snap(sc.t_end):
        grid.append(sc.t_end)
    pending = list(sc.disturbances)
    periodic = [k for k, r in enumerate(run.regs) if isinstance(r.policy, Periodic)]
    driven = [k for k, r in enumerate(run.regs) if not isinstance(r.policy, Periodic)]
    tol = sc.event_tol

    def deadline(k: int) -> float:
        reg = run.regs[k]
        return reg.trigger_count * reg.policy.delta

    for tb in grid:
        while True:
            # hard breakpoints inside (t, tb]: disturbances and periodic deadlines
            t_stop = tb
            td = None
            if pending:
                td = pending[0].time
                if abs(td - tb) <= _snap(tb):
                    td = tb
                if td <= tb:
                    t_stop = max(td, t)
            due = []
            for k in periodic:
                d = deadline(k)
                if d > sc.t_end + _snap(sc.t_end):
                    continue
                if abs(d - tb) <= _snap(tb):
                    d = tb
                if d <= t_stop:
                    if d < t_stop:
                        t_stop, due = d, []
                    due.append(k)
            disturb_here = td is not None and td <= t_stop

            s_stop = run.advance(t, s, t_stop)

            candidates: list[tuple[float, int]] = []
            for k in due:
                candidates.append((max(t_stop, t), k))
            # localize node by node, shrinking the window to the earliest crossing so far
            horizon, s_horizon = t_stop, s_stop
            for k in driven:
                reg = run.regs[k]
                earliest = reg.last_trigger_time + reg.policy.dwell
                if earliest > horizon + DWELL_EPS * max(1.0, horizon):
                    continue
                if run.margin(k, s_horizon) <= 0:
                    continue
                if earliest >= horizon:
                    t_k = horizon
                else:
                    t_lo = max(t, earliest)
                    s_lo = run.advance(t, s, t_lo)
                    if run.margin(k, s_lo) > 0:
                        t_k = t_lo
                    else:
                        g = lambda tau, k=k: run.margin(k, run.advance(t, s, tau))
                        t_k = locate_event(g, t_lo, horizon, tol)
                candidates.append((t_k, k))
                if t_k < horizon:
                    horizon, s_horizon = t_k, run.advance(t, s, t_k)

            if candidates:
                t_ev = min(c[0] for c in candidates)
                group = sorted(k for te, k in candidates if te == t_ev)
                s_ev = s_stop if t_ev == t_stop else run.advance(t, s, t_ev)
                for k in group:
                    run.transmit(k, t_ev, s_ev)
                t, s = t_ev, s_ev
                if t < tb:
                    run.record(t, s, False)
                    continue
                # events exactly at tb: re-check the remaining nodes at the same instant
                if any(run.margin(k, s) > 0 and run.regs[k].dwell_elapsed(t) for k in driven):
                    continue
                if pending and pending[0].time <= t + _snap(t):
                    continue
                run.record(t, s, True)
                break

            t, s = t_stop, s_stop
            if disturb_here:
                s = s.copy()
                s[:n] += pending.pop(0).state_jump
                if t < tb:
                    run.record(t, s, False)
                continue
            if t_stop >= tb:
                run.record(t, s, True)
                break
            run.record(t, s, False)

    return _result(run, sc)


def _result(run: _Run, sc: Scenario) -> SimulationResult:
    cols = list(zip(*run.rows))
    labels = [r.label for r in run.regs]
    return SimulationResult(
        t=np.array(cols[0]), x=np.array(cols[1]), xhat=np.array(cols[2]), ubar=np.array(cols[3]),
        ybar=np.array(cols[4]), u=np.array(cols[5]), y=np.array(cols[6]), on_grid=np.array(cols[7], dtype=bool),
        trigger_log=run.log, node_labels=labels, node_kinds=[r.kind for r in run.regs],
        node_dwell=[float(r.policy.dwell) for r in run.regs],
        disturbance_times=[d.time for d in sc.disturbances], dt=sc.dt, event_tol=sc.event_tol, t_end=sc.t_end,
    )


def simulate_periodic_baseline(scenario: Scenario, delta: float) -> SimulationResult:
    """Same scenario with every node sampled every ``delta`` seconds."""
    count = len(scenario.policies)
    return simulate(scenario.with_policies([Periodic(delta)] * count))


@dataclass
class ViolationReport:
    violations: list[tuple[float, float, float]]  # (t, ||E||, allowed)
    samples_checked: int
    sigma_prime: float
    slack_factor: float
    result: SimulationResult

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def worst_ratio(self) -> float:
        E = np.linalg.norm(self.result.E, axis=1)
        X = self.result.norm_X
        mask = X > 0
        return float(np.max(E[mask] / X[mask])) if np.any(mask) else 0.0


def run_ideal_validation(scenario: Scenario, certificate: IssCertificate, *, t_end: float | None = None) -> ViolationReport:
    """Run with the ideal (true-state) node policies and audit ``||E|| <= sigma' ||X||``.

    Every logged sample is checked. The allowed ratio is widened by the
    localization slack ``2 L_G event_tol`` (relative to ``||X||``).
    """
    validate_certificate(certificate)
    if len(certificate.kappa) != len(scenario.policies):
        raise BudgetExceeded("certificate node count does not match the scenario")
    changes = {}
    if t_end is not None:
        changes["t_end"] = t_end
        changes["disturbances"] = [d for d in scenario.disturbances if d.time < t_end]
    sc = scenario.with_policies(certificate.ideal_policies(), **changes)
    result = simulate(sc)
    slack = 2.0 * certificate.L_G * sc.event_tol
    E = np.linalg.norm(result.E, axis=1)
    X = result.norm_X
    allowed = (certificate.sigma_prime + slack) * X
    bad = np.nonzero(E > allowed)[0]
    violations = [(float(result.t[i]), float(E[i]), float(allowed[i])) for i in bad]
    return ViolationReport(violations, len(E), certificate.sigma_prime, slack, result)
