"""Post-run metrics: trigger statistics, convergence, Lyapunov decrease audit,
and sampled Lipschitz estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import EmptyLog, InsufficientSamples, NeverSettles
from .simulator import SimulationResult
from .triggering import IssCertificate, LyapunovPair


@dataclass(frozen=True)
class NodeStats:
    label: str
    kind: str
    count: int
    min_gap: float | None
    mean_gap: float | None
    max_gap: float | None

    @property
    def post_initial(self) -> int:
        return max(self.count - 1, 0)


@dataclass(frozen=True)
class TriggerStats:
    nodes: tuple[NodeStats, ...]
    totals: dict[str, int]

    def by_label(self, label: str) -> NodeStats:
        for node in self.nodes:
            if node.label == label:
                return node
        raise KeyError(label)

    @property
    def total(self) -> int:
        return sum(node.count for node in self.nodes)


def trigger_stats(result: SimulationResult) -> TriggerStats:
    if not result.trigger_log:
        raise EmptyLog("simulation produced no transmissions")
    nodes = []
    totals = {"actuator": 0, "sensor": 0}
    for k, label in enumerate(result.node_labels):
        times = result.event_times(k)
        gaps = np.diff(times)
        if gaps.size:
            stats = NodeStats(label, result.node_kinds[k], int(times.size),
                              float(gaps.min()), float(gaps.mean()), float(gaps.max()))
        else:
            stats = NodeStats(label, result.node_kinds[k], int(times.size), None, None, None)
        nodes.append(stats)
        totals[result.node_kinds[k]] += int(times.size)
    return TriggerStats(tuple(nodes), totals)


@dataclass(frozen=True)
class ConvergenceReport:
    threshold: float
    settling_time: float | None
    tail_sup_x: float
    tail_sup_z: float
    peak: float
    decay_rate: float | None = None  # informational exponential-envelope fit

    @property
    def never_settles(self) -> bool:
        return self.settling_time is None

    @property
    def tail_sup(self) -> float:
        return max(self.tail_sup_x, self.tail_sup_z)


def convergence_report(result: SimulationResult, threshold: float, *, strict: bool = False) -> ConvergenceReport:
    """Settling time of ``||x||`` after the last disturbance, tail sups and peak.

    A run that never settles is reported with ``settling_time=None``; pass
    ``strict=True`` to raise ``NeverSettles`` instead.
    """
    t = result.t
    if t.size == 0:
        raise InsufficientSamples("empty trajectory")
    nx, nz = result.norm_x, result.norm_z
    start = max(result.disturbance_times, default=0.0)
    after = t >= start
    above = np.nonzero(after & (nx >= threshold))[0]
    if above.size == 0:
        settling = float(start)
    elif above[-1] == t.size - 1:
        settling = None
    else:
        settling = float(t[above[-1] + 1])
    if settling is None and strict:
        raise NeverSettles(f"||x|| is still above {threshold} at t={t[-1]:.6g}")
    tail = t >= t[-1] - 0.1 * (t[-1] - t[0])
    peak = float(nx[after].max())

    decay = None
    nX = result.norm_X
    mask = after & (nX > 1e-12)
    if np.count_nonzero(mask) > 2:
        slope = np.polyfit(t[mask], np.log(nX[mask]), 1)[0]
        decay = float(-slope)
    return ConvergenceReport(threshold, settling, float(nx[tail].max()), float(nz[tail].max()), peak, decay)


def composite_lyapunov(result: SimulationResult, lyap: LyapunovPair, lambda_c: float) -> np.ndarray:
    """``lambda_c * 2 sqrt(xhat' P_c xhat) + 2 sqrt(z' P_o z)`` along the trajectory."""
    xh, z = result.xhat, result.z
    vc = np.einsum("ij,jk,ik->i", xh, lyap.P_c, xh)
    vo = np.einsum("ij,jk,ik->i", z, lyap.P_o, z)
    return lambda_c * 2.0 * np.sqrt(np.maximum(vc, 0.0)) + 2.0 * np.sqrt(np.maximum(vo, 0.0))


@dataclass
class LyapunovCheck:
    violations: list[tuple[float, float, float]]  # (t, dV/dt, allowed)
    checked: int
    excluded: list[float] = field(default_factory=list)
    slack: np.ndarray | None = None
    within_budget: bool = True

    @property
    def status(self) -> str:
        # the bound is sufficient, not necessary: silence outside the budget proves nothing
        if self.violations:
            return "violations"
        return "pass" if self.checked and self.within_budget else "inconclusive"


def check_lyapunov_decrease(
    result: SimulationResult,
    lyap: LyapunovPair,
    certificate: IssCertificate,
    *,
    window: float | None = None,
    within_budget: bool = True,
) -> LyapunovCheck:
    """Audit ``dV/dt <= -|X|_1 / L_a3_inv + L_b |E|_1`` on the integrator grid.

    Uses central differences on grid samples. Each sample gets slack
    ``10 dt |V''|`` with ``V''`` estimated from its neighbours. Samples closer
    than ``window`` (default ``2 dt``) to a transmission or a disturbance are
    excluded and listed in ``excluded``. Pass ``within_budget=False`` for runs
    whose thresholds exceed the certified budget; a clean audit of such a run
    is then reported as inconclusive.
    """
    grid = result.on_grid
    t = result.t[grid]
    if t.size < 3:
        raise InsufficientSamples("need at least three grid samples")
    dt = result.dt
    win = 2.0 * dt if window is None else window
    V = composite_lyapunov(result, lyap, certificate.lambda_c)[grid]
    xh, z, E = result.xhat[grid], result.z[grid], result.E[grid]
    X1 = np.abs(xh).sum(axis=1) + np.abs(z).sum(axis=1)
    E1 = np.abs(E).sum(axis=1)
    allowed = -X1 / certificate.L_a3_inv + certificate.L_b * E1

    h_fwd = t[2:] - t[1:-1]
    h_bwd = t[1:-1] - t[:-2]
    dV = (V[2:] - V[:-2]) / (h_fwd + h_bwd)
    d2V = 2.0 * ((V[2:] - V[1:-1]) / h_fwd - (V[1:-1] - V[:-2]) / h_bwd) / (h_fwd + h_bwd)
    curv = np.abs(d2V)
    # neighbourhood bound on |V''|
    curv_nb = np.maximum(curv, np.maximum(np.r_[curv[1:], 0.0], np.r_[0.0, curv[:-1]]))
    slack = 10.0 * dt * curv_nb

    marks = np.array(sorted({e.t for e in result.trigger_log if e.t > 0} | set(result.disturbance_times)))
    ti = t[1:-1]
    if marks.size:
        pos = np.searchsorted(marks, ti)
        near = np.full(ti.shape, np.inf)
        left = pos > 0
        near[left] = ti[left] - marks[pos[left] - 1]
        right = pos < marks.size
        near[right] = np.minimum(near[right], marks[pos[right]] - ti[right])
        keep = near > win
    else:
        keep = np.ones(ti.shape, dtype=bool)

    bad = keep & (dV > allowed[1:-1] + slack)
    violations = [(float(ti[i]), float(dV[i]), float(allowed[1 + i] + slack[i])) for i in np.nonzero(bad)[0]]
    return LyapunovCheck(violations, int(keep.sum()), [float(v) for v in ti[~keep]], slack, within_budget)


def _pair_points(dim: int, count: int, seed: int) -> np.ndarray:
    sampler = qmc.Halton(d=2 * dim, scramble=True, seed=seed)
    return sampler.random(count)


def estimate_lipschitz(
    f: Callable[[np.ndarray], np.ndarray],
    domain_center,
    radius: float,
    samples: int,
    *,
    seed: int = 0,
) -> float:
    """Largest sampled difference quotient of ``f`` over a ball; a lower bound.

    Pairs alternate between two quasi-random points of the ball and a point
    paired with a short step along one coordinate axis. The sequence is a
    deterministic function of ``seed``, so more samples never lower the result.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    c = np.atleast_1d(np.asarray(domain_center, dtype=float))
    d = c.size
    U = _pair_points(d, samples, seed)
    best = 0.0
    step = 1e-4 * radius
    for k in range(samples):
        a = c + radius * _to_ball(U[k, :d])
        if k % 2 == 0:
            b = c + radius * _to_ball(U[k, d:])
        else:
            axis = (k // 2) % d
            b = a.copy()
            b[axis] += step if U[k, d] < 0.5 else -step
        gap = np.linalg.norm(a - b)
        if gap == 0.0:
            continue
        q = float(np.linalg.norm(np.atleast_1d(f(a)) - np.atleast_1d(f(b))) / gap)
        if math.isfinite(q):
            best = max(best, q)
    return best


def _to_ball(u: np.ndarray) -> np.ndarray:
    # cube [0,1)^d -> ball of radius 1 by radial rescaling
    v = 2.0 * u - 1.0
    inf = np.abs(v).max()
    two = np.linalg.norm(v)
    return v if two == 0.0 else v * (inf / two)
