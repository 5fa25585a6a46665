"""Trigger policies, zero-order-hold registers and ISS trigger budgets.

The certificate chain goes: Lyapunov pair -> Lipschitz slopes of the composite
ISS Lyapunov function -> admissible ratio ``sigma`` of sampling error to extended
state -> per-node budgets ``kappa`` -> per-node dwell times ``tau_min``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from .errors import (
    BudgetExceeded,
    CertificateDegenerate,
    LyapunovResidualTooLarge,
    NonPositiveConstant,
    NotHurwitz,
    PolicyMismatch,
    ZeroKappaWarning,
)
from .models import LinearController, LipschitzAffinePlant, LuenbergerObserver
from .numcore import is_hurwitz, norm_one, norm_two, solve_lyapunov, spectral_norm, sym_eig_bounds

# Slack on the dwell comparison so a trigger clamped exactly to t_k + tau_min is
# not rejected by floating-point round-off.
DWELL_EPS = 1e-12


# --------------------------------------------------------------------------- policies

@dataclass(frozen=True)
class Periodic:
    delta: float

    def __post_init__(self):
        _positive(delta=self.delta)

    @property
    def dwell(self) -> float:
        return self.delta


@dataclass(frozen=True)
class EpsilonCrossing:
    epsilon: float

    def __post_init__(self):
        _positive(epsilon=self.epsilon)

    dwell = 0.0


@dataclass(frozen=True)
class StateDependent:
    sigma: float
    epsilon: float

    def __post_init__(self):
        _positive(sigma=self.sigma, epsilon=self.epsilon)

    dwell = 0.0


@dataclass(frozen=True)
class Mixed:
    epsilon: float
    delta_min: float

    def __post_init__(self):
        _positive(epsilon=self.epsilon, delta_min=self.delta_min)

    @property
    def dwell(self) -> float:
        return self.delta_min


@dataclass(frozen=True)
class RelativeState:
    sigma: float

    def __post_init__(self):
        _positive(sigma=self.sigma)

    dwell = 0.0


@dataclass(frozen=True)
class NodeRelativeActuator:
    """``||u_i - u_i(t_k)|| > kappa / L_gamma * ||gamma_i(xhat)||`` after ``tau_min``."""

    kappa: float
    L_gamma: float
    tau_min: float

    def __post_init__(self):
        _positive(kappa=self.kappa, L_gamma=self.L_gamma)
        _nonneg(tau_min=self.tau_min)

    @property
    def dwell(self) -> float:
        return self.tau_min

    @property
    def factor(self) -> float:
        return self.kappa / self.L_gamma


@dataclass(frozen=True)
class NodeRelativeSensor:
    """``||y_j - y_j(t_k)|| > kappa / (2 L_h) * ||y_j||`` after ``tau_min``."""

    kappa: float
    L_h: float
    tau_min: float

    def __post_init__(self):
        _positive(kappa=self.kappa, L_h=self.L_h)
        _nonneg(tau_min=self.tau_min)

    @property
    def dwell(self) -> float:
        return self.tau_min

    @property
    def factor(self) -> float:
        return self.kappa / (2.0 * self.L_h)


@dataclass(frozen=True)
class IdealNode:
    """Threshold on the true extended-state norm; only usable in simulation."""

    kappa: float
    tau_min: float

    def __post_init__(self):
        _nonneg(kappa=self.kappa, tau_min=self.tau_min)

    @property
    def dwell(self) -> float:
        return self.tau_min


TriggerPolicy = Union[
    Periodic, EpsilonCrossing, StateDependent, Mixed, RelativeState,
    NodeRelativeActuator, NodeRelativeSensor, IdealNode,
]
GENERIC_POLICIES = (Periodic, EpsilonCrossing, StateDependent, Mixed, RelativeState)


def _positive(**values: float) -> None:
    for name, v in values.items():
        if not (v > 0 and math.isfinite(v)):
            raise NonPositiveConstant(f"{name} must be positive, got {v}")


def _nonneg(**values: float) -> None:
    for name, v in values.items():
        if not (v >= 0 and math.isfinite(v)):
            raise NonPositiveConstant(f"{name} must be non-negative, got {v}")


# --------------------------------------------------------------------------- registers

@dataclass
class NodeRegister:
    """Zero-order hold of one node: the value last transmitted and when."""

    node: int
    kind: Literal["actuator", "sensor"]
    policy: TriggerPolicy
    held_value: np.ndarray
    last_trigger_time: float = 0.0
    trigger_count: int = 0

    def __post_init__(self):
        self.held_value = np.array(self.held_value, dtype=float).reshape(-1)
        self._width = self.held_value.size

    def reset(self, t: float, value) -> None:
        value = np.asarray(value, dtype=float).reshape(-1)
        if value.size != self._width:
            raise ValueError(f"held value width is fixed at {self._width}")
        if t < self.last_trigger_time:
            raise ValueError("trigger times must be non-decreasing")
        self.held_value = value.copy()
        self.last_trigger_time = float(t)
        self.trigger_count += 1

    def dwell_elapsed(self, t: float) -> bool:
        return t - self.last_trigger_time >= self.policy.dwell - DWELL_EPS * max(1.0, abs(t))

    @property
    def label(self) -> str:
        return f"{'u' if self.kind == 'actuator' else 'y'}{self.node + 1}"


def trigger_margin(policy: TriggerPolicy, held: np.ndarray, current: np.ndarray, *,
                   x_norm: float | None = None) -> float:
    """Deviation minus threshold for a state-driven policy; positive means fire.

    ``x_norm`` is the extended-state norm and is only consulted by ``IdealNode``.
    Time-driven ``Periodic`` has no margin.
    """
    dev = current - held
    if isinstance(policy, NodeRelativeActuator):
        return norm_two(dev) - policy.factor * norm_two(current)
    if isinstance(policy, NodeRelativeSensor):
        return norm_two(dev) - policy.factor * norm_two(current)
    if isinstance(policy, IdealNode):
        if x_norm is None:
            raise ValueError("IdealNode needs the extended-state norm")
        return norm_two(dev) - policy.kappa * x_norm
    if isinstance(policy, EpsilonCrossing):
        return norm_one(dev) - policy.epsilon
    if isinstance(policy, Mixed):
        return norm_one(dev) - policy.epsilon
    if isinstance(policy, StateDependent):
        return norm_one(dev) - (policy.sigma * norm_one(current) + policy.epsilon)
    if isinstance(policy, RelativeState):
        return norm_one(dev) - policy.sigma * norm_one(current)
    raise PolicyMismatch(f"{type(policy).__name__} has no deviation margin")


def should_trigger_actuator(reg: NodeRegister, t: float, u_i_now, gamma_i_xhat, *,
                            x_norm: float | None = None) -> bool:
    if reg.kind != "actuator" or not isinstance(reg.policy, (NodeRelativeActuator, IdealNode)):
        raise PolicyMismatch(f"actuator predicate on {reg.kind} register with {type(reg.policy).__name__}")
    if not reg.dwell_elapsed(t):
        return False
    u_now = np.asarray(u_i_now, dtype=float).reshape(-1)
    dev = norm_two(u_now - reg.held_value)
    if isinstance(reg.policy, IdealNode):
        return trigger_margin(reg.policy, reg.held_value, u_now, x_norm=x_norm) > 0
    return dev > reg.policy.factor * norm_two(np.asarray(gamma_i_xhat, dtype=float))


def should_trigger_sensor(reg: NodeRegister, t: float, y_j_now, *, x_norm: float | None = None) -> bool:
    if reg.kind != "sensor" or not isinstance(reg.policy, (NodeRelativeSensor, IdealNode)):
        raise PolicyMismatch(f"sensor predicate on {reg.kind} register with {type(reg.policy).__name__}")
    if not reg.dwell_elapsed(t):
        return False
    y_now = np.asarray(y_j_now, dtype=float).reshape(-1)
    return trigger_margin(reg.policy, reg.held_value, y_now, x_norm=x_norm) > 0


def should_trigger_generic(policy: TriggerPolicy, reg: NodeRegister, t: float, current,
                           reference_magnitude: float | None = None) -> bool:
    """Evaluate one of the classic full-state policies with the 1-norm.

    ``reference_magnitude`` is ``|x|``; it defaults to the 1-norm of ``current``.
    """
    if not isinstance(policy, GENERIC_POLICIES) or policy != reg.policy:
        raise PolicyMismatch(f"{type(policy).__name__} does not match the register policy")
    if isinstance(policy, Periodic):
        return reg.dwell_elapsed(t)
    if not reg.dwell_elapsed(t):
        return False
    current = np.asarray(current, dtype=float).reshape(-1)
    dev = norm_one(current - reg.held_value)
    ref = norm_one(current) if reference_magnitude is None else reference_magnitude
    if isinstance(policy, (EpsilonCrossing, Mixed)):
        return dev > policy.epsilon
    if isinstance(policy, StateDependent):
        return dev > policy.sigma * ref + policy.epsilon
    return dev > policy.sigma * ref


# --------------------------------------------------------------------------- budget arithmetic

def sigma_bound(L_a3_inv: float, L_b: float) -> float:
    """Supremum of admissible ``sigma``: ``1 / (L_a3_inv * L_b)``."""
    _positive(L_a3_inv=L_a3_inv, L_b=L_b)
    return 1.0 / (L_a3_inv * L_b)


def euclidean_margin(sigma: float, dim_E: int) -> float:
    """Euclidean-norm ratio that implies the 1-norm ratio ``sigma``."""
    _positive(sigma=sigma)
    if dim_E < 1:
        raise ValueError("dim_E must be a positive integer")
    return sigma / math.sqrt(dim_E)


def allocate_kappa(sigma_prime: float, node_count: int) -> list[float]:
    if node_count < 1:
        raise ValueError("node_count must be >= 1")
    share = sigma_prime / node_count
    kappas = [share] * node_count
    kappas[-1] = sigma_prime - share * (node_count - 1)
    # rounding may leave the float sum one ulp above the budget
    while math.fsum(kappas) > sigma_prime:
        kappas[-1] = math.nextafter(kappas[-1], 0.0)
    return kappas


def _min_interevent(L_G: float, sigma_prime: float, kappa: float, L_node: float, name: str) -> float:
    _positive(L_G=L_G, sigma_prime=sigma_prime, **{name: L_node})
    if kappa < 0:
        raise NonPositiveConstant(f"kappa must be non-negative, got {kappa}")
    if kappa == 0:
        warnings.warn("zero kappa gives a zero dwell time", ZeroKappaWarning, stacklevel=3)
        return 0.0
    return math.log1p(kappa / L_node) / (L_G * (1.0 + sigma_prime))


def min_interevent_actuator(L_G: float, sigma_prime: float, kappa_i: float, L_gamma_i: float) -> float:
    return _min_interevent(L_G, sigma_prime, kappa_i, L_gamma_i, "L_gamma_i")


def min_interevent_sensor(L_G: float, sigma_prime: float, kappa_j: float, L_h_j: float) -> float:
    return _min_interevent(L_G, sigma_prime, kappa_j, L_h_j, "L_h_j")


# --------------------------------------------------------------------------- certificate

@dataclass(frozen=True, eq=False)
class LyapunovPair:
    P_c: np.ndarray
    eta_c: float
    P_o: np.ndarray
    eta_o: float

    def __post_init__(self):
        _positive(eta_c=self.eta_c, eta_o=self.eta_o)
        for name in ("P_c", "P_o"):
            P = np.asarray(getattr(self, name), dtype=float)
            if not np.allclose(P, P.T, atol=1e-12 * max(1.0, np.abs(P).max())):
                raise ValueError(f"{name} must be symmetric")
            if sym_eig_bounds(P)[0] <= 0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, 0.5 * (P + P.T))

    @classmethod
    def from_gains(cls, plant: LipschitzAffinePlant, ctrl: LinearController, obs: LuenbergerObserver,
                   Q_c=None, Q_o=None) -> "LyapunovPair":
        """Quadratic pair for ``A+BK`` and ``A-LC`` with decay rates ``lambda_min(Q)``."""
        n = plant.n
        Q_c = np.eye(n) if Q_c is None else np.asarray(Q_c, dtype=float)
        Q_o = np.eye(n) if Q_o is None else np.asarray(Q_o, dtype=float)
        Acl, Aob = plant.A + plant.B @ ctrl.K, plant.A - obs.Lgain @ plant.C
        if not is_hurwitz(Acl):
            raise NotHurwitz("A + B K is not Hurwitz")
        if not is_hurwitz(Aob):
            raise NotHurwitz("A - L C is not Hurwitz")
        return cls(solve_lyapunov(Acl, Q_c), sym_eig_bounds(Q_c)[0],
                   solve_lyapunov(Aob, Q_o), sym_eig_bounds(Q_o)[0])


A3InvForm = Literal["printed", "reciprocal"]


@dataclass(frozen=True)
class IssCertificate:
    L_a3_inv: float
    L_b: float
    L_G: float
    lambda_c: float
    L_beta_c: float
    L_beta_o: float
    L_alpha_c3: float
    L_alpha_o3_inv: float
    sigma: float
    sigma_prime: float
    kappa: tuple[float, ...]
    tau_min: tuple[float, ...]
    # bookkeeping needed to rebuild node policies
    L_gamma: tuple[float, ...] = ()
    L_h_nodes: tuple[float, ...] = ()
    L_h: float = 1.0
    dim_E: int = 1
    actuator_count: int = 0
    a3_inv_form: str = "printed"
    notes: tuple[str, ...] = field(default=())

    @property
    def sigma_max(self) -> float:
        return sigma_bound(self.L_a3_inv, self.L_b)

    def actuator_policies(self) -> list[NodeRelativeActuator]:
        q = self.actuator_count
        return [NodeRelativeActuator(k, lg, tau) for k, lg, tau in zip(self.kappa[:q], self.L_gamma, self.tau_min[:q])]

    def sensor_policies(self) -> list[NodeRelativeSensor]:
        q = self.actuator_count
        return [NodeRelativeSensor(k, self.L_h, tau) for k, tau in zip(self.kappa[q:], self.tau_min[q:])]

    def ideal_policies(self) -> list[IdealNode]:
        return [IdealNode(k, tau) for k, tau in zip(self.kappa, self.tau_min)]

    def relative_factors(self) -> tuple[list[float], list[float]]:
        """Implementable thresholds ``kappa_i / L_gamma_i`` and ``kappa_j / (2 L_h)``."""
        return ([p.factor for p in self.actuator_policies()], [p.factor for p in self.sensor_policies()])


def validate_certificate(cert: IssCertificate, rtol: float = 1e-12) -> None:
    """Re-assert the budget chain; raise ``BudgetExceeded`` on any breach."""
    smax = sigma_bound(cert.L_a3_inv, cert.L_b)
    if not 0 < cert.sigma < smax:
        raise BudgetExceeded(f"sigma={cert.sigma:.6g} outside (0, {smax:.6g})")
    if cert.sigma_prime * math.sqrt(cert.dim_E) > cert.sigma * (1 + rtol):
        raise BudgetExceeded("sigma_prime * sqrt(dim_E) exceeds sigma")
    total = math.fsum(cert.kappa)
    if total > cert.sigma_prime * (1 + rtol):
        raise BudgetExceeded(f"sum(kappa)={total:.6g} exceeds sigma_prime={cert.sigma_prime:.6g}")
    if any(k < 0 for k in cert.kappa):
        raise BudgetExceeded("negative kappa")
    for k, tau in zip(cert.kappa, cert.tau_min):
        if k > 0 and not tau > 0:
            raise BudgetExceeded("positive kappa with a zero dwell time")
    if not cert.lambda_c * cert.L_alpha_o3_inv * cert.L_beta_c < 1:
        raise BudgetExceeded("lambda_c too large for the observer decrease rate")


def _decay_check(M: np.ndarray, P: np.ndarray, eta: float, which: str, rtol: float) -> None:
    # need M^T P + P M <= -eta I
    worst = sym_eig_bounds(M.T @ P + P @ M)[1]
    if worst > -eta + rtol * max(1.0, eta, float(np.abs(P).max())):
        raise LyapunovResidualTooLarge(
            f"{which}: largest eigenvalue of M^T P + P M is {worst:.6g}, need <= {-eta:.6g}")


def build_certificate(
    plant: LipschitzAffinePlant,
    ctrl: LinearController,
    obs: LuenbergerObserver,
    lyap: LyapunovPair,
    *,
    a3_inv_form: A3InvForm = "printed",
    kappa: list[float] | None = None,
    residual_rtol: float = 1e-8,
) -> IssCertificate:
    """Assemble every constant of the trigger budget for a Lipschitz-affine loop.

    Args:
        a3_inv_form: ``"printed"`` uses ``lambda_c / L_alpha_c3`` for the estimator
            branch of ``L_a3_inv``; ``"reciprocal"`` uses ``1 / (lambda_c L_alpha_c3)``,
            which is the slope of the inverse of ``lambda_c * alpha_c3``.
        kappa: optional per-node override (actuators first); defaults to uniform.
    """
    A, B, C, K, Lg = plant.A, plant.B, plant.C, ctrl.K, obs.Lgain
    Acl, Aob = A + B @ K, A - Lg @ C
    if not is_hurwitz(Acl):
        raise NotHurwitz("A + B K is not Hurwitz")
    if not is_hurwitz(Aob):
        raise NotHurwitz("A - L C is not Hurwitz")
    _decay_check(Acl, lyap.P_c, lyap.eta_c, "controller pair", residual_rtol)
    _decay_check(Aob, lyap.P_o, lyap.eta_o, "observer pair", residual_rtol)

    pc_min, pc_max = sym_eig_bounds(lyap.P_c)
    po_min, po_max = sym_eig_bounds(lyap.P_o)
    BK, LC = B @ K, Lg @ C
    nBK, nLC = spectral_norm(BK), spectral_norm(LC)

    L_alpha_c3 = lyap.eta_c / math.sqrt(pc_max)
    L_beta_c = (nBK + 2.0 * nLC) / math.sqrt(pc_min)
    L_alpha_o3_inv = math.sqrt(po_max) / lyap.eta_o
    L_beta_o = 2.0 * nLC / math.sqrt(po_min)

    notes = []
    if L_beta_c == 0:
        lambda_c = 1.0
        notes.append("L_beta_c = 0: lambda_c fixed to 1")
    else:
        lambda_c = 1.0 / (2.0 * L_alpha_o3_inv * L_beta_c)
    denom = 1.0 - lambda_c * L_alpha_o3_inv * L_beta_c
    if denom <= 0:
        raise CertificateDegenerate("no admissible lambda_c")
    if a3_inv_form == "printed":
        est_branch = lambda_c / L_alpha_c3
    elif a3_inv_form == "reciprocal":
        est_branch = 1.0 / (lambda_c * L_alpha_c3)
    else:
        raise ValueError(f"unknown a3_inv_form {a3_inv_form!r}")
    notes.append(f"L_a3_inv estimator branch uses the {a3_inv_form} form")
    L_a3_inv = max(est_branch, L_alpha_o3_inv / denom)
    L_b = L_beta_c + L_beta_o
    if not (L_a3_inv > 0 and L_b > 0):
        raise CertificateDegenerate("L_a3_inv and L_b must be positive")

    n = plant.n
    block = np.block([[Acl, LC], [np.zeros((n, n)), Aob]])
    L_G = spectral_norm(block) + plant.rho * (1.0 + spectral_norm(K)) + nBK + nLC

    sigma = 0.5 * sigma_bound(L_a3_inv, L_b)
    dim_E = plant.m + plant.p
    sigma_prime = euclidean_margin(sigma, dim_E)
    q, r = len(ctrl.partition), len(obs.partition)
    if kappa is None:
        kappas = allocate_kappa(sigma_prime, q + r)
    else:
        kappas = [float(k) for k in kappa]
        if len(kappas) != q + r:
            raise ValueError(f"expected {q + r} kappa values, got {len(kappas)}")
    L_gamma = ctrl.per_node_lipschitz
    L_h_nodes = obs.per_node_lipschitz
    taus = [min_interevent_actuator(L_G, sigma_prime, k, lg) for k, lg in zip(kappas[:q], L_gamma)]
    taus += [min_interevent_sensor(L_G, sigma_prime, k, lh) for k, lh in zip(kappas[q:], L_h_nodes)]
    return IssCertificate(
        L_a3_inv=L_a3_inv, L_b=L_b, L_G=L_G, lambda_c=lambda_c, L_beta_c=L_beta_c, L_beta_o=L_beta_o,
        L_alpha_c3=L_alpha_c3, L_alpha_o3_inv=L_alpha_o3_inv, sigma=sigma, sigma_prime=sigma_prime,
        kappa=tuple(kappas), tau_min=tuple(taus), L_gamma=tuple(L_gamma), L_h_nodes=tuple(L_h_nodes),
        L_h=obs.output_lipschitz, dim_E=dim_E, actuator_count=q, a3_inv_form=a3_inv_form, notes=tuple(notes),
    )
