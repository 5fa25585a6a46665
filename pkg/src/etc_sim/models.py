"""Plants, Luenberger observers and linear controllers with node partitions.

The plant class is ``xdot = A x + B u + phi(x, u)``, ``y = C x``. Inputs and
outputs are split into nodes (actuator groups and sensor groups) that transmit
independently.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonFinite, RhoViolated
from .numcore import as_mat, as_vec, spectral_norm


@dataclass(frozen=True)
class NodePartition:
    """Contiguous (offset, width) slices covering ``[0, total_dim)``."""

    node_spans: tuple[tuple[int, int], ...]
    total_dim: int

    def __post_init__(self):
        if self.total_dim < 1:
            raise ValueError("total_dim must be positive")
        offset = 0
        for start, width in self.node_spans:
            if width < 1:
                raise ValueError("node widths must be >= 1")
            if start != offset:
                raise ValueError("node spans must be contiguous and disjoint")
            offset += width
        if offset != self.total_dim:
            raise ValueError(f"node spans cover {offset} entries, expected {self.total_dim}")

    @classmethod
    def from_widths(cls, widths: Sequence[int]) -> "NodePartition":
        spans, offset = [], 0
        for w in widths:
            spans.append((offset, int(w)))
            offset += int(w)
        return cls(tuple(spans), offset)

    @classmethod
    def singletons(cls, dim: int) -> "NodePartition":
        return cls.from_widths([1] * dim)

    @property
    def widths(self) -> list[int]:
        return [w for _, w in self.node_spans]

    def __len__(self) -> int:
        return len(self.node_spans)

    def slice(self, i: int) -> slice:
        start, width = self.node_spans[i]
        return slice(start, start + width)

    def split(self, v: np.ndarray) -> list[np.ndarray]:
        return [v[self.slice(i)] for i in range(len(self))]


_PHI_FUNCS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "tanh": np.tanh,
    "lin": lambda s: s,
}


@dataclass(frozen=True)
class PhiTerm:
    """One additive term ``phi[out] += gain * func(x[src])`` (0-based indices)."""

    out: int
    gain: float
    func: str
    src: int

    def __post_init__(self):
        if self.func not in _PHI_FUNCS:
            raise ValueError(f"unknown phi function {self.func!r}; expected one of {sorted(_PHI_FUNCS)}")


@dataclass(frozen=True)
class Nonlinearity:
    """Sum of scalar terms with slope bounded by one (sin, tanh, identity).

    Depends on ``x`` only; ``u`` is accepted so the call signature matches the
    plant class.
    """

    dim: int
    terms: tuple[PhiTerm, ...] = ()

    def __post_init__(self):
        for term in self.terms:
            if not (0 <= term.out < self.dim and 0 <= term.src < self.dim):
                raise ValueError(f"phi term {term} out of range for dimension {self.dim}")

    def __call__(self, x: np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
        # vectorized over leading axes of x
        out = np.zeros(np.shape(x))
        for term in self.terms:
            out[..., term.out] += term.gain * _PHI_FUNCS[term.func](x[..., term.src])
        return out

    def lipschitz_bound(self) -> float:
        # every func has |f'| <= 1, so |J| is entrywise below |G|
        G = np.zeros((self.dim, self.dim))
        for term in self.terms:
            G[term.out, term.src] += abs(term.gain)
        return spectral_norm(G)


@dataclass(frozen=True, eq=False)
class LipschitzAffinePlant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    phi: Nonlinearity
    rho: float
    input_partition: NodePartition
    output_partition: NodePartition
    name: str = "custom"

    def __post_init__(self):
        A = as_mat(self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = np.asarray(self.B, dtype=float)
        B = as_mat(B.reshape(n, -1) if B.ndim == 1 else B, rows=n)
        C = as_mat(self.C, cols=n)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        if self.phi.dim != n:
            raise ValueError("phi dimension does not match the state dimension")
        if self.input_partition.total_dim != B.shape[1]:
            raise ValueError("input partition does not match the number of inputs")
        if self.output_partition.total_dim != C.shape[0]:
            raise ValueError("output partition does not match the number of outputs")
        if not np.allclose(self.phi(np.zeros(n), np.zeros(B.shape[1])), 0.0):
            raise ValueError("phi(0, u) must vanish")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def output(self, x: np.ndarray) -> np.ndarray:
        return self.C @ x


@dataclass(frozen=True, eq=False)
class LinearController:
    """State feedback ``u = K xhat`` split across actuator nodes."""

    K: np.ndarray
    partition: NodePartition
    per_node_lipschitz: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        K = as_mat(self.K)
        if K.shape[0] != self.partition.total_dim:
            raise ValueError(f"K has {K.shape[0]} rows but the input partition covers {self.partition.total_dim}")
        object.__setattr__(self, "K", K)
        lips = tuple(spectral_norm(K[self.partition.slice(i)]) for i in range(len(self.partition)))
        object.__setattr__(self, "per_node_lipschitz", lips)

    @property
    def lipschitz(self) -> float:
        return spectral_norm(self.K)


@dataclass(frozen=True, eq=False)
class LuenbergerObserver:
    """Model copy plus output injection ``Lgain (ybar - C xhat)``."""

    Lgain: np.ndarray
    C: np.ndarray
    partition: NodePartition
    output_lipschitz: float = field(init=False)
    per_node_lipschitz: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        C = as_mat(self.C)
        Lg = as_mat(self.Lgain, rows=C.shape[1], cols=C.shape[0])
        object.__setattr__(self, "Lgain", Lg)
        object.__setattr__(self, "C", C)
        if self.partition.total_dim != C.shape[0]:
            raise ValueError("output partition does not match C")
        object.__setattr__(self, "output_lipschitz", spectral_norm(C))
        lips = tuple(spectral_norm(C[self.partition.slice(j)]) for j in range(len(self.partition)))
        object.__setattr__(self, "per_node_lipschitz", lips)


def _check_finite(v: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise NonFinite(f"non-finite {what}")
    return v


def plant_dynamics(plant: LipschitzAffinePlant, x, u_held) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u_held, dtype=float)
    return _check_finite(plant.A @ x + plant.B @ u + plant.phi(x, u), "plant derivative")


def observer_dynamics(plant: LipschitzAffinePlant, obs: LuenbergerObserver, xhat, u_held, y_held) -> np.ndarray:
    xhat = np.asarray(xhat, dtype=float)
    u = np.asarray(u_held, dtype=float)
    innovation = np.asarray(y_held, dtype=float) - plant.C @ xhat
    dx = plant.A @ xhat + plant.B @ u + plant.phi(xhat, u) + obs.Lgain @ innovation
    return _check_finite(dx, "observer derivative")


def controller_eval(ctrl: LinearController, xhat) -> np.ndarray:
    return ctrl.K @ np.asarray(xhat, dtype=float)


def controller_eval_node(ctrl: LinearController, i: int, xhat) -> np.ndarray:
    return ctrl.K[ctrl.partition.slice(i)] @ np.asarray(xhat, dtype=float)


def phi_lipschitz_check(
    plant: LipschitzAffinePlant,
    sample_count: int = 2000,
    domain_radius: float = 1.0,
    seed: int = 0,
) -> float:
    """Sampled lower bound on the Lipschitz constant of phi in x.

    Raises ``RhoViolated`` when the sample exceeds the declared ``rho``.
    """
    from .analysis import estimate_lipschitz

    u0 = np.zeros(plant.m)
    est = estimate_lipschitz(lambda x: plant.phi(x, u0), np.zeros(plant.n), domain_radius, sample_count, seed=seed)
    if est > plant.rho * (1.0 + 1e-9) + 1e-12:
        raise RhoViolated(f"sampled slope {est:.6g} exceeds declared rho {plant.rho:.6g}")
    return est


# Flexible-link robot benchmark matrices, exactly as published.
FLEX_A = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [-48.6, -1.25, 48.6, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [19.5, 0.0, -19.5, 0.0],
])
FLEX_B = np.array([[0.0], [21.6], [0.0], [0.0]])
FLEX_C = np.array([
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
])
FLEX_PHI = Nonlinearity(4, (PhiTerm(out=3, gain=3.3, func="sin", src=2),))
FLEX_RHO = 3.3
# Published feedback row; the closed loop is A - B K_PRINTED (see K_SIGN).
FLEX_K_PRINTED = np.array([[7.8428, 1.1212, -4.3666, 1.1243]])
FLEX_K_SIGN = -1.0
FLEX_L = np.array([
    [9.3334, 1.0001],
    [-48.7804, 22.3665],
    [-0.0524, 3.3194],
    [19.4066, -0.3167],
])


@dataclass(frozen=True)
class FlexibleLinkBenchmark:
    A: np.ndarray = field(default_factory=lambda: FLEX_A.copy())
    B: np.ndarray = field(default_factory=lambda: FLEX_B.copy())
    C: np.ndarray = field(default_factory=lambda: FLEX_C.copy())
    K_printed: np.ndarray = field(default_factory=lambda: FLEX_K_PRINTED.copy())
    K_sign: float = FLEX_K_SIGN
    L: np.ndarray = field(default_factory=lambda: FLEX_L.copy())
    phi: Nonlinearity = FLEX_PHI
    rho: float = FLEX_RHO

    @property
    def K(self) -> np.ndarray:
        """Gain in the ``u = K xhat`` convention."""
        return self.K_sign * self.K_printed

    def plant(self) -> LipschitzAffinePlant:
        return flexible_link_plant()

    def controller(self) -> LinearController:
        return LinearController(self.K, NodePartition.singletons(1))

    def observer(self) -> LuenbergerObserver:
        return LuenbergerObserver(self.L, self.C, NodePartition.singletons(2))


def flexible_link_plant() -> LipschitzAffinePlant:
    return LipschitzAffinePlant(
        FLEX_A, FLEX_B, FLEX_C, FLEX_PHI, FLEX_RHO,
        NodePartition.singletons(1), NodePartition.singletons(2), name="flexible-link",
    )


def double_integrator_plant() -> LipschitzAffinePlant:
    return LipschitzAffinePlant(
        np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]), np.array([[1.0, 0.0]]),
        Nonlinearity(2), 0.0, NodePartition.singletons(1), NodePartition.singletons(1),
        name="double-integrator",
    )


def scalar_linear_plant() -> LipschitzAffinePlant:
    return LipschitzAffinePlant(
        np.array([[-1.0]]), np.array([[1.0]]), np.array([[1.0]]),
        Nonlinearity(1), 0.0, NodePartition.singletons(1), NodePartition.singletons(1),
        name="scalar-linear",
    )


MODEL_REGISTRY: dict[str, Callable[[], LipschitzAffinePlant]] = {
    "flexible-link": flexible_link_plant,
    "double-integrator": double_integrator_plant,
    "scalar-linear": scalar_linear_plant,
}


def builtin_plant(name: str) -> LipschitzAffinePlant:
    try:
        return MODEL_REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {', '.join(sorted(MODEL_REGISTRY))}") from None


__all__ = [
    "NodePartition", "PhiTerm", "Nonlinearity", "LipschitzAffinePlant", "LinearController",
    "LuenbergerObserver", "FlexibleLinkBenchmark", "plant_dynamics", "observer_dynamics",
    "controller_eval", "controller_eval_node", "phi_lipschitz_check", "builtin_plant",
    "MODEL_REGISTRY", "as_vec",
]
