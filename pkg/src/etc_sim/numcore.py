"""Small dense linear algebra, fixed-step integration and event localization.

Everything here is sized for the benchmark class of problems (n <= 8), so the
algorithms favour simplicity over asymptotic cost.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import Indeterminate, NoSignChange, NonFiniteDerivative, SingularLyapunov

VectorField = Callable[[float, np.ndarray], np.ndarray]

DEFAULT_DT = 1e-3
DEFAULT_EVENT_TOL = 1e-6


def as_vec(v) -> np.ndarray:
    """Coerce to a 1-D float array, rejecting NaN/Inf."""
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"expected a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite entries")
    return arr


def as_mat(m, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"expected a non-empty matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    if rows is not None and arr.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"expected {cols} columns, got {arr.shape[1]}")
    return arr


def norm_one(v) -> float:
    return float(np.sum(np.abs(v)))


def norm_two(v) -> float:
    v = np.ravel(np.asarray(v, dtype=float))
    sq = float(np.dot(v, v))
    if 1e-290 < sq < 1e290:
        return math.sqrt(sq)
    # squares under- or overflowed; hypot rescales
    return math.hypot(*v)


def norm_inf(v) -> float:
    v = np.ravel(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


def rk4_step(f: VectorField, t: float, x: np.ndarray, h: float) -> np.ndarray:
    """Advance ``x`` by one classical fourth-order Runge-Kutta step of size ``h``."""
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = f(t, x)
        k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(t + h, x + h * k3)
        out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    # a non-finite stage always propagates into the update
    if not np.isfinite(out).all():
        raise NonFiniteDerivative(f"non-finite stage derivative near t={t}")
    return out


def locate_event(
    g: Callable[[float], float],
    t_lo: float,
    t_hi: float,
    tol: float = DEFAULT_EVENT_TOL,
) -> float:
    """Bisect for the instant where ``g`` turns positive.

    Requires ``g(t_lo) <= 0 < g(t_hi)``. The returned time is the right end of the
    final bracket, so ``g`` is positive there and non-positive at most ``tol``
    earlier. A reversed bracket (positive on the left) is handled symmetrically.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    g_lo, g_hi = g(t_lo), g(t_hi)
    if (g_lo > 0 and g_hi > 0) or (g_lo < 0 and g_hi < 0) or (g_lo == 0 and g_hi == 0):
        raise NoSignChange(f"g({t_lo})={g_lo}, g({t_hi})={g_hi}")
    rising = g_hi > 0
    lo, hi = t_lo, t_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if (gm > 0) == rising:
            hi = mid
        else:
            lo = mid
    return hi if rising else lo


def solve_lyapunov(M, Q) -> np.ndarray:
    """Solve ``M^T P + P M = -Q`` for symmetric ``P``.

    The equation is vectorized into an n^2 x n^2 system and solved by LU with
    partial pivoting.
    """
    M = as_mat(M)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("M must be square")
    Q = as_mat(Q, n, n)
    if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max())):
        raise ValueError("Q must be symmetric")
    eye = np.eye(n)
    # column-major vec: vec(M^T P) = (I kron M^T) vec(P), vec(P M) = (M^T kron I) vec(P)
    big = np.kron(eye, M.T) + np.kron(M.T, eye)
    rhs = -Q.reshape(-1, order="F")
    if np.linalg.cond(big) > 1e13:
        raise SingularLyapunov("vectorized Lyapunov operator is (numerically) singular")
    try:
        p = np.linalg.solve(big, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularLyapunov(str(exc)) from exc
    P = p.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    residual = np.abs(M.T @ P + P @ M + Q).max()
    if residual > 1e-10 * np.abs(Q).max():
        raise SingularLyapunov(f"residual {residual:.3e} too large; system is ill-conditioned")
    return P


def _hessenberg(M: np.ndarray) -> np.ndarray:
    H = np.array(M, dtype=complex)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        H[k + 1:, :] -= 2.0 * np.outer(v, v.conj() @ H[k + 1:, :])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v.conj())
    return H


def _wilkinson_shift(a: complex, b: complex, c: complex, d: complex) -> complex:
    # eigenvalue of [[a, b], [c, d]] closer to d
    tr, det = a + d, a * d - b * c
    disc = np.sqrt(tr * tr / 4.0 - det)
    l1, l2 = tr / 2.0 + disc, tr / 2.0 - disc
    return l1 if abs(l1 - d) < abs(l2 - d) else l2


def eigenvalues(M, max_iter: int | None = None) -> np.ndarray:
    """Eigenvalues by shifted QR iteration on the Hessenberg form.

    Raises ``Indeterminate`` after ``500 * n`` iterations without convergence.
    """
    M = as_mat(M)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("M must be square")
    cap = 500 * n if max_iter is None else max_iter
    H = _hessenberg(M)
    eps = np.finfo(float).eps
    scale = max(np.abs(H).max(), 1e-300)
    eigs = []
    hi = n - 1
    iters = 0
    since_deflation = 0
    while hi >= 0:
        if hi == 0:
            eigs.append(H[0, 0])
            break
        lo = hi
        while lo > 0:
            diag = abs(H[lo, lo]) + abs(H[lo - 1, lo - 1])
            if abs(H[lo, lo - 1]) <= eps * (diag if diag > 0 else scale):
                break
            lo -= 1
        if lo == hi:
            eigs.append(H[hi, hi])
            hi -= 1
            since_deflation = 0
            continue
        if iters >= cap:
            raise Indeterminate(f"QR iteration did not converge in {cap} iterations")
        block = H[lo:hi + 1, lo:hi + 1]
        if since_deflation and since_deflation % 11 == 0:
            mu = block[-1, -1] + 0.75 * abs(H[hi, hi - 1]) + 1e-3j * scale
        else:
            mu = _wilkinson_shift(block[-2, -2], block[-2, -1], block[-1, -2], block[-1, -1])
        Qm, Rm = np.linalg.qr(block - mu * np.eye(block.shape[0]))
        H[lo:hi + 1, lo:hi + 1] = Rm @ Qm + mu * np.eye(block.shape[0])
        iters += 1
        since_deflation += 1
    vals = np.array(eigs[::-1], dtype=complex)
    # snap round-off imaginary parts of real eigenvalues
    small = np.abs(vals.imag) <= 1e-10 * max(1.0, scale)
    vals[small] = vals[small].real
    return vals


def is_hurwitz(M) -> bool:
    """True iff every eigenvalue of ``M`` has strictly negative real part."""
    vals = eigenvalues(M)
    scale = max(1.0, float(np.abs(as_mat(M)).max()))
    return bool(np.all(vals.real < -1e-12 * scale))


def spectral_norm(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    try:
        return float(np.linalg.norm(M, 2))
    except np.linalg.LinAlgError as exc:
        raise Indeterminate(str(exc)) from exc


def sym_eig_bounds(P) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    P = as_mat(P)
    try:
        w = np.linalg.eigvalsh(0.5 * (P + P.T))
    except np.linalg.LinAlgError as exc:
        raise Indeterminate(str(exc)) from exc
    return float(w[0]), float(w[-1])
