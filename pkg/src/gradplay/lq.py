"""Two-player discrete-time linear-quadratic dynamic games.

Dynamics ``z(t+1) = A z(t) + B_1 u_1(t) + B_2 u_2(t)`` with feedback policies
``u_i = -K_i z``.  Player i pays ``sum_t z'Q_i z + u_i'R_i u_i`` from an
initial state whose second moment is ``Z0``, i.e. ``trace(P_i Z0)`` where

    P_i = A_cl' P_i A_cl + K_i' R_i K_i + Q_i,   A_cl = A - B_1 K_1 - B_2 K_2.

Every numerical routine works on stacks of games (leading batch axis) so a
census of a thousand sampled games runs as a handful of array operations;
the single-game functions are thin wrappers over the batched kernels.

The joint gain vector is ``(K_1[0,0], K_1[0,1], K_2[0,0], K_2[0,1])``.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import sqrtm

from .errors import ConditioningError, InvalidParameterError, SolverFailure

# fixed experiment matrices for the sampled census
CENSUS_B1 = np.array([[1.0], [1.0]])
CENSUS_B2 = np.array([[0.0], [1.0]])
CENSUS_Q1 = np.diag([0.01, 1.0])
CENSUS_R1 = 0.01


def z0_matrix(spec="identity") -> np.ndarray:
    """Initial-state second moment from a config value.

    ``"ones"`` is the deterministic start ``z(0) = (1, 1)`` (so ``Z0 = z0 z0'``);
    ``"identity"`` is an isotropic random start with ``E[z0 z0'] = I``.
    A 2x2 nested list (or its JSON text) is taken verbatim.
    """
    if isinstance(spec, str) and spec.lstrip().startswith("["):
        spec = json.loads(spec)
    if isinstance(spec, str):
        if spec == "ones":
            return np.ones((2, 2))
        if spec == "identity":
            return np.eye(2)
        raise InvalidParameterError(f"unknown z0 spec {spec!r}")
    Z = np.asarray(spec, dtype=float)
    if Z.shape != (2, 2) or not np.allclose(Z, Z.T) or np.linalg.eigvalsh(Z).min() < -1e-12:
        raise InvalidParameterError("z0 must be a symmetric PSD 2x2 matrix")
    return Z


@dataclass(frozen=True, eq=False)
class LqGame:
    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    R1: float
    R2: float
    Z0: np.ndarray = field(default_factory=lambda: z0_matrix("identity"))

    def __post_init__(self):
        for name in ("A", "B1", "B2", "Q1", "Q2", "Z0"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        object.__setattr__(self, "R1", float(self.R1))
        object.__setattr__(self, "R2", float(self.R2))
        for name in ("Q1", "Q2"):
            Q = getattr(self, name)
            if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() <= 0:
                raise InvalidParameterError(f"{name} must be symmetric positive definite")
        if self.R1 <= 0 or self.R2 <= 0:
            raise InvalidParameterError("R1 and R2 must be positive")
        if not np.allclose(self.Z0, self.Z0.T) or np.linalg.eigvalsh(self.Z0).min() < -1e-12:
            raise InvalidParameterError("Z0 must be symmetric positive semidefinite")

    @classmethod
    def census(cls, A, q: float, r: float, Z0=None) -> "LqGame":
        return cls(A, CENSUS_B1, CENSUS_B2, CENSUS_Q1, np.diag([1.0, q]), CENSUS_R1, r,
                   z0_matrix("identity") if Z0 is None else Z0)


@dataclass(frozen=True)
class FeedbackPolicy:
    K1: np.ndarray
    K2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K1", np.array(self.K1, dtype=float).reshape(1, -1))
        object.__setattr__(self, "K2", np.array(self.K2, dtype=float).reshape(1, -1))

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.K1.ravel(), self.K2.ravel()])

    @classmethod
    def from_vector(cls, k) -> "FeedbackPolicy":
        k = np.asarray(k, dtype=float)
        half = k.size // 2
        return cls(k[:half], k[half:])


@dataclass(frozen=True)
class LqNashSolution:
    policy: FeedbackPolicy
    P1: np.ndarray
    P2: np.ndarray
    iterations: int
    residuals: tuple[float, float]
    gradient_norm: float


@dataclass
class CensusResult:
    q: float
    r: float
    samples: int
    strict_saddle: int
    lase: int
    degenerate_or_failed: int
    failed: int
    seed: int | None = None
    records: list[dict] | None = None

    @property
    def counts(self) -> dict[str, int]:
        return {
            "strict_saddle": self.strict_saddle,
            "lase": self.lase,
            "degenerate_or_failed": self.degenerate_or_failed,
        }

    @property
    def frequency(self) -> float:
        valid = self.samples - self.failed
        return self.strict_saddle / valid if valid else float("nan")


@dataclass
class SweepPoint:
    vary: str
    value: float
    q: float
    r: float
    results: list[CensusResult]

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([c.frequency for c in self.results])

    @property
    def mean_frequency(self) -> float:
        return float(np.mean(self.frequencies))

    @property
    def ci(self) -> tuple[float, float]:
        f = self.frequencies
        if f.size < 2:
            return self.mean_frequency, self.mean_frequency
        half = 1.96 * float(np.std(f, ddof=1)) / math.sqrt(f.size)
        return self.mean_frequency - half, self.mean_frequency + half

    @property
    def failures(self) -> int:
        return sum(c.failed for c in self.results)


# --- batched kernels -------------------------------------------------------

def _T(M):
    return np.swapaxes(M, -1, -2)


def _spectral_radius(M):
    if M.shape[-2:] == (2, 2):
        half_tr = 0.5 * (M[..., 0, 0] + M[..., 1, 1])
        det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
        # ((a-d)/2)^2 + bc equals half_tr^2 - det without the cancellation
        disc = (0.5 * (M[..., 0, 0] - M[..., 1, 1])) ** 2 + M[..., 0, 1] * M[..., 1, 0]
        root = np.sqrt(np.abs(disc))
        real = np.abs(half_tr) + root
        return np.where(disc >= 0, real, np.sqrt(np.abs(det)))
    return np.max(np.abs(np.linalg.eigvals(M)), axis=-1)


def _dlyap2(A, Q):
    # symmetric 2x2 Stein equation as a 3x3 system in (x11, x12, x22), Cramer's rule
    a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    m = [[1 - a * a, -2 * a * b, -b * b],
         [-a * c, 1 - (a * d + b * c), -b * d],
         [-c * c, -2 * c * d, 1 - d * d]]
    rhs = [Q[..., 0, 0], 0.5 * (Q[..., 0, 1] + Q[..., 1, 0]), Q[..., 1, 1]]

    def det3(c0, c1, c2):
        return (c0[0] * (c1[1] * c2[2] - c1[2] * c2[1])
                - c1[0] * (c0[1] * c2[2] - c0[2] * c2[1])
                + c2[0] * (c0[1] * c1[2] - c0[2] * c1[1]))

    cols = [[m[r][k] for r in range(3)] for k in range(3)]
    det = det3(*cols)
    x = det3(rhs, cols[1], cols[2]) / det
    y = det3(cols[0], rhs, cols[2]) / det
    z = det3(cols[0], cols[1], rhs) / det
    X = np.empty(np.broadcast_shapes(A.shape, Q.shape))
    X[..., 0, 0] = x
    X[..., 0, 1] = X[..., 1, 0] = y
    X[..., 1, 1] = z
    return X


def _dlyap(A, Q):
    """Solve ``X = A X A' + Q`` for symmetric ``Q``."""
    if A.shape[-2:] == (2, 2):
        return _dlyap2(A, Q)
    n = A.shape[-1]
    kron = np.einsum("...ij,...kl->...ikjl", A, A).reshape(A.shape[:-2] + (n * n, n * n))
    lhs = np.eye(n * n) - kron
    x = np.linalg.solve(lhs, Q.reshape(Q.shape[:-2] + (n * n, 1)))
    X = x.reshape(Q.shape)
    return 0.5 * (X + _T(X))


def _inv(M):
    # closed form for the 2x2 stacks that dominate the census; LAPACK otherwise
    if M.shape[-2:] != (2, 2):
        return np.linalg.inv(M)
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    det = a * d - b * c
    out = np.empty_like(M)
    out[..., 0, 0] = d / det
    out[..., 0, 1] = -b / det
    out[..., 1, 0] = -c / det
    out[..., 1, 1] = a / det
    return out


def _sda(A, B, Q, R, max_iters=100, tol=1e-15):
    """Structure-preserving doubling for the DARE, batched.

    Returns ``(P, ok)``; ``ok`` is False where the iteration blew up or stalled.
    """
    R = np.asarray(R, dtype=float)
    Rinv = (1.0 / R)[..., None, None] if R.ndim <= 1 else np.linalg.inv(R)
    batch = np.broadcast_shapes(A.shape[:-2], B.shape[:-2], Q.shape[:-2], R.shape[:1] if R.ndim else ())
    n = A.shape[-1]
    Ak = np.array(np.broadcast_to(A, batch + (n, n)), dtype=float).reshape(-1, n, n)
    Bf = np.broadcast_to(B, batch + B.shape[-2:]).reshape(-1, n, B.shape[-1])
    Rf = np.broadcast_to(Rinv, batch + Rinv.shape[-2:]).reshape((-1,) + Rinv.shape[-2:])
    G = Bf @ (Rf * _T(Bf)) if R.ndim <= 1 else Bf @ Rf @ _T(Bf)
    H = np.array(np.broadcast_to(Q, batch + (n, n)), dtype=float).reshape(-1, n, n)
    P = np.full_like(H, np.nan)
    ok = np.zeros(H.shape[0], dtype=bool)
    live = np.arange(H.shape[0])
    I = np.eye(n)
    with np.errstate(all="ignore"):
        for _ in range(max_iters):
            Winv = _inv(I + G @ H)
            WA = Winv @ Ak
            H_new = H + _T(Ak) @ H @ WA
            G = G + Ak @ Winv @ G @ _T(Ak)
            Ak = Ak @ WA
            change = np.max(np.abs(H_new - H), axis=(-2, -1))
            scale = np.max(np.abs(H_new), axis=(-2, -1))
            H = H_new
            finite = np.isfinite(scale)
            done = finite & (change <= tol * np.maximum(1.0, scale))
            P[live[done]] = H[done]
            ok[live[done]] = True
            keep = finite & ~done
            if not keep.any():
                break
            if not keep.all():
                live, H, G, Ak = live[keep], H[keep], G[keep], Ak[keep]
    P = 0.5 * (P + _T(P))
    return P.reshape(batch + (n, n)), ok.reshape(batch)


def _best_response_gain(A, B, P, R):
    S = R[..., None, None] + _T(B) @ P @ B
    if S.shape[-1] == 1:
        return (_T(B) @ P @ A) / S
    return np.linalg.solve(S, _T(B) @ P @ A)


def _dare_residual(A, B, Q, R, P):
    K = _best_response_gain(A, B, P, R)
    res = Q + _T(A) @ P @ A - _T(A) @ P @ B @ K - P
    return np.max(np.abs(res), axis=(-2, -1)) / np.maximum(1.0, np.max(np.abs(P), axis=(-2, -1)))


def _value_matrices(A, B1, B2, Q1, Q2, R1, R2, K1, K2):
    Acl = A - B1 @ K1 - B2 @ K2
    P1 = _dlyap(_T(Acl), Q1 + _T(K1) * R1[..., None, None] @ K1)
    P2 = _dlyap(_T(Acl), Q2 + _T(K2) * R2[..., None, None] @ K2)
    return Acl, P1, P2


def _omega_batch(A, B1, B2, Q1, Q2, R1, R2, Z0, k):
    """Stacked policy gradients at joint gains ``k`` (shape ``(..., 4)``)."""
    K1 = k[..., None, 0:2]
    K2 = k[..., None, 2:4]
    Acl, P1, P2 = _value_matrices(A, B1, B2, Q1, Q2, R1, R2, K1, K2)
    X = _dlyap(Acl, np.broadcast_to(Z0, Acl.shape))
    g1 = 2.0 * (R1[..., None, None] * K1 - _T(B1) @ P1 @ Acl) @ X
    g2 = 2.0 * (R2[..., None, None] * K2 - _T(B2) @ P2 @ Acl) @ X
    return np.concatenate([g1[..., 0, :], g2[..., 0, :]], axis=-1), _spectral_radius(Acl)


def _jacobian_batch(A, B1, B2, Q1, Q2, R1, R2, Z0, k, h):
    """Central-difference Jacobian of the stacked gradient; also reports
    whether every perturbed closed loop stayed stable."""
    N = k.shape[0]
    cols = []
    stable = np.ones(N, dtype=bool)
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        gp, rp = _omega_batch(A, B1, B2, Q1, Q2, R1, R2, Z0, k + e)
        gm, rm = _omega_batch(A, B1, B2, Q1, Q2, R1, R2, Z0, k - e)
        stable &= (rp < 1) & (rm < 1)
        cols.append((gp - gm) / (2 * h))
    return np.stack(cols, axis=-1), stable


def _lyapunov_iterations_batch(A, B1, B2, Q1, Q2, R1, R2, tol=1e-10, max_iters=500):
    """Alternating best responses, batched.  Returns ``(K1, K2, iters, ok)``."""
    N = A.shape[0]
    K1 = np.zeros((N, 1, 2))
    K2 = np.zeros((N, 1, 2))
    iters = np.zeros(N, dtype=int)
    active = np.ones(N, dtype=bool)
    ok = np.zeros(N, dtype=bool)
    with np.errstate(all="ignore"):
        for it in range(1, max_iters + 1):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            a, b1, b2 = A[idx], B1[idx], B2[idx]
            A1 = a - b2 @ K2[idx]
            P1, ok1 = _sda(A1, b1, Q1[idx], R1[idx])
            K1n = _best_response_gain(A1, b1, P1, R1[idx])
            A2 = a - b1 @ K1n
            P2, ok2 = _sda(A2, b2, Q2[idx], R2[idx])
            K2n = _best_response_gain(A2, b2, P2, R2[idx])
            change = np.maximum(
                np.max(np.abs(K1n - K1[idx]), axis=(-2, -1)),
                np.max(np.abs(K2n - K2[idx]), axis=(-2, -1)),
            )
            K1[idx], K2[idx] = K1n, K2n
            iters[idx] = it
            broken = ~(ok1 & ok2) | ~np.isfinite(change)
            conv = (change <= tol) & ~broken
            ok[idx[conv]] = True
            active[idx[conv | broken]] = False
    return K1, K2, iters, ok


def _newton_polish_batch(A, B1, B2, Q1, Q2, R1, R2, Z0, k0, max_iters=50, tol=1e-10,
                         h=1e-6, max_halvings=30):
    """Damped Newton on the stacked gradient from gains ``k0``, batched.

    Steps are halved until the gradient norm decreases with the closed loop
    still stable.  Returns ``(k, ok)``.
    """
    args = (A, B1, B2, Q1, Q2, R1, R2, Z0)
    k = np.array(k0, dtype=float)
    N = k.shape[0]
    ok = np.zeros(N, dtype=bool)
    active = np.ones(N, dtype=bool)
    with np.errstate(all="ignore"):
        g, rho = _omega_batch(*args, k)
        norm = np.linalg.norm(g, axis=-1)
        active &= (rho < 1) & np.isfinite(norm)
        for _ in range(max_iters):
            ok |= active & (norm <= tol)
            active &= ~ok
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            sub = tuple(x[idx] for x in args)
            J, _ = _jacobian_batch(*sub, k[idx], h)
            bad = ~np.all(np.isfinite(J), axis=(-2, -1))
            J[bad] = np.eye(4)
            d = -np.einsum("nij,nj->ni", np.linalg.pinv(J), g[idx])
            step = np.ones(idx.size)
            accepted = np.zeros(idx.size, dtype=bool)
            for _ in range(max_halvings):
                todo = np.flatnonzero(~accepted)
                if todo.size == 0:
                    break
                trial = k[idx[todo]] + step[todo, None] * d[todo]
                gt, rt = _omega_batch(*(x[todo] for x in sub), trial)
                nt = np.linalg.norm(gt, axis=-1)
                better = (rt < 1) & (nt < norm[idx[todo]])
                sel = todo[better]
                k[idx[sel]] = trial[better]
                g[idx[sel]] = gt[better]
                norm[idx[sel]] = nt[better]
                accepted[sel] = True
                step[todo[~better]] /= 2
            active[idx[~accepted | bad]] = False
    return k, ok


def _is_best_response(A, B1, B2, Q1, Q2, R1, R2, k, tol=1e-6):
    """Check each gain against the exact best response to the other's gain."""
    K1 = k[:, None, 0:2]
    K2 = k[:, None, 2:4]
    out = np.ones(k.shape[0], dtype=bool)
    with np.errstate(all="ignore"):
        for Ae, B, Q, R, K in ((A - B2 @ K2, B1, Q1, R1, K1), (A - B1 @ K1, B2, Q2, R2, K2)):
            P, ok = _sda(Ae, B, Q, R)
            Kbr = _best_response_gain(Ae, B, P, R)
            err = np.max(np.abs(Kbr - K), axis=(-2, -1))
            out &= ok & (err <= tol * np.maximum(1.0, np.max(np.abs(K), axis=(-2, -1))))
    return out


def _solve_nash_batch(A, B1, B2, Q1, Q2, R1, R2, Z0, tol=1e-10, max_iters=500, polish=True):
    """Lyapunov iterations, with a Newton polish for the games where they fail.

    Returns ``(k, iters, ok, polished)`` with ``k`` the joint gains.
    """
    K1, K2, iters, ok = _lyapunov_iterations_batch(A, B1, B2, Q1, Q2, R1, R2, tol, max_iters)
    k = np.concatenate([K1[:, 0, :], K2[:, 0, :]], axis=-1)
    polished = np.zeros_like(ok)
    if not polish or ok.all():
        return k, iters, ok, polished
    fail = np.flatnonzero(~ok)
    sub = tuple(x[fail] for x in (A, B1, B2, Q1, Q2, R1, R2, Z0))
    starts = [k[fail]]
    with np.errstate(all="ignore"):
        # each player's solo regulator with the other passive
        for B, Q, R, cols in ((sub[1], sub[3], sub[5], slice(0, 2)), (sub[2], sub[4], sub[6], slice(2, 4))):
            P, _ = _sda(sub[0], B, Q, R)
            s = np.zeros((fail.size, 4))
            s[:, cols] = _best_response_gain(sub[0], B, P, R)[:, 0, :]
            starts.append(s)
    # all starts in one stacked batch; the earliest start that lands wins
    n_starts = len(starts)
    k0 = np.concatenate(starts)
    owner = np.tile(np.arange(fail.size), n_starts)
    usable = np.all(np.isfinite(k0), axis=-1)
    rows = np.flatnonzero(usable)
    sub_s = tuple(x[owner[rows]] for x in sub)
    kk, conv = _newton_polish_batch(*sub_s, k0[rows])
    conv[conv] = _is_best_response(*(x[conv] for x in sub_s[:7]), kk[conv])
    for row in np.flatnonzero(conv):
        i = fail[owner[rows[row]]]
        if not ok[i]:
            k[i] = kk[row]
            ok[i] = True
            polished[i] = True
    return k, iters, ok, polished


def _stack(games: list[LqGame]):
    A = np.stack([g.A for g in games])
    B1 = np.stack([g.B1 for g in games])
    B2 = np.stack([g.B2 for g in games])
    Q1 = np.stack([g.Q1 for g in games])
    Q2 = np.stack([g.Q2 for g in games])
    R1 = np.array([g.R1 for g in games])
    R2 = np.array([g.R2 for g in games])
    Z0 = np.stack([g.Z0 for g in games])
    return A, B1, B2, Q1, Q2, R1, R2, Z0


# --- controllability tests -------------------------------------------------

def is_stabilizable(A, B, tol=1e-9) -> bool:
    """PBH test: rank [A - lambda I, B] = n for every |lambda| >= 1."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1 - tol:
            M = np.hstack([A - lam * np.eye(n), B])
            if np.linalg.matrix_rank(M, tol=tol * max(1.0, np.abs(M).max())) < n:
                return False
    return True


def is_detectable(A, C, tol=1e-9) -> bool:
    return is_stabilizable(np.asarray(A).T, np.asarray(C).T, tol)


def _stabilizable_detectable(A, B, Q) -> bool:
    return is_stabilizable(A, B) and is_detectable(A, np.real(sqrtm(Q)))


# --- single-game operations ------------------------------------------------

def solve_dare_best_response(A_eff, B, Q, R: float, tol: float = 1e-10, max_iters: int = 100):
    """Single-player LQR against fixed opponent gains.

    Returns ``(K, P)`` with ``P`` the stabilizing DARE solution and
    ``K = (R + B'PB)^-1 B'P A_eff``.
    """
    A_eff = np.asarray(A_eff, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A_eff.shape[0], -1)
    Q = np.asarray(Q, dtype=float)
    if not is_stabilizable(A_eff, B):
        raise SolverFailure("(A_eff, B) is not stabilizable", residual=float("inf"))
    Rb = np.array([float(R)])
    P, ok = _sda(A_eff[None], B[None], Q[None], Rb, max_iters=max_iters)
    res = float(_dare_residual(A_eff[None], B[None], Q[None], Rb, P)[0]) if ok[0] else float("inf")
    if not ok[0] or res > tol:
        raise SolverFailure(f"DARE iteration did not converge (residual {res:.3g})", residual=res)
    K = _best_response_gain(A_eff[None], B[None], P, Rb)[0]
    return K, P[0]


def state_covariance(A_cl, Z0) -> np.ndarray:
    """``X = sum_t A_cl^t Z0 (A_cl')^t``, the solution of ``X = A_cl X A_cl' + Z0``."""
    A_cl = np.asarray(A_cl, dtype=float)
    if _spectral_radius(A_cl) >= 1:
        raise InvalidParameterError("closed loop is not Schur stable")
    return _dlyap(A_cl, np.asarray(Z0, dtype=float))


def policy_cost(game: LqGame, policy: FeedbackPolicy, player: int) -> float:
    """Exact cost ``trace(P_i Z0)``."""
    Acl = game.A - game.B1 @ policy.K1 - game.B2 @ policy.K2
    if _spectral_radius(Acl) >= 1:
        raise InvalidParameterError("closed loop is not Schur stable")
    K, Q, R = (policy.K1, game.Q1, game.R1) if player == 0 else (policy.K2, game.Q2, game.R2)
    P = _dlyap(Acl.T, Q + R * K.T @ K)
    return float(np.trace(P @ game.Z0))


def lq_policy_gradient(game: LqGame, policy: FeedbackPolicy, player: int) -> np.ndarray:
    """Gradient of ``trace(P_i Z0)`` with respect to ``K_i`` (shape 1x2).

    Equals ``2 (R_i K_i + B_i'P_i(B_1K_1 + B_2K_2) - B_i'P_i A) X`` with ``X``
    the state covariance of the closed loop.
    """
    if player not in (0, 1):
        raise InvalidParameterError(f"player must be 0 or 1, got {player}")
    A, B1, B2, Q1, Q2, R1, R2, Z0 = _stack([game])
    g, rho = _omega_batch(A, B1, B2, Q1, Q2, R1, R2, Z0, policy.vector[None])
    if rho[0] >= 1:
        raise InvalidParameterError("closed loop is not Schur stable")
    return g[0, 2 * player:2 * player + 2].reshape(1, 2)


def lq_omega(game: LqGame, policy: FeedbackPolicy) -> np.ndarray:
    """Both players' gradients stacked into the 4-vector ``omega(K_1, K_2)``."""
    return np.concatenate([lq_policy_gradient(game, policy, i).ravel() for i in (0, 1)])


def lq_game_jacobian(game: LqGame, policy: FeedbackPolicy, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of ``lq_omega`` at ``policy`` (4x4)."""
    args = _stack([game])
    k = policy.vector[None]
    for step in (h, h / 10):
        J, stable = _jacobian_batch(*args, k, step)
        if stable[0]:
            return J[0]
    raise ConditioningError(f"perturbations of size {h / 10:g} destabilize the closed loop")


def lyapunov_iterations(game: LqGame, tol: float = 1e-10, max_iters: int = 500,
                        grad_tol: float = 1e-6, polish: bool = True) -> LqNashSolution:
    """Feedback Nash gains by alternating Riccati best responses.

    Player 1 responds first against ``K_2 = 0``.  If the gains have not
    settled after ``max_iters`` rounds and ``polish`` is set, damped Newton
    on the stacked gradient is tried from the last iterate and from each
    player's solo regulator; a root is accepted only if both gains are exact
    best responses.  The value matrices are then recomputed from the coupled
    Lyapunov equations.
    """
    if not (_stabilizable_detectable(game.A, game.B1, game.Q1)
            or _stabilizable_detectable(game.A, game.B2, game.Q2)):
        raise SolverFailure("neither (A, B_i, sqrt(Q_i)) is stabilizable-detectable")
    k, iters, ok, _ = _solve_nash_batch(*_stack([game]), tol=tol, max_iters=max_iters, polish=polish)
    if not ok[0]:
        raise SolverFailure(f"Lyapunov iterations did not converge in {iters[0]} iterations")
    policy = FeedbackPolicy.from_vector(k[0])
    sol = _finish_solution(game, policy, int(iters[0]))
    if sol.gradient_norm > grad_tol:
        raise SolverFailure(f"gradient norm {sol.gradient_norm:.3g} at the fixed point",
                            residual=sol.gradient_norm)
    return sol


def _finish_solution(game, policy, iterations):
    A, B1, B2, Q1, Q2, R1, R2, Z0 = _stack([game])
    K1, K2 = policy.K1[None], policy.K2[None]
    Acl, P1, P2 = _value_matrices(A, B1, B2, Q1, Q2, R1, R2, K1, K2)
    if _spectral_radius(Acl)[0] >= 1:
        raise SolverFailure("Nash gains do not stabilize the closed loop")
    residuals = tuple(
        float(np.max(np.abs(P - (_T(Acl) @ P @ Acl + _T(K) * R[..., None, None] @ K + Q))))
        for P, K, R, Q in ((P1, K1, R1, Q1), (P2, K2, R2, Q2))
    )
    g, _ = _omega_batch(A, B1, B2, Q1, Q2, R1, R2, Z0, policy.vector[None])
    return LqNashSolution(policy, P1[0], P2[0], iterations, residuals, float(np.linalg.norm(g[0])))


def riccati_residuals(game: LqGame, sol: LqNashSolution) -> tuple[float, float]:
    """Independent substitution of ``(K, P)`` into the coupled Lyapunov equations."""
    Acl = game.A - game.B1 @ sol.policy.K1 - game.B2 @ sol.policy.K2
    out = []
    for P, K, R, Q in ((sol.P1, sol.policy.K1, game.R1, game.Q1),
                       (sol.P2, sol.policy.K2, game.R2, game.Q2)):
        out.append(float(np.max(np.abs(P - (Acl.T @ P @ Acl + R * K.T @ K + Q)))))
    return tuple(out)


# --- census ----------------------------------------------------------------

STRICT_SADDLE, LASE, DEGENERATE, FAILED = "strict_saddle", "lase", "degenerate", "failed"


def classify_spectrum(J: np.ndarray, rel_tol: float = 1e-6):
    """Label a gain-space Jacobian by the signs of its eigenvalue real parts."""
    ev = np.linalg.eigvals(J)
    t = rel_tol * (1 + np.max(np.abs(J)))
    re = ev.real
    if re.min() < -t and re.max() > t and not np.any(np.abs(re) <= t):
        return STRICT_SADDLE, ev
    if re.min() > t:
        return LASE, ev
    return DEGENERATE, ev


def census_batch(games: list[LqGame] | None = None, *, arrays=None, h: float = 1e-5,
                 tol: float = 1e-10, max_iters: int = 500, grad_tol: float = 1e-6,
                 rel_tol: float = 1e-6, polish: bool = True):
    """Solve and classify a stack of games.

    Returns one dict per game with keys ``label``, ``K`` (joint gains or
    None), ``eig_min``, ``eig_max``, ``gradient_norm``, ``iterations`` and
    ``polished`` (Nash point recovered by Newton after the iterations failed).
    """
    A, B1, B2, Q1, Q2, R1, R2, Z0 = arrays if arrays is not None else _stack(games)
    N = A.shape[0]
    k, iters, ok, polished = _solve_nash_batch(A, B1, B2, Q1, Q2, R1, R2, Z0, tol, max_iters, polish)
    labels = np.array([FAILED] * N, dtype=object)
    eig_min = np.full(N, np.nan)
    eig_max = np.full(N, np.nan)
    gnorm = np.full(N, np.nan)

    idx = np.flatnonzero(ok)
    if idx.size:
        sub = tuple(x[idx] for x in (A, B1, B2, Q1, Q2, R1, R2, Z0))
        with np.errstate(all="ignore"):
            g, rho = _omega_batch(*sub, k[idx])
            gnorm[idx] = np.linalg.norm(g, axis=-1)
            good = (rho < 1) & (gnorm[idx] <= grad_tol)
            J, stable = _jacobian_batch(*sub, k[idx], h)
            retry = np.flatnonzero(good & ~stable)
            if retry.size:
                sub_r = tuple(x[retry] for x in sub)
                J_r, stable_r = _jacobian_batch(*sub_r, k[idx][retry], h / 10)
                J[retry] = J_r
                stable[retry] = stable_r
            good &= stable & np.all(np.isfinite(J), axis=(-2, -1))
        for j, gi in enumerate(idx):
            if not good[j]:
                continue
            label, ev = classify_spectrum(J[j], rel_tol)
            labels[gi] = label
            eig_min[gi] = ev.real.min()
            eig_max[gi] = ev.real.max()
    return [
        {
            "label": labels[i],
            "K": k[i].tolist() if labels[i] != FAILED else None,
            "eig_min": float(eig_min[i]),
            "eig_max": float(eig_max[i]),
            "gradient_norm": float(gnorm[i]),
            "iterations": int(iters[i]),
            "polished": bool(polished[i]),
        }
        for i in range(N)
    ]


def sample_census(q: float, r: float, samples: int = 1000, seed: int = 0, *,
                  z0="identity", h: float = 1e-5, keep_records: bool = False,
                  **solver_kw) -> CensusResult:
    """Fraction of randomly sampled LQ games whose Nash gains are strict saddles.

    ``A`` has i.i.d. uniform(0, 1) entries; the other matrices are the fixed
    census values with ``Q_2 = diag(1, q)`` and ``R_2 = r``.  Failed solves
    are counted separately and excluded from the frequency.
    """
    if not (q > 0 and r > 0):
        raise InvalidParameterError("q and r must be positive")
    if samples < 1:
        raise InvalidParameterError("samples must be at least 1")
    rng = np.random.default_rng(seed)
    A = rng.uniform(0.0, 1.0, size=(samples, 2, 2))
    Z0 = z0_matrix(z0)
    arrays = (
        A,
        np.broadcast_to(CENSUS_B1, (samples, 2, 1)),
        np.broadcast_to(CENSUS_B2, (samples, 2, 1)),
        np.broadcast_to(CENSUS_Q1, (samples, 2, 2)),
        np.broadcast_to(np.diag([1.0, q]), (samples, 2, 2)),
        np.full(samples, CENSUS_R1),
        np.full(samples, float(r)),
        np.broadcast_to(Z0, (samples, 2, 2)),
    )
    records = census_batch(arrays=arrays, h=h, **solver_kw)
    labels = [rec["label"] for rec in records]
    failed = labels.count(FAILED)
    result = CensusResult(
        q=float(q), r=float(r), samples=samples,
        strict_saddle=labels.count(STRICT_SADDLE),
        lase=labels.count(LASE),
        degenerate_or_failed=labels.count(DEGENERATE) + failed,
        failed=failed,
        seed=seed,
    )
    if keep_records:
        for i, rec in enumerate(records):
            rec["index"] = i
            rec["A"] = A[i].tolist()
        result.records = records
    return result


def derived_seed(seed: int, grid_index: int, repeat: int) -> int:
    return int(np.random.SeedSequence([seed, grid_index, repeat]).generate_state(1)[0])


def _census_task(args):
    q, r, samples, seed, kw = args
    return sample_census(q, r, samples, seed, **kw)


def max_workers() -> int:
    cap = os.environ.get("GRADPLAY_WORKERS")
    n = os.cpu_count() or 1
    return max(1, min(n, int(cap))) if cap else n


def census_sweep(vary: str, grid, fixed_other: float, samples: int = 1000, repeats: int = 10,
                 seed: int = 0, workers: int | None = None, **census_kw) -> list[SweepPoint]:
    """Repeat independent censuses along a grid of q or r values."""
    if vary not in ("q", "r"):
        raise InvalidParameterError(f"vary must be 'q' or 'r', got {vary!r}")
    grid = [float(v) for v in grid]
    if any(not 0 < v < 1 for v in grid):
        raise InvalidParameterError("grid values must lie in (0, 1)")
    if repeats < 1:
        raise InvalidParameterError("repeats must be at least 1")
    tasks = []
    for gi, v in enumerate(grid):
        q, r = (v, fixed_other) if vary == "q" else (fixed_other, v)
        for rep in range(repeats):
            tasks.append((q, r, samples, derived_seed(seed, gi, rep), census_kw))
    workers = workers or max_workers()
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_census_task, tasks))
    else:
        results = [_census_task(t) for t in tasks]
    points = []
    for gi, v in enumerate(grid):
        chunk = results[gi * repeats:(gi + 1) * repeats]
        points.append(SweepPoint(vary, v, chunk[0].q, chunk[0].r, chunk))
    return points
