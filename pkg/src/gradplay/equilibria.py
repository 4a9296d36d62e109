"""Critical points of the gradient field and their classification.

A critical point of ``x' = -omega(x)`` is labelled by

* differential Nash (DNE): ``omega = 0`` and every own-block Hessian
  ``D_i^2 f_i`` is positive definite; non-degenerate (NDDNE) if also
  ``det(D omega) != 0``;
* LASE: every eigenvalue of ``D omega`` has positive real part;
* strict saddle: eigenvalues on both sides of the imaginary axis, none on it.

Points with an eigenvalue on the imaginary axis (within tolerance) are
left unclassified rather than forced into either dynamic class.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .game import Game, StrategyProfile, _values, game_jacobian, make_quadratic_zero_sum, omega


@dataclass(frozen=True)
class CriticalPointSearchConfig:
    seeds: tuple
    newton_max_iters: int = 100
    newton_tol: float = 1e-10
    dedup_radius: float = 1e-6
    max_halvings: int = 30

    def __post_init__(self):
        seeds = tuple(np.asarray(s.values if isinstance(s, StrategyProfile) else s, dtype=float)
                      for s in self.seeds)
        if not seeds:
            raise InvalidParameterError("at least one seed is required")
        if self.newton_tol <= 0 or self.dedup_radius <= 0:
            raise InvalidParameterError("tolerances must be positive")
        if self.dedup_radius <= self.newton_tol:
            raise InvalidParameterError("dedup_radius must exceed newton_tol")
        object.__setattr__(self, "seeds", seeds)


def grid_seeds(lo: float, hi: float, num: int, m: int) -> list[np.ndarray]:
    """Tensor grid of ``num**m`` seeds on ``[lo, hi]^m``."""
    axis = np.linspace(lo, hi, num)
    return [np.array(p) for p in itertools.product(axis, repeat=m)]


def _newton(game: Game, x: np.ndarray, cfg: CriticalPointSearchConfig) -> np.ndarray | None:
    w = omega(game, x)
    norm = np.linalg.norm(w)
    for _ in range(cfg.newton_max_iters):
        if norm <= cfg.newton_tol:
            return x
        J = game_jacobian(game, x)
        if np.linalg.cond(J) < 1e12:
            d = np.linalg.solve(J, -w)
        else:
            # descent direction for |omega|^2 / 2 where Newton is ill-posed
            d = -J.T @ w
            if not np.any(d):
                return None
        step = 1.0
        for _ in range(cfg.max_halvings):
            x_new = x + step * d
            w_new = omega(game, x_new)
            norm_new = np.linalg.norm(w_new)
            if norm_new < norm:
                break
            step /= 2
        else:
            return None
        x, w, norm = x_new, w_new, norm_new
    return x if norm <= cfg.newton_tol else None


def find_critical_points(game: Game, config: CriticalPointSearchConfig) -> list[StrategyProfile]:
    """Damped Newton on ``omega`` from every seed, deduplicated.

    Returns profiles sorted lexicographically; an empty list if no seed
    converges.
    """
    found: list[np.ndarray] = []
    for seed in config.seeds:
        x = _newton(game, np.array(_values(game, seed), dtype=float), config)
        if x is None:
            continue
        if all(np.linalg.norm(x - y) > config.dedup_radius for y in found):
            found.append(x)
    found.sort(key=tuple)
    return [game.profile(x) for x in found]


@dataclass(frozen=True)
class CriticalPointReport:
    point: tuple[float, ...]
    omega_norm: float
    eigenvalues: tuple[complex, ...]
    block_definiteness: tuple[bool, ...]
    det_jacobian: float
    tol: float
    is_critical: bool
    is_dne: bool
    is_nddne: bool
    is_lase: bool
    is_strict_saddle: bool
    is_nash_candidate_violation: bool
    flags: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "flags", {
            "critical": self.is_critical,
            "dne": self.is_dne,
            "nddne": self.is_nddne,
            "lase": self.is_lase,
            "strict_saddle": self.is_strict_saddle,
            "non_nash_attractor": self.is_nash_candidate_violation,
        })

    @property
    def unclassified(self) -> bool:
        return self.is_critical and not (self.is_lase or self.is_strict_saddle)

    @property
    def min_real(self) -> float:
        return float(self.eigenvalues[0].real)

    @property
    def max_real(self) -> float:
        return max(float(e.real) for e in self.eigenvalues)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("flags")
        d["eigenvalues"] = [[float(e.real), float(e.imag)] for e in self.eigenvalues]
        d["point"] = list(self.point)
        d["block_definiteness"] = list(self.block_definiteness)
        d["flags"] = dict(self.flags)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def csv_row(self) -> list:
        return [*self.point, self.min_real, self.max_real,
                *(int(v) for v in self.flags.values())]


def csv_header(m: int) -> list[str]:
    return ([f"x_{k + 1}" for k in range(m)] + ["min_re", "max_re"]
            + ["critical", "dne", "nddne", "lase", "strict_saddle", "non_nash_attractor"])


def sorted_eigenvalues(M: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvals(M)
    order = np.lexsort((ev.imag, ev.real))
    return ev[order]


def classify(game: Game, x, tol: float = 1e-9) -> CriticalPointReport:
    if not tol > 0:
        raise InvalidParameterError(f"tol must be positive, got {tol}")
    v = np.array(_values(game, x), dtype=float)
    w = omega(game, v)
    J = game_jacobian(game, v)
    ev = sorted_eigenvalues(J)
    thr = tol * (1 + np.max(np.abs(J)))
    blocks = []
    for i in range(game.n):
        b = J[game.block(i), game.block(i)]
        blocks.append(bool(np.linalg.eigvalsh(0.5 * (b + b.T)).min() > thr))
    with np.errstate(divide="ignore"):
        det = float(np.linalg.det(J))

    critical = bool(np.linalg.norm(w) <= tol)
    re = ev.real
    on_axis = np.any(np.abs(re) <= thr)
    lase = critical and bool(re.min() > thr)
    saddle = critical and not on_axis and bool(re.min() < -thr and re.max() > thr)
    dne = critical and all(blocks)
    nddne = dne and abs(det) > tol
    return CriticalPointReport(
        point=tuple(float(c) for c in v),
        omega_norm=float(np.linalg.norm(w)),
        eigenvalues=tuple(complex(e) for e in ev),
        block_definiteness=tuple(blocks),
        det_jacobian=det,
        tol=tol,
        is_critical=critical,
        is_dne=dne,
        is_nddne=nddne,
        is_lase=lase,
        is_strict_saddle=saddle,
        is_nash_candidate_violation=lase and not dne,
    )


def is_potential_game(game: Game, sample_points, tol: float = 1e-12) -> bool:
    """True iff ``D omega`` is symmetric (to ``tol``) at every sample point."""
    pts = list(sample_points)
    if not pts:
        raise InvalidParameterError("sample_points must be nonempty")
    for p in pts:
        J = game_jacobian(game, p)
        if np.max(np.abs(J - J.T)) > tol:
            return False
    return True


def zero_sum_dne_implies_lase_check(a: float, b: float, c: float) -> bool:
    """Classify the origin of the zero-sum quadratic game, which must be a DNE."""
    if not (a > 0 and -c > 0):
        raise InvalidParameterError(f"origin is not a differential Nash point for a={a}, c={c}")
    return classify(make_quadratic_zero_sum(a, b, c), np.zeros(2)).is_lase
