"""Multi-start projected gradient ascent over a box of feasible actions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .estimator import ContextWeights, FittedNestedEstimator


@dataclass(frozen=True, eq=False)
class ActionBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"box bounds differ in shape: {lo.shape} vs {hi.shape}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, a) -> bool:
        a = np.asarray(a, dtype=float)
        return bool(np.all(a >= self.lower) and np.all(a <= self.upper))

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


def project_box(a, box: ActionBox) -> np.ndarray:
    return np.clip(np.asarray(a, dtype=float), box.lower, box.upper)


@dataclass(frozen=True)
class OptimizerConfig:
    K: int = 20
    nu: float = 0.2
    T: int = 200
    grad_tol: float = 1e-7
    seed: int = 0  # only used by the fallback start set

    def __post_init__(self):
        if self.K < 1 or self.T < 1 or not self.nu > 0 or self.grad_tol < 0:
            raise ValueError(f"invalid optimizer config {self}")

    def to_dict(self) -> dict:
        return {"K": self.K, "nu": self.nu, "T": self.T, "grad_tol": self.grad_tol, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class DecisionResult:
    a_star: np.ndarray
    j_star: float
    starts_used: list
    start_values: list
    per_start_best: list
    start_indices: list = field(default_factory=list)
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "a_star": [float(v) for v in self.a_star],
            "j_star": float(self.j_star),
            "fallback": self.fallback,
            "starts": [
                {"row": r, "start": [float(v) for v in s], "start_value": float(v0), "best": float(b)}
                for r, s, v0, b in zip(
                    self.start_indices or [None] * len(self.starts_used),
                    self.starts_used, self.start_values, self.per_start_best,
                )
            ],
        }


def select_starts(omega, actions, K: int) -> list[int]:
    """Rows with positive weight, largest first (ties to lower index), at most ``K``."""
    omega = np.asarray(omega, dtype=float)
    actions = np.asarray(actions)
    if omega.shape[0] != actions.shape[0]:
        raise ValueError("omega and actions differ in length")
    pos = np.flatnonzero(omega > 0)
    order = pos[np.lexsort((pos, -omega[pos]))]
    return [int(i) for i in order[:K]]


def fallback_starts(box: ActionBox, K: int, seed: int) -> np.ndarray:
    pts = [box.midpoint]
    if K > 1:
        sampler = qmc.Halton(d=box.dim, scramble=True, seed=seed)
        u = sampler.random(K - 1)
        pts.extend(box.lower + u * (box.upper - box.lower))
    return np.array(pts)


def _ascend(est, w, a0, box, cfg):
    a = project_box(a0, box)
    val, g = est.value_and_gradient(w, a)
    start_val = val
    best_a, best_v = a, val
    for _ in range(cfg.T):
        if np.linalg.norm(g) <= cfg.grad_tol:
            break
        a = project_box(a + cfg.nu * g, box)
        val, g = est.value_and_gradient(w, a)
        if val > best_v:
            best_a, best_v = a, val
    return start_val, best_a, best_v


def optimize(est: FittedNestedEstimator, w: ContextWeights, box: ActionBox,
             config: OptimizerConfig = OptimizerConfig()) -> DecisionResult:
    if box.dim != est.d_a:
        raise ValueError(f"box has dimension {box.dim}, estimator actions have {est.d_a}")
    # start from historical actions, in original units
    actions = est.A * est.a_map.scale + est.a_map.shift
    rows = select_starts(w.omega, actions, config.K)
    fallback = not rows
    starts = fallback_starts(box, config.K, config.seed) if fallback else actions[rows]

    best = None
    used, start_vals, bests = [], [], []
    for s in starts:
        s0 = project_box(s, box)
        v0, a_s, v_s = _ascend(est, w, s0, box, config)
        used.append(s0)
        start_vals.append(v0)
        bests.append(v_s)
        if best is None or v_s > best[1]:
            best = (a_s, v_s)
    return DecisionResult(
        a_star=best[0], j_star=float(best[1]), starts_used=used, start_values=start_vals,
        per_start_best=bests, start_indices=[] if fallback else rows, fallback=fallback,
    )
