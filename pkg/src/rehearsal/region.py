"""Desired outcome regions and their Probit-smoothed desirability.

A region is the polytope ``{y : m_k^T y <= b_k for all k}``. The smoothed
desirability replaces the hard indicator with ``prod_k Phi(eta * (b_k - m_k^T y))``.

Region files are JSON documents::

    {
      "d_y": 2,
      "constraints": [{"m": [-1.0, 0.0], "b": -0.6}, {"m": [0.0, -1.0], "b": -0.3}],
      "eta": 10
    }

``eta`` is optional; when absent the estimator picks it adaptively.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import erfc

ETA_CANDIDATES = (5.0, 10.0, 20.0)
ETA_THRESHOLDS = (0.10, 0.30)

_SQRT2 = math.sqrt(2.0)


class RegionError(ValueError):
    pass


def std_normal_cdf(t):
    return 0.5 * erfc(-np.asarray(t, dtype=float) / _SQRT2)


def std_normal_pdf(t):
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class PolytopeRegion:
    """Convex polytope given by rows of ``normals`` (``m_k``) and ``offsets`` (``b_k``)."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.normals, dtype=float))
        b = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if M.shape[0] < 1:
            raise RegionError("a region needs at least one constraint")
        if b.shape != (M.shape[0],):
            raise RegionError(f"{M.shape[0]} normals but {b.shape[0]} offsets")
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(b))):
            raise RegionError("region constraints must be finite")
        if np.any(np.linalg.norm(M, axis=1) == 0):
            raise RegionError("constraint normals must be nonzero")
        M.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "normals", M)
        object.__setattr__(self, "offsets", b)

    @classmethod
    def from_bounds(cls, lower: Sequence[Optional[float]], upper: Sequence[Optional[float]]):
        """Axis-aligned box; ``None`` leaves that side unbounded."""
        if len(lower) != len(upper):
            raise RegionError("lower and upper bounds differ in length")
        d = len(lower)
        rows, offs = [], []
        for j, (lo, hi) in enumerate(zip(lower, upper)):
            if lo is not None:
                m = np.zeros(d)
                m[j] = -1.0
                rows.append(m)
                offs.append(-float(lo))
            if hi is not None:
                m = np.zeros(d)
                m[j] = 1.0
                rows.append(m)
                offs.append(float(hi))
        return cls(np.array(rows), np.array(offs))

    @property
    def d_y(self) -> int:
        return self.normals.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.normals.shape[0]

    def _rows(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 1 and Y.shape[0] == self.d_y:
            Y = Y[None, :]
        elif Y.ndim == 1 and self.d_y == 1:
            Y = Y[:, None]
        if Y.ndim != 2 or Y.shape[1] != self.d_y:
            raise RegionError(f"outcome dimension mismatch: expected {self.d_y}, got shape {Y.shape}")
        return Y

    def margins(self, Y) -> np.ndarray:
        """``b_k - m_k^T y`` for every row and constraint, shape (n, l)."""
        return self.offsets[None, :] - self._rows(Y) @ self.normals.T

    def contains(self, Y) -> np.ndarray:
        """Boolean membership per row (boundary inclusive)."""
        return np.all(self.margins(Y) >= 0.0, axis=1)

    def to_dict(self) -> dict:
        return {
            "d_y": self.d_y,
            "constraints": [
                {"m": [float(v) for v in m], "b": float(b)}
                for m, b in zip(self.normals, self.offsets)
            ],
        }


def indicator(y, region: PolytopeRegion) -> int:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (region.d_y,):
        raise RegionError(f"outcome dimension mismatch: expected {region.d_y}, got {y.shape}")
    return int(region.contains(y)[0])


@dataclass(frozen=True)
class SmoothedDesirability:
    region: PolytopeRegion
    eta: float

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise RegionError(f"eta must be positive, got {self.eta!r}")
        object.__setattr__(self, "eta", float(self.eta))

    def values(self, Y) -> np.ndarray:
        """Smoothed desirability of each row of ``Y``."""
        Y = np.asarray(Y, dtype=float)
        if Y.size == 0:
            return np.zeros(0)
        return np.prod(std_normal_cdf(self.eta * self.region.margins(Y)), axis=1)

    def gradient(self, y) -> np.ndarray:
        """Gradient of the desirability at a single outcome ``y``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        t = self.eta * self.region.margins(y)[0]
        cdf = std_normal_cdf(t)
        pdf = std_normal_pdf(t)
        grad = np.zeros(self.region.d_y)
        for k in range(self.region.n_constraints):
            others = np.prod(np.delete(cdf, k))
            grad -= self.eta * pdf[k] * others * self.region.normals[k]
        return grad


def smooth_desirability(y, sd: SmoothedDesirability) -> float:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (sd.region.d_y,):
        raise RegionError(f"outcome dimension mismatch: expected {sd.region.d_y}, got {y.shape}")
    return float(sd.values(y)[0])


def desirability_vector(Y, sd: SmoothedDesirability) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.size == 0:
        return np.zeros(0)
    return sd.values(Y)


def select_eta(positive_fraction: float, thresholds: Sequence[float] = ETA_THRESHOLDS) -> float:
    """Pick a sharper surrogate when more historical outcomes land in the region."""
    p = float(positive_fraction)
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"positive fraction must lie in [0, 1], got {p!r}")
    lo, hi = thresholds
    if p < lo:
        return ETA_CANDIDATES[0]
    if p < hi:
        return ETA_CANDIDATES[1]
    return ETA_CANDIDATES[2]


def region_from_dict(doc: dict) -> tuple[PolytopeRegion, Optional[float]]:
    try:
        d_y = int(doc["d_y"])
        cons = doc["constraints"]
        normals = [[float(v) for v in c["m"]] for c in cons]
        offsets = [float(c["b"]) for c in cons]
    except (KeyError, TypeError, ValueError) as exc:
        raise RegionError(f"malformed region document: {exc}") from exc
    if any(len(m) != d_y for m in normals):
        raise RegionError(f"every constraint normal must have d_y={d_y} entries")
    eta = doc.get("eta")
    if eta is not None:
        eta = float(eta)
        if not eta > 0:
            raise RegionError(f"eta must be positive, got {eta!r}")
    return PolytopeRegion(np.array(normals), np.array(offsets)), eta


def load_region(path) -> tuple[PolytopeRegion, Optional[float]]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RegionError(f"{path}: not valid JSON ({exc})") from exc
    return region_from_dict(doc)


def region_to_json(region: PolytopeRegion, eta: Optional[float] = None) -> str:
    doc = region.to_dict()
    if eta is not None:
        doc["eta"] = float(eta)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
