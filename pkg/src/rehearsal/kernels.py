"""RBF kernels, Gram matrices, bandwidth heuristics and regularized solves.

Everything here is a pure function of its inputs. Gram matrices are built
from exact pairwise squared distances so that same-sample Gram matrices are
exactly symmetric with an exact unit diagonal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist

log = logging.getLogger(__name__)

BLOCKS = ("x", "u", "a")

# Jitter ladder for the SPD factorization, relative to trace(K) / n.
_JITTER_START = 1e-10
_JITTER_STOP = 1e-4


class IllConditionedError(np.linalg.LinAlgError):
    """Raised when a ridge system cannot be factorized even with jitter."""


@dataclass(frozen=True)
class Bandwidths:
    """Per-block RBF bandwidths.

    ``sigma_u`` is ``None`` when the pre-alteration block is empty. Asking for
    a block that is not covered raises ``KeyError``.
    """

    sigma_x: float
    sigma_a: float
    sigma_u: Optional[float] = None

    def __post_init__(self):
        for name in ("sigma_x", "sigma_a", "sigma_u"):
            val = getattr(self, name)
            if val is None and name == "sigma_u":
                continue
            if val is None or not np.isfinite(val) or val <= 0:
                raise ValueError(f"{name} must be positive and finite, got {val!r}")
            object.__setattr__(self, name, float(val))

    @property
    def blocks(self) -> tuple[str, ...]:
        return tuple(b for b in BLOCKS if getattr(self, f"sigma_{b}") is not None)

    def get(self, block: str) -> float:
        if block not in BLOCKS:
            raise KeyError(f"unknown block {block!r}")
        val = getattr(self, f"sigma_{block}")
        if val is None:
            raise KeyError(f"bandwidths do not cover block {block!r}")
        return val

    def to_dict(self) -> dict:
        return {f"sigma_{b}": getattr(self, f"sigma_{b}") for b in BLOCKS}


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma <= 0:
        raise ValueError(f"bandwidth must be positive and finite, got {sigma!r}")
    return sigma


def rbf_kernel(v, v_prime, sigma: float) -> float:
    """``exp(-||v - v'||^2 / (2 sigma^2))`` for two vectors."""
    sigma = _check_sigma(sigma)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    v_prime = np.atleast_1d(np.asarray(v_prime, dtype=float))
    if v.shape != v_prime.shape:
        raise ValueError(f"dimension mismatch: {v.shape} vs {v_prime.shape}")
    sq = float(np.sum((v - v_prime) ** 2))
    return float(np.exp(-sq / (2.0 * sigma * sigma)))


def _as_rows(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D sample matrix, got shape {M.shape}")
    return M


def rbf_gram(A, B=None, sigma: float = 1.0) -> np.ndarray:
    """RBF Gram matrix between the rows of ``A`` and ``B`` (``B=A`` if omitted).

    A zero-width block (``A.shape[1] == 0``) yields the all-ones matrix.
    """
    sigma = _check_sigma(sigma)
    A = _as_rows(A)
    B = A if B is None else _as_rows(B)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[1] == 0:
        return np.ones((A.shape[0], B.shape[0]))
    sq = cdist(A, B, "sqeuclidean")
    return np.exp(-sq / (2.0 * sigma * sigma))


def rbf_vector(A, v, sigma: float) -> np.ndarray:
    """Kernel values ``[k(A_1, v), ..., k(A_N, v)]``."""
    A = _as_rows(A)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (A.shape[1],):
        raise ValueError(f"dimension mismatch: expected {A.shape[1]}, got {v.shape}")
    return rbf_gram(A, v[None, :], sigma)[:, 0]


def product_kernel_h(x_i, u_i, a_i, x, u, a, bandwidths: Bandwidths) -> float:
    """Joint kernel over ``h = (x, u, a)`` as the product of block RBFs.

    When both ``u`` blocks are empty the ``u`` factor is 1.
    """
    kx = rbf_kernel(x_i, x, bandwidths.get("x"))
    ka = rbf_kernel(a_i, a, bandwidths.get("a"))
    u_i = np.atleast_1d(np.asarray(u_i, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u_i.size == 0 and u.size == 0:
        ku = 1.0
    else:
        ku = rbf_kernel(u_i, u, bandwidths.get("u"))
    return kx * ku * ka


def median_heuristic(samples) -> float:
    """Median of the strictly positive pairwise Euclidean distances."""
    S = _as_rows(samples)
    if S.shape[0] < 2:
        raise ValueError("median heuristic needs at least 2 samples")
    d = pdist(S, "euclidean")
    d = d[d > 0]
    if d.size == 0:
        raise ValueError("all pairwise distances are zero")
    return float(np.median(d))


class RidgeFactor:
    """Cholesky factorization of ``K + n * lam * I``, with jitter escalation.

    Holds the factor rather than an explicit inverse; ``solve`` applies the
    inverse to a vector or a matrix of right-hand sides.
    """

    def __init__(self, K, lam: float, n: int):
        K = np.asarray(K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"K must be square, got shape {K.shape}")
        if not (np.isfinite(lam) and lam > 0):
            raise ValueError(f"lambda must be positive, got {lam!r}")
        self.n_rows = K.shape[0]
        self.lam = float(lam)
        self.n = int(n)
        M = K + self.n * self.lam * np.eye(self.n_rows)
        self.jitter = 0.0
        self.factor = self._factorize(M, K)

    def _factorize(self, M, K):
        try:
            return scipy.linalg.cho_factor(M, lower=True)
        except np.linalg.LinAlgError:
            pass
        scale = max(float(np.trace(K)) / max(self.n_rows, 1), np.finfo(float).tiny)
        rel = _JITTER_START
        while rel <= _JITTER_STOP * (1 + 1e-12):
            jitter = rel * scale
            try:
                c = scipy.linalg.cho_factor(M + jitter * np.eye(self.n_rows), lower=True)
            except np.linalg.LinAlgError:
                rel *= 10.0
                continue
            log.warning("ridge factorization needed jitter %.3g", jitter)
            self.jitter = jitter
            return c
        raise IllConditionedError(
            "ridge system is not positive definite even with jitter "
            f"{_JITTER_STOP:g} * trace(K)/n"
        )

    @classmethod
    def from_factor(cls, c: np.ndarray, lower: bool, lam: float, n: int, jitter: float = 0.0):
        self = cls.__new__(cls)
        self.n_rows = c.shape[0]
        self.lam = float(lam)
        self.n = int(n)
        self.jitter = float(jitter)
        self.factor = (np.asarray(c, dtype=float), bool(lower))
        return self

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n_rows:
            raise ValueError(f"rhs has {rhs.shape[0]} rows, expected {self.n_rows}")
        return scipy.linalg.cho_solve(self.factor, rhs)


def ridge_solve(K, lam: float, n: int, rhs) -> np.ndarray:
    """Solve ``(K + n * lam * I) z = rhs`` through an SPD factorization."""
    return RidgeFactor(K, lam, n).solve(rhs)
