"""Nested kernel-ridge estimator of the post-alteration success surrogate.

Stage 1 regresses the smoothed desirability ``w_eta(y_i)`` on ``h = (x, u, a)``
with a product RBF kernel, giving coefficients ``alpha``. Stage 2 embeds
``P(u | x)`` by a second ridge regression on the context. For a context ``x``
the surrogate objective collapses to ``J(a) = sum_i omega_i k_a(a_i, a)`` with

    omega = alpha * k_x(x) * (K_uu @ gamma(x)),   gamma(x) = (K_xx + N lam_x I)^-1 k_x(x).

The conditional variant drops ``u`` from the joint kernel and skips the
adjustment; it estimates ``E[w_eta(Y) | x, a]`` under the observational law.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .dataset import ObservationalDataset, positive_fraction
from .kernels import Bandwidths, RidgeFactor, median_heuristic, rbf_gram, rbf_vector
from .region import PolytopeRegion, SmoothedDesirability, desirability_vector, select_eta

NESTED = "nested"
CONDITIONAL = "conditional"


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    """Hyperparameters of the nested estimator.

    ``lambda_h`` / ``lambda_x`` default to ``N**-0.25`` / ``N**-0.5``. When
    ``bandwidths`` is omitted each block uses the median heuristic, scaled by
    the matching entry of ``bandwidth_scale`` (keys ``x``, ``u``, ``a``).
    """

    lambda_h: Optional[float] = None
    lambda_x: Optional[float] = None
    bandwidths: Optional[Bandwidths] = None
    bandwidth_scale: dict = field(default_factory=dict)
    eta: Union[float, str] = "adaptive"
    standardize: bool = False

    def __post_init__(self):
        for name in ("lambda_h", "lambda_x"):
            val = getattr(self, name)
            if val is not None and not (np.isfinite(val) and val > 0):
                raise EstimatorError(f"{name} must be positive, got {val!r}")
        if self.eta != "adaptive":
            if not (isinstance(self.eta, (int, float)) and self.eta > 0):
                raise EstimatorError(f"eta must be positive or 'adaptive', got {self.eta!r}")
            object.__setattr__(self, "eta", float(self.eta))
        for k, v in self.bandwidth_scale.items():
            if k not in ("x", "u", "a") or not v > 0:
                raise EstimatorError(f"bad bandwidth scale {k}={v!r}")

    def to_dict(self) -> dict:
        return {
            "lambda_h": self.lambda_h,
            "lambda_x": self.lambda_x,
            "bandwidths": None if self.bandwidths is None else self.bandwidths.to_dict(),
            "bandwidth_scale": dict(sorted(self.bandwidth_scale.items())),
            "eta": self.eta,
            "standardize": self.standardize,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EstimatorConfig":
        bw = doc.get("bandwidths")
        return cls(
            lambda_h=doc.get("lambda_h"),
            lambda_x=doc.get("lambda_x"),
            bandwidths=None if bw is None else Bandwidths(**bw),
            bandwidth_scale=dict(doc.get("bandwidth_scale") or {}),
            eta=doc.get("eta", "adaptive"),
            standardize=bool(doc.get("standardize", False)),
        )


@dataclass(frozen=True, eq=False)
class ContextWeights:
    x: np.ndarray
    k_x_vec: np.ndarray
    gamma: Optional[np.ndarray]
    adjustment: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class _Affine:
    shift: np.ndarray
    scale: np.ndarray

    @classmethod
    def identity(cls, d):
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def zscore(cls, M):
        mu = M.mean(axis=0) if M.shape[0] else np.zeros(M.shape[1])
        sd = M.std(axis=0) if M.shape[0] else np.ones(M.shape[1])
        sd = np.where(sd > 0, sd, 1.0)
        return cls(mu, sd)

    def __call__(self, M):
        return (np.asarray(M, dtype=float) - self.shift) / self.scale


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class FittedNestedEstimator:
    """Frozen training blocks and solved ridge systems. Build it with :func:`fit`."""

    def __init__(self, *, X, U, A, alpha, bandwidths, lambda_h, lambda_x, eta, variant,
                 config, stage2=None, K_uu=None, x_map=None, a_map=None):
        self.X = _frozen(X)
        self.U = _frozen(U)
        self.A = _frozen(A)
        self.alpha = _frozen(alpha)
        self.bandwidths = bandwidths
        self.lambda_h = float(lambda_h)
        self.lambda_x = float(lambda_x)
        self.eta = float(eta)
        self.variant = variant
        self.config = config
        self.stage2 = stage2
        self.K_uu = None if K_uu is None else _frozen(K_uu)
        self.x_map = x_map or _Affine.identity(self.X.shape[1])
        self.a_map = a_map or _Affine.identity(self.A.shape[1])

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def d_x(self) -> int:
        return self.X.shape[1]

    @property
    def d_a(self) -> int:
        return self.A.shape[1]

    @property
    def adjusts(self) -> bool:
        """Whether the pre-alteration adjustment factor is active."""
        return self.K_uu is not None

    def _check(self, v, d, what) -> np.ndarray:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if v.shape != (d,):
            raise EstimatorError(f"{what} dimension mismatch: expected {d}, got {v.shape}")
        return v

    def context_weights(self, x) -> ContextWeights:
        x = self._check(x, self.d_x, "context")
        kx = rbf_vector(self.X, self.x_map(x), self.bandwidths.sigma_x)
        if self.adjusts:
            gamma = self.stage2.solve(kx)
            adjustment = self.K_uu @ gamma
        else:
            gamma = None
            adjustment = np.ones(self.n)
        omega = self.alpha * kx * adjustment
        return ContextWeights(x=x, k_x_vec=kx, gamma=gamma, adjustment=adjustment, omega=omega)

    def objective(self, w: ContextWeights, a) -> float:
        a = self._check(a, self.d_a, "action")
        ka = rbf_vector(self.A, self.a_map(a), self.bandwidths.sigma_a)
        return float(w.omega @ ka)

    def objective_many(self, w: ContextWeights, actions) -> np.ndarray:
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        if actions.shape[1] != self.d_a:
            raise EstimatorError(f"action dimension mismatch: expected {self.d_a}")
        K = rbf_gram(self.A, self.a_map(actions), self.bandwidths.sigma_a)
        return w.omega @ K

    def gradient(self, w: ContextWeights, a) -> np.ndarray:
        a = self._check(a, self.d_a, "action")
        a_s = self.a_map(a)
        sig = self.bandwidths.sigma_a
        ka = rbf_vector(self.A, a_s, sig)
        g = ((w.omega * ka) @ (self.A - a_s)) / (sig * sig)
        # chain rule through the per-column standardization
        return g / self.a_map.scale

    def value_and_gradient(self, w: ContextWeights, a) -> tuple[float, np.ndarray]:
        a = self._check(a, self.d_a, "action")
        a_s = self.a_map(a)
        sig = self.bandwidths.sigma_a
        ka = rbf_vector(self.A, a_s, sig)
        wk = w.omega * ka
        return float(wk.sum()), ((wk @ (self.A - a_s)) / (sig * sig)) / self.a_map.scale

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "bandwidths": self.bandwidths.to_dict(),
            "lambda_h": self.lambda_h,
            "lambda_x": self.lambda_x,
            "eta": self.eta,
            "variant": self.variant,
            "config": self.config.to_dict(),
            "stage2_lower": None if self.stage2 is None else bool(self.stage2.factor[1]),
            "stage2_jitter": None if self.stage2 is None else self.stage2.jitter,
        }
        arrays = dict(
            X=self.X, U=self.U, A=self.A, alpha=self.alpha,
            x_shift=self.x_map.shift, x_scale=self.x_map.scale,
            a_shift=self.a_map.shift, a_scale=self.a_map.scale,
            meta=np.array(json.dumps(meta, sort_keys=True)),
        )
        if self.K_uu is not None:
            arrays["K_uu"] = self.K_uu
            arrays["stage2_factor"] = self.stage2.factor[0]
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "FittedNestedEstimator":
        with np.load(Path(path), allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            stage2 = K_uu = None
            if "K_uu" in z.files:
                K_uu = z["K_uu"]
                stage2 = RidgeFactor.from_factor(
                    z["stage2_factor"], meta["stage2_lower"], meta["lambda_x"],
                    z["X"].shape[0], meta["stage2_jitter"],
                )
            return cls(
                X=z["X"], U=z["U"], A=z["A"], alpha=z["alpha"],
                bandwidths=Bandwidths(**meta["bandwidths"]),
                lambda_h=meta["lambda_h"], lambda_x=meta["lambda_x"], eta=meta["eta"],
                variant=meta["variant"], config=EstimatorConfig.from_dict(meta["config"]),
                stage2=stage2, K_uu=K_uu,
                x_map=_Affine(z["x_shift"], z["x_scale"]),
                a_map=_Affine(z["a_shift"], z["a_scale"]),
            )


def resolve_eta(dataset: ObservationalDataset, region: PolytopeRegion, eta) -> float:
    if eta == "adaptive":
        return select_eta(positive_fraction(dataset, region))
    return float(eta)


def _bandwidth(block: np.ndarray, name: str, config: EstimatorConfig) -> float:
    if config.bandwidths is not None:
        return config.bandwidths.get(name)
    return median_heuristic(block) * float(config.bandwidth_scale.get(name, 1.0))


def _fit(dataset: ObservationalDataset, region: PolytopeRegion, config: EstimatorConfig,
         variant: str) -> FittedNestedEstimator:
    N = dataset.n
    if N < 2:
        raise EstimatorError("fitting needs at least 2 observations")
    X, U, A, Y = dataset.blocks()
    if A.shape[1] == 0:
        raise EstimatorError("the actionable block is empty")
    if Y.shape[1] != region.d_y:
        raise EstimatorError(f"region has d_y={region.d_y} but dataset has {Y.shape[1]} outcomes")
    use_u = variant == NESTED and U.shape[1] > 0

    if config.standardize:
        x_map, u_map, a_map = _Affine.zscore(X), _Affine.zscore(U), _Affine.zscore(A)
    else:
        x_map, u_map, a_map = (_Affine.identity(M.shape[1]) for M in (X, U, A))
    Xs, Us, As = x_map(X), u_map(U), a_map(A)

    sigma_x = _bandwidth(Xs, "x", config)
    sigma_a = _bandwidth(As, "a", config)
    sigma_u = _bandwidth(Us, "u", config) if use_u else None
    bandwidths = Bandwidths(sigma_x=sigma_x, sigma_a=sigma_a, sigma_u=sigma_u)

    lambda_h = config.lambda_h if config.lambda_h is not None else N ** -0.25
    lambda_x = config.lambda_x if config.lambda_x is not None else N ** -0.5
    eta = resolve_eta(dataset, region, config.eta)

    K_xx = rbf_gram(Xs, sigma=sigma_x)
    K_hh = K_xx * rbf_gram(As, sigma=sigma_a)
    K_uu = stage2 = None
    if use_u:
        K_uu = rbf_gram(Us, sigma=sigma_u)
        K_hh = K_hh * K_uu
        stage2 = RidgeFactor(K_xx, lambda_x, N)

    w = desirability_vector(Y, SmoothedDesirability(region, eta))
    alpha = RidgeFactor(K_hh, lambda_h, N).solve(w)

    return FittedNestedEstimator(
        X=Xs, U=Us if use_u else np.zeros((N, 0)), A=As, alpha=alpha,
        bandwidths=bandwidths, lambda_h=lambda_h, lambda_x=lambda_x, eta=eta,
        variant=variant, config=config, stage2=stage2, K_uu=K_uu,
        x_map=x_map, a_map=a_map,
    )


def fit(dataset: ObservationalDataset, region: PolytopeRegion,
        config: Optional[EstimatorConfig] = None) -> FittedNestedEstimator:
    """Fit the nested (adjusted) estimator."""
    return _fit(dataset, region, config or EstimatorConfig(), NESTED)


def fit_conditional(dataset: ObservationalDataset, region: PolytopeRegion,
                    config: Optional[EstimatorConfig] = None) -> FittedNestedEstimator:
    """Fit the unadjusted single estimator over ``(x, a)`` only."""
    return _fit(dataset, region, config or EstimatorConfig(), CONDITIONAL)


def with_overrides(config: EstimatorConfig, **kw) -> EstimatorConfig:
    return replace(config, **kw)
