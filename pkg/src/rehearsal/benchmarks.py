"""Ground-truth structural generators for the synthetic benchmark settings.

Each oracle is an ordered list of structural equations. Sampling walks the
list in order; every variable draws its exogenous noise from its own stream
``substream(seed, variable_index)``, so forcing an action changes nothing
upstream of it and the same seed reproduces the same draws.

Gaussian terms written ``N(mu, s)`` are read with ``s`` as either the variance
(``noise="variance"``) or the standard deviation (``noise="std"``). Each
benchmark has its own default reading, listed in ``DEFAULT_NOISE``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dataset import ObservationalDataset, Role, VariableSchema
from .optimizer import ActionBox
from .region import PolytopeRegion
from .rng import substream

NOISE_MODES = ("variance", "std")


@dataclass(frozen=True)
class Node:
    name: str
    role: Role
    # (values so far, rng, n, gaussian noise sampler) -> column of length n
    equation: Callable


def _sigmoid(t):
    return 1.0 / (1.0 + np.exp(-t))


class BenchmarkOracle:
    """A structural generator with its desired region and action box."""

    def __init__(self, bench_id: str, nodes: list[Node], region: PolytopeRegion,
                 box: ActionBox, noise: Optional[str] = None):
        if noise is None:
            noise = DEFAULT_NOISE.get(bench_id, "variance")
        if noise not in NOISE_MODES:
            raise ValueError(f"noise must be one of {NOISE_MODES}, got {noise!r}")
        self.id = bench_id
        self.nodes = tuple(nodes)
        self.region = region
        self.box = box
        self.noise = noise
        self.schema = VariableSchema((nd.name, nd.role) for nd in self.nodes)
        if self.schema.dim(Role.ACTIONABLE) != box.dim:
            raise ValueError("action box does not match the actionable variables")

    def __repr__(self):
        return f"BenchmarkOracle({self.id!r}, noise={self.noise!r})"

    @property
    def d_x(self) -> int:
        return self.schema.dim(Role.CONTEXT)

    @property
    def d_a(self) -> int:
        return self.schema.dim(Role.ACTIONABLE)

    def _gauss(self, rng, n, mean, s):
        scale = np.sqrt(s) if self.noise == "variance" else s
        return mean + rng.normal(0.0, scale, size=n)

    def simulate(self, n: int, seed: int, context=None, action=None) -> np.ndarray:
        """Draw ``n`` rows of every variable, optionally pinning context / action.

        Pinning the context conditions on an observed ``x``; pinning the action
        severs the actionable variables' own equations.
        """
        if n < 0:
            raise ValueError("n must be non-negative")
        ctx = None if context is None else np.atleast_1d(np.asarray(context, dtype=float))
        act = None if action is None else np.atleast_1d(np.asarray(action, dtype=float))
        if ctx is not None and ctx.shape != (self.d_x,):
            raise ValueError(f"context must have dimension {self.d_x}, got {ctx.shape}")
        if act is not None and act.shape != (self.d_a,):
            raise ValueError(f"action must have dimension {self.d_a}, got {act.shape}")
        values: dict[str, np.ndarray] = {}
        i_ctx = i_act = 0
        for j, node in enumerate(self.nodes):
            if node.role is Role.CONTEXT and ctx is not None:
                col = np.full(n, ctx[i_ctx])
            elif node.role is Role.ACTIONABLE and act is not None:
                col = np.full(n, act[i_act])
            else:
                rng = substream(seed, j)
                col = node.equation(values, rng, n, self._gauss)
            i_ctx += node.role is Role.CONTEXT
            i_act += node.role is Role.ACTIONABLE
            values[node.name] = np.asarray(col, dtype=float)
        return np.column_stack([values[nd.name] for nd in self.nodes])

    def _outcomes(self, rows: np.ndarray) -> np.ndarray:
        return rows[:, self.schema.indices(Role.OUTCOME)]

    def generate_observational(self, n: int, seed: int) -> ObservationalDataset:
        if n < 1:
            raise ValueError("n must be at least 1")
        return ObservationalDataset(self.schema, self.simulate(n, seed))

    def sample_context(self, seed: int) -> np.ndarray:
        ctx_idx = self.schema.indices(Role.CONTEXT)
        values: dict[str, np.ndarray] = {}
        for j in ctx_idx:
            node = self.nodes[j]
            values[node.name] = node.equation(values, substream(seed, j), 1, self._gauss)
        return np.array([values[self.nodes[j].name][0] for j in ctx_idx], dtype=float)

    def sample_alterational(self, x, a, m: int, seed: int) -> np.ndarray:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if a.shape == (self.d_a,) and not self.box.contains(a):
            raise ValueError(f"action {a.tolist()} lies outside the feasible box")
        return self._outcomes(self.simulate(m, seed, context=x, action=a))

    def sample_baseline(self, x, m: int, seed: int) -> np.ndarray:
        return self._outcomes(self.simulate(m, seed, context=x))


# -- benchmark definitions --------------------------------------------------

C, P, A, Q, O = Role.CONTEXT, Role.PRE, Role.ACTIONABLE, Role.POST, Role.OUTCOME


def lin_syn1(noise: Optional[str] = None) -> BenchmarkOracle:
    nodes = [
        Node("X1", C, lambda v, r, n, g: g(r, n, 0.0, 0.1)),
        Node("X2", C, lambda v, r, n, g: g(r, n, 0.0, 0.1)),
        Node("U2", P, lambda v, r, n, g: g(r, n, 10.0 * v["X2"], 0.1)),
        Node("A1", A, lambda v, r, n, g: g(r, n, 10.0 * v["X1"], 0.1)),
        Node("U1", Q, lambda v, r, n, g: g(r, n, 0.5 * v["A1"] + 1.3 * v["U2"], 0.1)),
        Node("A2", A, lambda v, r, n, g: g(r, n, 2.0 * v["A1"] + 0.4 * v["U2"], 0.1)),
        Node("Y1", O, lambda v, r, n, g: g(r, n, -1.0 * v["A1"] + 0.9 * v["A2"], 0.1)),
        Node("Y2", O, lambda v, r, n, g: g(r, n, 1.6 * v["A1"] - 0.9 * v["A2"], 0.1)),
    ]
    region = PolytopeRegion.from_bounds([0.0, 0.0], [2.0, 2.0])
    return BenchmarkOracle("lin_syn1", nodes, region, ActionBox([-3.0, -3.0], [3.0, 3.0]), noise)


def _non_syn1_y(v, r, n, g):
    a1, a2, x, u = v["A1"], v["A2"], v["X"], v["U"]
    mean = 1.5 - (a1 - x) ** 2 - (a2 - np.log(u + 1.0)) ** 2 + 0.2 * np.sin(a1 * a2)
    return g(r, n, mean, 0.1)


def non_syn1(noise: Optional[str] = None) -> BenchmarkOracle:
    nodes = [
        Node("X", C, lambda v, r, n, g: r.uniform(-1.0, 1.0, size=n)),
        Node("U", P, lambda v, r, n, g: r.exponential(1.0, size=n)),
        Node("A1", A, lambda v, r, n, g: g(r, n, 0.8 * v["X"] + 0.2 * v["U"], 0.5)),
        Node("A2", A, lambda v, r, n, g: g(r, n, 0.5 * np.sin(v["U"]), 0.5)),
        Node("Y", O, _non_syn1_y),
    ]
    region = PolytopeRegion.from_bounds([1.5], [2.0])
    return BenchmarkOracle("non_syn1", nodes, region, ActionBox([-1.0, -1.0], [1.0, 1.0]), noise)


def _non_syn2_a1(v, r, n, g):
    x1, x2 = v["X1"], v["X2"]
    return g(r, n, x1 - x2 + 0.2 * x1**2 - 0.2 * x2**2 + 0.1 * x1 * x2, 0.1)


def _non_syn2_u1(v, r, n, g):
    x1, x2, a1 = v["X1"], v["X2"], v["A1"]
    mean = (-1.0 * x1 + 2.0 * x2 + 3.0 * a1 - 0.2 * x1**2 + 0.4 * x2**2 + 0.6 * a1**2
            + 0.1 * (x1 * x2 + x1 * a1 + x2 * a1))
    return g(r, n, mean, 0.1)


def _non_syn2_u2(v, r, n, g):
    x1, u1 = v["X1"], v["U1"]
    return g(r, n, -1.0 * x1 + 4.0 * u1 - 0.2 * x1**2 + 0.8 * u1**2 + 0.1 * x1 * u1, 0.1)


def _non_syn2_a2(v, r, n, g):
    x1, x2, u1 = v["X1"], v["X2"], v["U1"]
    mean = (-1.0 * x1 - 0.5 * x2 + 0.3 * u1 - 0.2 * x1**2 - 0.1 * x2**2 + 0.06 * u1**2
            + 0.1 * (x1 * x2 + x1 * u1 + x2 * u1))
    return g(r, n, mean, 0.1)


def _non_syn2_y1(v, r, n, g):
    x1, u1, u2, a2 = v["X1"], v["U1"], v["U2"], v["A2"]
    parents = (x1, u1, u2, a2)
    pairwise = sum(parents[i] * parents[j] for i in range(4) for j in range(i + 1, 4))
    mean = (0.5 + (0.2 * (x1 + x1**2) - 5.0 * (u1 + u1**2) - 1.0 * (u2 + u2**2)
                   + 5.0 * (a2 + a2**2)) / 60.0
            + 0.5 * pairwise)
    return g(r, n, mean, 0.1)


def non_syn2(noise: Optional[str] = None) -> BenchmarkOracle:
    nodes = [
        Node("X1", C, lambda v, r, n, g: r.uniform(0.0, 1.0, size=n)),
        Node("X2", C, lambda v, r, n, g: r.uniform(0.0, 1.0, size=n)),
        Node("A1", A, _non_syn2_a1),
        Node("U1", Q, _non_syn2_u1),
        Node("U2", Q, _non_syn2_u2),
        Node("A2", A, _non_syn2_a2),
        Node("Y1", O, _non_syn2_y1),
    ]
    region = PolytopeRegion.from_bounds([0.9], [1.5])
    return BenchmarkOracle("non_syn2", nodes, region, ActionBox([-1.0, -1.0], [1.0, 1.0]), noise)


def _bank_y1(v, r, n, g):
    u1, a2, x2 = v["U1"], v["A2"], v["X2"]
    return _sigmoid(2.0 * u1**1.1 - 1.5 * a2 + 0.2 * x2 + 0.4) + g(r, n, 0.0, 0.05)


def bank_exp(noise: Optional[str] = None) -> BenchmarkOracle:
    nodes = [
        Node("X1", C, lambda v, r, n, g: r.uniform(0.0, 1.0, size=n)),
        Node("X2", C, lambda v, r, n, g: r.uniform(0.0, 1.0, size=n)),
        Node("U1", P, lambda v, r, n, g: r.beta(2.0, 2.0, size=n)),
        Node("A2", A, lambda v, r, n, g: g(r, n, v["U1"] + 0.5 * v["X1"] + 0.5 * v["X2"] - 0.5, 0.2)),
        Node("Y1", O, _bank_y1),
        Node("Y2", O, lambda v, r, n, g: g(r, n, 0.8 * v["A2"] + 0.5 * v["U1"], 0.05)),
    ]
    region = PolytopeRegion.from_bounds([0.6, 0.3], [None, None])
    return BenchmarkOracle("bank_exp", nodes, region, ActionBox([0.0], [1.0]), noise)


DEFAULT_NOISE = {
    "lin_syn1": "variance",
    "non_syn1": "std",
    "non_syn2": "std",
    "bank_exp": "std",
}

BENCHMARKS: dict[str, Callable[..., BenchmarkOracle]] = {
    "lin_syn1": lin_syn1,
    "non_syn1": non_syn1,
    "non_syn2": non_syn2,
    "bank_exp": bank_exp,
}


def get_benchmark(bench_id: str, noise: Optional[str] = None) -> BenchmarkOracle:
    """Look up an oracle by id; dashes and underscores are interchangeable."""
    key = bench_id.strip().lower().replace("-", "_")
    if key not in BENCHMARKS:
        raise KeyError(
            f"unknown benchmark {bench_id!r}; valid ids: {', '.join(sorted(BENCHMARKS))}"
        )
    return BENCHMARKS[key](noise)
