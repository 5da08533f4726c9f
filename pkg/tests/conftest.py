import numpy as np
import pytest

from rehearsal import EstimatorConfig, FittedNestedEstimator, ObservationalDataset, VariableSchema
from rehearsal.kernels import Bandwidths

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def accept():
    """Record one acceptance line; the terminal summary prints them all."""

    def record(label: str, passed: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((label, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")


def make_dataset(n: int, seed: int, d_x=1, d_u=1, d_a=2, d_y=1, post=0) -> ObservationalDataset:
    """Random confounded data with the requested block widths."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d_x))
    U = X[:, :1] * 0.7 + rng.normal(size=(n, d_u)) if d_u else np.zeros((n, 0))
    base = X.sum(1, keepdims=True) + (U.sum(1, keepdims=True) if d_u else 0.0)
    A = 0.5 * base + rng.normal(size=(n, d_a))
    P = A[:, :1] + rng.normal(size=(n, post)) if post else np.zeros((n, 0))
    Y = A.sum(1, keepdims=True) * 0.4 + 0.3 * base + 0.3 * rng.normal(size=(n, d_y))
    cols = (
        [(f"X{i}", "context") for i in range(d_x)]
        + [(f"U{i}", "pre") for i in range(d_u)]
        + [(f"A{i}", "actionable") for i in range(d_a)]
        + [(f"P{i}", "post") for i in range(post)]
        + [(f"Y{i}", "outcome") for i in range(d_y)]
    )
    return ObservationalDataset(VariableSchema(cols), np.hstack([X, U, A, P, Y]))


@pytest.fixture
def small_dataset():
    return make_dataset(40, 0)


def bare_estimator(A: np.ndarray, sigma_a: float = 1.0) -> FittedNestedEstimator:
    """An estimator shell over training actions ``A``; weights come from hand-built ContextWeights."""
    n = A.shape[0]
    return FittedNestedEstimator(
        X=np.zeros((n, 1)), U=np.zeros((n, 0)), A=A, alpha=np.ones(n),
        bandwidths=Bandwidths(sigma_x=1.0, sigma_a=sigma_a), lambda_h=0.1, lambda_x=0.1,
        eta=10.0, variant="nested", config=EstimatorConfig(),
    )


def weights(omega) -> "ContextWeights":
    from rehearsal.estimator import ContextWeights
    omega = np.asarray(omega, dtype=float)
    n = omega.shape[0]
    return ContextWeights(x=np.zeros(1), k_x_vec=np.ones(n), gamma=None, adjustment=np.ones(n),
                          omega=omega)
