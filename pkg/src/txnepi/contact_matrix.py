"""Age-contact-matrix estimation from category transaction counts.

Pipeline per city: noisy category counts -> age-group counts through the
consumption distribution D (age x category, column-stochastic) ->
proportionate-mixing contacts. City matrices are averaged into a national
matrix, adjusted by an age-mixing vector, symmetrized with the transpose and
normalized to unit sum.

D can be refined against a ground-truth matrix by projected gradient descent
on the Frobenius loss, with central finite-difference gradients and
per-column Euclidean simplex projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dp_core import (
    DEFAULT_DELTA,
    DEFAULT_SENSITIVITY,
    MODE_ANALYTIC,
    MODE_LINEAR,
    BudgetLedger,
    ReleaseMetadata,
    release_scale,
)
from .dp_analytics import DEFAULT_UPPER_BOUND, city_labels
from .errors import (
    DegenerateInputError,
    DimensionError,
    ParameterError,
    TrainingError,
)

DEFAULT_AGE_GROUPS = ["0-17", "18-30", "31-45", "46-64", "65+"]

COLUMN_SUM_TOL = 1e-9


def validate_consumption(d: np.ndarray) -> np.ndarray:
    """Check D is non-negative with unit column sums; returns the array."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2:
        raise DimensionError(f"D must be 2-D, got shape {d.shape}")
    if np.any(d < 0):
        raise ParameterError("D entries must be >= 0")
    sums = d.sum(axis=0)
    if np.any(np.abs(sums - 1.0) > COLUMN_SUM_TOL):
        raise ParameterError(f"D columns must sum to 1, got sums {sums}")
    return d


def age_counts(d: np.ndarray, category_counts: np.ndarray) -> np.ndarray:
    """Distribute category volumes over age groups: n = D @ c."""
    d = np.asarray(d, dtype=float)
    c = np.asarray(category_counts, dtype=float)
    if d.ndim != 2 or c.ndim != 1 or d.shape[1] != c.shape[0]:
        raise DimensionError(f"shape mismatch: D {d.shape} vs counts {c.shape}")
    if np.any(c < 0):
        raise ParameterError("category counts must be >= 0")
    return d @ c


def proportionate_mixing(n: np.ndarray) -> np.ndarray:
    """Contact counts under proportionate mixing: M[i, j] = n_i * n_j / sum(n)."""
    n = np.asarray(n, dtype=float)
    total = n.sum()
    if total <= 0:
        raise DegenerateInputError("age counts sum to 0; mixing undefined")
    return np.outer(n, n) / total


def symmetrize(m_matrix: np.ndarray, mixing: np.ndarray) -> np.ndarray:
    """Apply age-mixing factors and average with the transpose."""
    m_matrix = np.asarray(m_matrix, dtype=float)
    mixing = np.asarray(mixing, dtype=float)
    if mixing.ndim != 1 or m_matrix.shape != (len(mixing), len(mixing)):
        raise DimensionError(
            f"shape mismatch: matrix {m_matrix.shape} vs mixing {mixing.shape}"
        )
    if np.any(mixing <= 0):
        raise ParameterError("mixing factors must be > 0")
    scaled = mixing[:, None] * m_matrix
    return (scaled + scaled.T) / 2.0


def normalize(matrix: np.ndarray) -> np.ndarray:
    total = matrix.sum()
    if total <= 0:
        raise DegenerateInputError("matrix sums to 0; cannot normalize")
    return matrix / total


def category_counts(
    table: pd.DataFrame,
    city: str,
    categories: list[str],
    upper_bound: float = DEFAULT_UPPER_BOUND,
) -> np.ndarray:
    """Exact clipped transaction-count sums per category for one city."""
    frame = table.loc[city_labels(table) == city]
    out = np.zeros(len(categories))
    if frame.empty:
        return out
    clipped = np.minimum(frame["nb_transactions"].to_numpy(), upper_bound)
    sums = pd.Series(clipped, index=frame.index).groupby(frame["merch_category"]).sum()
    for k, cat in enumerate(categories):
        if cat in sums.index:
            out[k] = sums[cat]
    return out


def contact_from_counts(
    d: np.ndarray,
    counts_by_city: dict[str, np.ndarray],
    mixing: np.ndarray | None = None,
) -> np.ndarray:
    """Noise-free composition: counts -> age counts -> mixing -> national
    average -> symmetrize -> normalize. Shared by estimation and training."""
    d = np.asarray(d, dtype=float)
    if mixing is None:
        mixing = np.ones(d.shape[0])
    city_matrices = [
        proportionate_mixing(d @ np.asarray(c, dtype=float))
        for c in counts_by_city.values()
    ]
    if not city_matrices:
        raise DegenerateInputError("no city counts supplied")
    national = np.mean(city_matrices, axis=0)
    return normalize(symmetrize(national, mixing))


@dataclass
class ContactMatrix:
    matrix: np.ndarray
    age_groups: list[str]
    normalized: bool
    metadata: ReleaseMetadata | None = None


def estimate(
    table: pd.DataFrame,
    d: np.ndarray,
    mixing: np.ndarray | None,
    cities: list[str],
    epsilon: float,
    rng: np.random.Generator,
    ledger: BudgetLedger | None = None,
    categories: list[str] | None = None,
    age_groups: list[str] | None = None,
    upper_bound: float = DEFAULT_UPPER_BOUND,
    sensitivity: float = DEFAULT_SENSITIVITY,
    mode: str = MODE_LINEAR,
    delta: float = DEFAULT_DELTA,
) -> ContactMatrix:
    """National contact matrix from noisy per-city category counts.

    Each city's category count vector is one release (epsilon charged per
    city); noisy counts are clamped at 0 before the age mapping. Cities with
    no transactions are skipped; if every city is empty the input is
    degenerate.
    """
    d = validate_consumption(d)
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    if categories is None:
        categories = sorted(table["merch_category"].unique())
    if age_groups is None:
        age_groups = list(DEFAULT_AGE_GROUPS)
    if d.shape != (len(age_groups), len(categories)):
        raise DimensionError(
            f"D shape {d.shape} does not match {len(age_groups)} age groups x "
            f"{len(categories)} categories"
        )
    if mixing is None:
        mixing = np.ones(d.shape[0])

    sigma = release_scale(sensitivity, 1, upper_bound, epsilon, mode, delta)
    if ledger is None:
        ledger = BudgetLedger(epsilon * len(cities))
    charges = []
    noisy_by_city: dict[str, np.ndarray] = {}
    for city in cities:
        exact = category_counts(table, city, categories, upper_bound)
        if exact.sum() == 0:
            continue
        label = f"contact:{city}"
        ledger.charge(label, epsilon)
        charges.append((label, epsilon))
        noisy = np.maximum(exact + rng.normal(0.0, sigma, len(exact)), 0.0)
        noisy_by_city[city] = noisy
    if not noisy_by_city:
        raise DegenerateInputError("no transactions in any requested city")

    matrix = contact_from_counts(d, noisy_by_city, mixing)
    meta = ReleaseMetadata(
        epsilon=epsilon,
        sigma=sigma,
        mode=mode,
        sensitivity=sensitivity,
        delta=delta if mode == MODE_ANALYTIC else None,
        charges=charges,
    )
    return ContactMatrix(matrix=matrix, age_groups=age_groups, normalized=True, metadata=meta)


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ParameterError("cannot project non-finite values")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - (css - 1.0) / j > 0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_columns(d: np.ndarray) -> np.ndarray:
    out = np.empty_like(d)
    for k in range(d.shape[1]):
        out[:, k] = simplex_project(d[:, k])
    return out


def random_consumption(n_ages: int, n_categories: int, rng: np.random.Generator) -> np.ndarray:
    """Random column-stochastic consumption distribution (Dirichlet columns)."""
    return rng.dirichlet(np.ones(n_ages), size=n_categories).T


def fd_gradient(loss_fn, d: np.ndarray, eps: float) -> np.ndarray:
    """Entrywise central finite-difference gradient of a scalar loss."""
    grad = np.zeros_like(d)
    for i in range(d.shape[0]):
        for k in range(d.shape[1]):
            probe = d.copy()
            probe[i, k] += eps
            hi = loss_fn(probe)
            probe[i, k] -= 2 * eps
            lo = loss_fn(probe)
            grad[i, k] = (hi - lo) / (2 * eps)
    return grad


@dataclass
class TrainingHyperparams:
    step: float = 0.5
    fd_eps: float = 1e-6
    max_iterations: int = 5000
    loss_tolerance: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if self.step <= 0:
            raise ParameterError("step must be > 0")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")
        if self.fd_eps <= 0:
            raise ParameterError("fd_eps must be > 0")


@dataclass
class TrainResult:
    d: np.ndarray
    loss: float
    # accepted iterations only: (iteration, loss, step)
    history: list[tuple[int, float, float]] = field(default_factory=list)
    converged: bool = False


def train_d(
    counts_by_city: dict[str, np.ndarray],
    c_gt: np.ndarray,
    init_d: np.ndarray | None = None,
    hyper: TrainingHyperparams = TrainingHyperparams(),
    mixing: np.ndarray | None = None,
    n_ages: int | None = None,
) -> TrainResult:
    """Refine D against a ground-truth contact matrix.

    Projected gradient descent on ||C(D) - C_gt||_F^2: central
    finite-difference gradient, per-column simplex projection of every
    candidate, and step halving until the loss does not increase. The
    accepted-iteration loss sequence is non-increasing.
    """
    c_gt = np.asarray(c_gt, dtype=float)
    if c_gt.ndim != 2 or c_gt.shape[0] != c_gt.shape[1]:
        raise DimensionError(f"C_gt must be square, got shape {c_gt.shape}")
    if not np.allclose(c_gt, c_gt.T, atol=1e-12):
        raise ParameterError("C_gt must be symmetric")
    if np.any(c_gt < 0):
        raise ParameterError("C_gt must be non-negative")

    a = c_gt.shape[0] if n_ages is None else n_ages
    if a != c_gt.shape[0]:
        raise DimensionError(f"n_ages {a} does not match C_gt shape {c_gt.shape}")
    k = len(next(iter(counts_by_city.values())))
    if init_d is None:
        init_d = random_consumption(a, k, np.random.default_rng(hyper.seed))
    d = validate_consumption(init_d).copy()
    if d.shape != (a, k):
        raise DimensionError(f"init D shape {d.shape}, expected {(a, k)}")

    def loss_fn(candidate: np.ndarray) -> float:
        diff = contact_from_counts(candidate, counts_by_city, mixing) - c_gt
        return float(np.sum(diff * diff))

    loss = loss_fn(d)
    if not np.isfinite(loss):
        raise TrainingError(f"initial loss is not finite: {loss}")
    history: list[tuple[int, float, float]] = [(0, loss, 0.0)]
    if loss < hyper.loss_tolerance:
        return TrainResult(d=d, loss=loss, history=history, converged=True)

    stalled = 0
    for iteration in range(1, hyper.max_iterations + 1):
        grad = fd_gradient(loss_fn, d, hyper.fd_eps)
        step = hyper.step
        accepted = False
        while step > 1e-18:
            candidate = project_columns(d - step * grad)
            candidate_loss = loss_fn(candidate)
            if not np.isfinite(candidate_loss):
                raise TrainingError(f"loss became non-finite at iteration {iteration}")
            if candidate_loss <= loss:
                accepted = True
                break
            step /= 2.0
        if not accepted:
            # no descent direction at numerical resolution
            return TrainResult(d=d, loss=loss, history=history, converged=True)
        if loss - candidate_loss <= 1e-15 * (1.0 + loss):
            stalled += 1
        else:
            stalled = 0
        d, loss = candidate, candidate_loss
        history.append((iteration, loss, step))
        if loss < hyper.loss_tolerance or stalled >= 20:
            return TrainResult(d=d, loss=loss, history=history, converged=True)
    return TrainResult(d=d, loss=loss, history=history, converged=False)


def read_matrix_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    np.savetxt(path, np.asarray(matrix, dtype=float), delimiter=",", fmt="%.12g")


def write_training_log(result: TrainResult, path) -> None:
    frame = pd.DataFrame(result.history, columns=["iteration", "loss", "step"])
    frame.to_csv(path, index=False, lineterminator="\n")
