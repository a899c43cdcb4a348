"""Renewal-equation estimation of the effective reproduction number.

The posterior for R_t under the renewal model with a trailing window is
conjugate: R_t | data ~ Gamma(a0 + sum I, b0 + sum Lambda), where Lambda is
total infectiousness (incidence convolved with the serial interval). A
renewal simulator supports recovery experiments, and covariate time series
can be regressed onto R_t by maximizing the Poisson likelihood with
log-linear R_t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConvergenceError, ParameterError


@dataclass
class SerialInterval:
    """Discretized generation-interval weights at lags 1..S (lag 0 excluded)."""

    weights: np.ndarray
    mean: float
    sd: float
    unit: str = "day"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0):
            raise ParameterError("serial-interval weights must be >= 0")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ParameterError("serial-interval weights must sum to 1")

    def __len__(self) -> int:
        return len(self.weights)


def discretize_serial_interval(
    mean: float, sd: float, max_len: int, unit: str = "day"
) -> SerialInterval:
    """Gamma(mean, sd) mass integrated over unit bins centered at 1..S.

    Bin s collects the gamma mass on (s - 1/2, s + 1/2]; the weights are
    renormalized to sum to 1.
    """
    if mean <= 0 or sd <= 0:
        raise ParameterError("serial-interval mean and sd must be > 0")
    if max_len < 1:
        raise ParameterError("max_len must be >= 1")
    shape = (mean / sd) ** 2
    scale = sd**2 / mean
    edges = np.arange(max_len + 1) + 0.5
    cdf = stats.gamma.cdf(edges, a=shape, scale=scale)
    weights = np.diff(cdf)
    total = weights.sum()
    if total <= 0:
        raise ParameterError("serial interval has no mass on the requested bins")
    return SerialInterval(weights=weights / total, mean=mean, sd=sd, unit=unit)


def _weights(w) -> np.ndarray:
    return np.asarray(w.weights if isinstance(w, SerialInterval) else w, dtype=float)


def infectiousness(incidence, w) -> np.ndarray:
    """Total infectiousness: Lambda_t = sum_s w_s * I_{t-s}, zero-padded."""
    incidence = np.asarray(incidence, dtype=float)
    weights = _weights(w)
    lam = np.zeros(len(incidence))
    for s, ws in enumerate(weights, start=1):
        if s >= len(incidence):
            break
        if ws != 0.0:
            lam[s:] += ws * incidence[:-s]
    return lam


@dataclass
class RtEstimate:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    window: int
    prior: tuple[float, float]
    prior_only: np.ndarray
    dates: list | None = None

    def to_frame(self):
        import pandas as pd

        data = {"mean": self.mean, "lower": self.lower, "upper": self.upper}
        if self.dates is not None:
            data = {"date": [d.isoformat() for d in self.dates], **data}
        return pd.DataFrame(data)


def estimate_rt(
    incidence,
    w,
    tau: int = 7,
    a0: float = 1.0,
    b0: float = 0.2,
    dates=None,
) -> RtEstimate:
    """Windowed conjugate posterior for R_t.

    For each step t the posterior is Gamma(a0 + sum I, b0 + sum Lambda) over
    the trailing tau steps. Windows with zero total infectiousness carry no
    information and are flagged prior-only (mean a0/b0).
    """
    if tau < 1:
        raise ParameterError("tau must be >= 1")
    if a0 <= 0 or b0 <= 0:
        raise ParameterError("prior parameters must be > 0")
    incidence = np.asarray(incidence, dtype=float)
    lam = infectiousness(incidence, w)
    n = len(incidence)
    shape = np.empty(n)
    rate = np.empty(n)
    prior_only = np.zeros(n, dtype=bool)
    for t in range(n):
        lo = max(0, t - tau + 1)
        lam_sum = lam[lo : t + 1].sum()
        if lam_sum == 0:
            prior_only[t] = True
            shape[t] = a0
            rate[t] = b0
        else:
            shape[t] = a0 + incidence[lo : t + 1].sum()
            rate[t] = b0 + lam_sum
    mean = shape / rate
    lower = stats.gamma.ppf(0.025, a=shape, scale=1.0 / rate)
    upper = stats.gamma.ppf(0.975, a=shape, scale=1.0 / rate)
    return RtEstimate(
        mean=mean,
        lower=lower,
        upper=upper,
        window=tau,
        prior=(a0, b0),
        prior_only=prior_only,
        dates=list(dates) if dates is not None else None,
    )


def simulate_incidence(rt_path, w, i_init, rng: np.random.Generator) -> np.ndarray:
    """Simulate incidence from the renewal equation: I_t ~ Poisson(R_t * Lambda_t).

    The first S steps (S = serial-interval length) are fixed at ``i_init``
    (scalar, or an array of length S).
    """
    rt_path = np.asarray(rt_path, dtype=float)
    if np.any(rt_path < 0):
        raise ParameterError("rt_path must be >= 0 elementwise")
    weights = _weights(w)
    s_len = len(weights)
    n = len(rt_path)
    incidence = np.zeros(n)
    seed_vals = np.broadcast_to(np.asarray(i_init, dtype=float), (min(s_len, n),))
    incidence[: len(seed_vals)] = seed_vals
    for t in range(s_len, n):
        past = incidence[max(0, t - s_len) : t][::-1]
        lam_t = float(np.dot(weights[: len(past)], past))
        incidence[t] = rng.poisson(rt_path[t] * lam_t)
    return incidence


@dataclass
class CovariateFit:
    beta: np.ndarray
    labels: list[str]
    log_likelihood: float
    rt_path: np.ndarray
    gradient_norm: float
    iterations: int
    converged: bool
    usable: np.ndarray = field(default_factory=lambda: np.array([], dtype=bool))

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame({"label": self.labels, "beta": self.beta})


def poisson_loglik(beta, incidence, lam, x) -> float:
    """sum_t [I_t ln(R_t Lambda_t) - R_t Lambda_t] with R_t = exp(beta . x_t)."""
    log_mu = x @ beta + np.log(lam)
    return float(np.sum(incidence * log_mu - np.exp(log_mu)))


def numeric_gradient(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x)
    for j in range(len(x)):
        probe = x.copy()
        probe[j] += h
        hi = fn(probe)
        probe[j] -= 2 * h
        lo = fn(probe)
        grad[j] = (hi - lo) / (2 * h)
    return grad


def _numeric_hessian(fn, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    p = len(x)
    hess = np.zeros((p, p))
    f0 = fn(x)
    for j in range(p):
        probe = x.copy()
        probe[j] += h
        fp = fn(probe)
        probe[j] -= 2 * h
        fm = fn(probe)
        hess[j, j] = (fp - 2 * f0 + fm) / h**2
    for j in range(p):
        for k in range(j + 1, p):
            probe = x.copy()
            probe[j] += h
            probe[k] += h
            fpp = fn(probe)
            probe[k] -= 2 * h
            fpm = fn(probe)
            probe[j] -= 2 * h
            fmm = fn(probe)
            probe[k] += 2 * h
            fmp = fn(probe)
            hess[j, k] = hess[k, j] = (fpp - fpm - fmp + fmm) / (4 * h**2)
    return hess


def standardize_columns(x: np.ndarray, labels: list[str]) -> np.ndarray:
    """Zero-mean unit-variance scaling of non-intercept columns (column 0 kept)."""
    out = np.array(x, dtype=float, copy=True)
    for j in range(1, x.shape[1]):
        sd = out[:, j].std()
        if sd == 0:
            raise ParameterError(f"covariate {labels[j]!r} has zero variance")
        out[:, j] = (out[:, j] - out[:, j].mean()) / sd
    return out


def fit_covariates(
    incidence,
    lam,
    x,
    labels: list[str] | None = None,
    max_iterations: int = 100,
    gradient_tol: float = 1e-8,
    fd_step: float = 1e-5,
) -> CovariateFit:
    """Maximum-likelihood regression of log R_t on covariates.

    Maximizes the Poisson log-likelihood with R_t = exp(beta . x_t) by damped
    Newton iterations whose gradient and Hessian are evaluated by central
    finite differences. Non-intercept covariates are standardized first so
    coefficient strengths are comparable. Steps with Lambda_t = 0 are dropped.
    """
    incidence = np.asarray(incidence, dtype=float)
    lam = np.asarray(lam, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != len(incidence) or len(lam) != len(incidence):
        raise ParameterError("incidence, infectiousness and covariates must align")
    if labels is None:
        labels = ["intercept"] + [f"covariate_{j}" for j in range(1, x.shape[1])]
    if len(labels) != x.shape[1]:
        raise ParameterError(f"{len(labels)} labels for {x.shape[1]} covariate columns")
    if not np.allclose(x[:, 0], 1.0):
        raise ParameterError("first covariate column must be the intercept (all ones)")

    usable = lam > 0
    if not usable.any():
        raise ParameterError("no steps with positive infectiousness to fit on")
    inc_u = incidence[usable]
    lam_u = lam[usable]
    x_u = standardize_columns(x[usable], labels)

    def objective(beta: np.ndarray) -> float:
        return poisson_loglik(beta, inc_u, lam_u, x_u)

    beta = np.zeros(x.shape[1])
    ll = objective(beta)
    eps = np.finfo(float).eps
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        grad = numeric_gradient(objective, beta, fd_step)
        if np.linalg.norm(grad) < gradient_tol:
            break
        hess = _numeric_hessian(objective, beta)
        try:
            direction = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            direction = grad / max(np.linalg.norm(grad), 1e-12)
        if not np.all(np.isfinite(direction)) or float(grad @ direction) <= 0:
            direction = grad / max(np.linalg.norm(grad), 1e-12)
        # near the optimum the likelihood is flat to machine precision while
        # the gradient still carries signal, so sideways steps within the
        # float plateau are accepted and Newton keeps polishing beta
        slack = 64 * eps * (1.0 + abs(ll))
        step = 1.0
        moved = False
        while step > 1e-12:
            candidate = beta + step * direction
            cand_ll = objective(candidate)
            if np.isfinite(cand_ll) and cand_ll >= ll - slack:
                beta, ll = candidate, cand_ll
                moved = True
                break
            step /= 2.0
        if not moved:
            break

    grad = numeric_gradient(objective, beta, fd_step)
    grad_norm = float(np.linalg.norm(grad))
    converged = grad_norm < max(gradient_tol, 1e-9 * (1.0 + abs(ll)))
    if not converged and grad_norm > 1e-6 * (1.0 + abs(ll)):
        raise ConvergenceError(
            f"Newton iterations did not converge: gradient norm {grad_norm:.3g} "
            f"after {iterations} iterations",
            last_iterate=beta,
        )
    rt_path = np.exp(x_u @ beta)
    return CovariateFit(
        beta=beta,
        labels=list(labels),
        log_likelihood=ll,
        rt_path=rt_path,
        gradient_norm=grad_norm,
        iterations=iterations,
        converged=converged,
        usable=usable,
    )
