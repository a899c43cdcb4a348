"""Differential-privacy primitives: scale calibration, Gaussian noise, budget ledger.

Two calibrations are offered. The linear rule sigma = sensitivity * T * U / eps
is the default release calibration; the analytic Gaussian rule
sigma = sensitivity * sqrt(2 ln(1.25/delta)) / eps is the textbook
(eps, delta) alternative and is flagged in release metadata when used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, ParameterError

MODE_LINEAR = "linear"
MODE_ANALYTIC = "analytic-gaussian"

DEFAULT_SENSITIVITY = 3.0  # per merchant, per time step
DEFAULT_DELTA = 1e-5


@dataclass
class PrivacyParams:
    """Parameters of one differentially private release."""

    epsilon: float
    delta: float = DEFAULT_DELTA
    sensitivity: float = DEFAULT_SENSITIVITY
    time_steps: int = 1
    upper_bound: float = 1.0
    mode: str = MODE_LINEAR

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")
        if self.sensitivity <= 0:
            raise ParameterError(f"sensitivity must be > 0, got {self.sensitivity}")
        if self.time_steps < 1:
            raise ParameterError(f"time_steps must be >= 1, got {self.time_steps}")
        if self.upper_bound <= 0:
            raise ParameterError(f"upper_bound must be > 0, got {self.upper_bound}")
        if self.mode not in (MODE_LINEAR, MODE_ANALYTIC):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.mode == MODE_ANALYTIC and not (0 < self.delta < 1):
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")

    def noise_scale(self) -> float:
        if self.mode == MODE_ANALYTIC:
            return analytic_gaussian_scale(self.sensitivity, self.epsilon, self.delta)
        return linear_scale(
            self.sensitivity, self.time_steps, self.upper_bound, self.epsilon
        )


def linear_scale(sensitivity: float, time_steps: int, upper_bound: float, epsilon: float) -> float:
    """Linear noise scale: (sensitivity * time_steps * upper_bound) / epsilon.

    Sensitivity defaults to 3 per merchant; for a T-step series one merchant
    can affect every step, so total sensitivity scales as 3 * T.
    """
    if sensitivity <= 0 or time_steps <= 0 or upper_bound <= 0 or epsilon <= 0:
        raise ParameterError(
            "linear_scale arguments must all be > 0, got "
            f"({sensitivity}, {time_steps}, {upper_bound}, {epsilon})"
        )
    return (sensitivity * time_steps * upper_bound) / epsilon


def analytic_gaussian_scale(sensitivity: float, epsilon: float, delta: float) -> float:
    """Classic (eps, delta) Gaussian calibration: sens * sqrt(2 ln(1.25/delta)) / eps."""
    if sensitivity <= 0 or epsilon <= 0:
        raise ParameterError("sensitivity and epsilon must be > 0")
    if not (0 < delta < 1):
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    return sensitivity * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def release_scale(
    sensitivity: float,
    time_steps: int,
    upper_bound: float,
    epsilon: float,
    mode: str = MODE_LINEAR,
    delta: float = DEFAULT_DELTA,
) -> float:
    """Noise scale for a T-step release with composite sensitivity S*T*U,
    under either calibration mode."""
    if mode == MODE_ANALYTIC:
        return analytic_gaussian_scale(sensitivity * time_steps * upper_bound, epsilon, delta)
    if mode == MODE_LINEAR:
        return linear_scale(sensitivity, time_steps, upper_bound, epsilon)
    raise ParameterError(f"unknown mode {mode!r}")


def add_gaussian_noise(value, scale: float, rng: np.random.Generator):
    """Add Normal(0, scale^2) noise to a scalar or array. scale = 0 is the identity."""
    if scale < 0:
        raise ParameterError(f"noise scale must be >= 0, got {scale}")
    arr = np.asarray(value, dtype=float)
    if scale == 0:
        noisy = arr.copy()
    else:
        noisy = arr + rng.normal(0.0, scale, size=arr.shape)
    return float(noisy) if np.isscalar(value) or arr.shape == () else noisy


def postprocess_counts(noisy) -> np.ndarray:
    """Round noisy counts to integers and clamp at 0 (post-processing keeps DP)."""
    return np.maximum(np.rint(np.asarray(noisy)), 0).astype(np.int64)


class BudgetLedger:
    """Append-only account of epsilon charges under sequential composition.

    Single-writer: callers running analyses concurrently must serialize access.
    A charge that would overdraw the budget raises and leaves the ledger
    untouched -- the caller must abort, not degrade.
    """

    def __init__(self, total_epsilon: float):
        if total_epsilon <= 0:
            raise ParameterError(f"total_epsilon must be > 0, got {total_epsilon}")
        self.total_epsilon = float(total_epsilon)
        self.charges: list[tuple[str, float]] = []

    @property
    def spent(self) -> float:
        return math.fsum(eps for _, eps in self.charges)

    @property
    def remaining(self) -> float:
        return self.total_epsilon - self.spent

    def charge(self, label: str, epsilon: float) -> None:
        if epsilon <= 0:
            raise ParameterError(f"charge epsilon must be > 0, got {epsilon}")
        # Tiny slack absorbs float error when T equal splits re-sum to the total.
        if self.spent + epsilon > self.total_epsilon * (1 + 1e-12):
            raise BudgetExceededError(label, epsilon, self.remaining)
        self.charges.append((label, epsilon))
        assert self.spent <= self.total_epsilon * (1 + 1e-12)

    def to_lines(self) -> list[str]:
        lines = [f"# budget total_epsilon={self.total_epsilon:g}"]
        cumulative = 0.0
        for label, eps in self.charges:
            cumulative += eps
            lines.append(f"{label}\t{eps:.6g}\t{cumulative:.6g}")
        return lines

    def write_audit(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.to_lines()) + "\n")


@dataclass
class ReleaseMetadata:
    """Privacy metadata attached to every DP release."""

    epsilon: float
    sigma: float
    mode: str
    sensitivity: float = DEFAULT_SENSITIVITY
    delta: float | None = None
    charges: list[tuple[str, float]] = field(default_factory=list)

    def to_lines(self) -> list[str]:
        lines = [
            f"# epsilon={self.epsilon:g} sigma={self.sigma:g} mode={self.mode}"
            f" sensitivity={self.sensitivity:g}"
            + (f" delta={self.delta:g}" if self.delta is not None else "")
        ]
        cumulative = 0.0
        for label, eps in self.charges:
            cumulative += eps
            lines.append(f"{label}\t{eps:.6g}\t{cumulative:.6g}")
        return lines
