"""Rate trajectories and the firing-rate nonlinearity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class ActivationParams:
    """Scaled logistic mapping integrated activity to a per-step firing probability."""

    gain: float = 1.0
    max_prob: float = 0.5

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError(f"gain must be > 0, got {self.gain}")
        if not 0 < self.max_prob <= 1:
            raise ValueError(f"max_prob must lie in (0, 1], got {self.max_prob}")


def rho(s, params: ActivationParams):
    """Firing probability per step, ``max_prob * logistic(gain * s)``.

    Accepts scalars or arrays; scalars come back as ``float``.
    """
    out = params.max_prob * expit(params.gain * np.asarray(s, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def rho_prime(s, params: ActivationParams):
    """Derivative of :func:`rho` with respect to ``s``."""
    z = expit(params.gain * np.asarray(s, dtype=float))
    out = params.max_prob * params.gain * z * (1.0 - z)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TrajectoryParams:
    length: int = 160
    s_min: float = -3.0
    s_max: float = 3.0
    segment_len_min: int = 10
    segment_len_max: int = 40
    slope_sigma: float = 0.15
    level_init_range: tuple[float, float] = (-3.0, 3.0)

    def __post_init__(self):
        object.__setattr__(self, "level_init_range", tuple(float(v) for v in self.level_init_range))
        if self.length < 2:
            raise ValueError(f"length must be >= 2, got {self.length}")
        if not self.s_min < self.s_max:
            raise ValueError("s_min must be < s_max")
        if not 1 <= self.segment_len_min <= self.segment_len_max:
            raise ValueError("need 1 <= segment_len_min <= segment_len_max")
        if not self.slope_sigma >= 0:
            raise ValueError(f"slope_sigma must be >= 0, got {self.slope_sigma}")
        lo, hi = self.level_init_range
        if len(self.level_init_range) != 2 or lo > hi:
            raise ValueError("level_init_range must be an ordered pair (lo, hi)")


@dataclass(frozen=True, eq=False)
class RateTrajectory:
    """Integrated activity ``s`` with per-step slopes ``sdot``.

    ``sdot[t]`` is the forward difference ``s[t+1] - s[t]``; for the last
    step it refers to the (unstored) next state of the same process.
    """

    s: np.ndarray
    sdot: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        sdot = np.asarray(self.sdot, dtype=float)
        if s.ndim != 1 or s.shape != sdot.shape:
            raise ValueError("s and sdot must be 1-d sequences of equal length")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "sdot", sdot)

    def __len__(self):
        return len(self.s)

    @classmethod
    def from_states(cls, states) -> RateTrajectory:
        """Build from ``L + 1`` states; slopes are their exact differences."""
        states = np.asarray(states, dtype=float)
        return cls(states[:-1].copy(), np.diff(states))

    def reversed(self) -> RateTrajectory:
        """Time-reversed trajectory.

        Each step keeps its own slope, negated, so a reversed run sees
        exactly the negated values at mirrored spike-timing differences.
        The result relates its slopes to backward rather than forward
        differences of ``s``.
        """
        return RateTrajectory(self.s[::-1].copy(), -self.sdot[::-1])


def draw_segment(params: TrajectoryParams, rng: np.random.Generator) -> tuple[int, float]:
    """Draw one ``(length, slope)`` segment of the piecewise-linear process."""
    n = int(rng.integers(params.segment_len_min, params.segment_len_max + 1))
    slope = float(rng.normal(0.0, params.slope_sigma))
    return n, slope


def generate_trajectory(params: TrajectoryParams, rng: np.random.Generator) -> RateTrajectory:
    """Random piecewise-linear trajectory clipped to ``[s_min, s_max]``.

    Steps taken while pinned at a bound realise a slope of zero. Slopes are
    stored as exact differences of consecutive states.
    """
    if params.length < 2:
        raise ValueError(f"length must be >= 2, got {params.length}")
    lo, hi = params.level_init_range
    states = np.empty(params.length + 1)
    states[0] = np.clip(rng.uniform(lo, hi), params.s_min, params.s_max)
    t = 0
    while t < params.length:
        n, slope = draw_segment(params, rng)
        n = min(n, params.length - t)
        # Within a segment the drift is monotone, so clipping the ramp once
        # equals clipping step by step.
        ramp = states[t] + slope * np.arange(1, n + 1)
        states[t + 1 : t + n + 1] = np.clip(ramp, params.s_min, params.s_max)
        t += n
    return RateTrajectory.from_states(states)


def constant_trajectory(level: float, length: int) -> RateTrajectory:
    if length < 2:
        raise ValueError(f"length must be >= 2, got {length}")
    return RateTrajectory(np.full(length, float(level)), np.zeros(length))


def linear_ramp(start: float, stop: float, length: int) -> RateTrajectory:
    """Deterministic ramp from ``start`` to ``stop`` over ``length`` steps."""
    if length < 2:
        raise ValueError(f"length must be >= 2, got {length}")
    step = (stop - start) / (length - 1)
    return RateTrajectory.from_states(start + step * np.arange(length + 1))
