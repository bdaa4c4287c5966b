"""Discrete-time spike sampling: one Bernoulli draw per step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rates import ActivationParams, RateTrajectory, rho


@dataclass(frozen=True, eq=False)
class SpikeTrain:
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=bool))

    def __len__(self):
        return len(self.xi)


def sample_spike_matrix(
    traj: RateTrajectory, act: ActivationParams, rng: np.random.Generator, n_trains: int
) -> np.ndarray:
    """Boolean array of shape ``(n_trains, len(traj))``; row ``i`` is train ``i``.

    Uniforms are consumed row by row, so the first ``k`` rows do not depend
    on ``n_trains`` and row 0 equals :func:`sample_spikes` on the same stream.
    """
    p = rho(traj.s, act)
    return rng.random((n_trains, len(traj))) < p


def sample_spikes(traj: RateTrajectory, act: ActivationParams, rng: np.random.Generator) -> SpikeTrain:
    return SpikeTrain(sample_spike_matrix(traj, act, rng, 1)[0])


def spike_times(train) -> np.ndarray:
    xi = train.xi if isinstance(train, SpikeTrain) else np.asarray(train, dtype=bool)
    return np.flatnonzero(xi)
