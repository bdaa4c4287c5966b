"""Weight-update rules: rate form, spike-gated form, nearest-neighbour STDP.

Convention throughout: the update of the synapse from a presynaptic to a
postsynaptic neuron is ``eta * D_post * rho(s_pre)``, with ``D_post`` the
postsynaptic slope (``state`` mode) or the slope of its firing rate
(``rate`` mode).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .rates import ActivationParams, rho, rho_prime
from .spikes import SpikeTrain


class DerivativeMode(str, enum.Enum):
    STATE = "state"
    RATE = "rate"


class PairingKind(str, enum.Enum):
    NO_POST = "NoPost"
    BOTH_SIDES = "BothSides"
    COINCIDENT = "Coincident"
    VALID = "Valid"


# Integer codes used by the vectorised classifier.
KIND_CODES = {PairingKind.NO_POST: 0, PairingKind.BOTH_SIDES: 1, PairingKind.COINCIDENT: 2, PairingKind.VALID: 3}


@dataclass(frozen=True)
class RuleParams:
    eta: float = 1.0
    derivative_mode: DerivativeMode = DerivativeMode.STATE
    window: int = 20
    kernel_amplitude: float = 1.0
    kernel_tau: float = 5.0
    # "truncate": edge windows are classified over the part inside the train;
    # "discard": presynaptic spikes whose window leaves the train are skipped.
    boundary: str = "truncate"

    def __post_init__(self):
        object.__setattr__(self, "derivative_mode", DerivativeMode(self.derivative_mode))
        if not math.isfinite(self.eta):
            raise ValueError("eta must be finite")
        if int(self.window) != self.window or self.window < 1:
            raise ValueError(f"window must be an integer >= 1, got {self.window}")
        if not self.kernel_tau > 0:
            raise ValueError(f"kernel_tau must be > 0, got {self.kernel_tau}")
        if self.boundary not in ("truncate", "discard"):
            raise ValueError(f"boundary must be 'truncate' or 'discard', got {self.boundary!r}")


@dataclass(frozen=True)
class PairingOutcome:
    t_pre: int
    kind: PairingKind
    dt: int | None = None

    def __post_init__(self):
        if (self.kind is PairingKind.VALID) != (self.dt is not None):
            raise ValueError("dt is defined exactly when kind is Valid")
        if self.dt is not None and self.dt == 0:
            raise ValueError("a valid pairing has dt != 0")


def post_drive(sdot_post, p: RuleParams, s_post=None, act: ActivationParams | None = None):
    """The postsynaptic factor ``D_post`` of the update."""
    if p.derivative_mode is DerivativeMode.STATE:
        return sdot_post
    if s_post is None or act is None:
        raise ValueError("rate derivative mode needs s_post and act")
    return rho_prime(s_post, act) * sdot_post


def rate_update(sdot_post, s_pre, act: ActivationParams, p: RuleParams, s_post=None):
    """Average weight change ``eta * D_post * rho(s_pre)``."""
    return p.eta * post_drive(sdot_post, p, s_post, act) * rho(s_pre, act)


def spike_update(sdot_post, xi_pre, p: RuleParams, s_post=None, act: ActivationParams | None = None):
    """Spike-gated update: ``eta * D_post`` when the presynaptic neuron fires, else 0."""
    if np.ndim(xi_pre) == 0:
        if not xi_pre:
            return 0.0
        return p.eta * post_drive(sdot_post, p, s_post, act)
    return np.where(xi_pre, p.eta * post_drive(sdot_post, p, s_post, act), 0.0)


def classify_pairing(t_pre: int, post, window: int) -> PairingOutcome:
    """Nearest-neighbour pairing of one presynaptic spike against a post train.

    Looks at ``[t_pre - window, t_pre + window]`` clipped to the train.
    """
    xi = post.xi if isinstance(post, SpikeTrain) else np.asarray(post, dtype=bool)
    n = len(xi)
    if not 0 <= t_pre < n:
        raise IndexError(f"t_pre={t_pre} outside train of length {n}")
    if xi[t_pre]:
        return PairingOutcome(t_pre, PairingKind.COINCIDENT)
    left = np.flatnonzero(xi[max(0, t_pre - window) : t_pre])
    right = np.flatnonzero(xi[t_pre + 1 : t_pre + window + 1])
    if len(left) and len(right):
        return PairingOutcome(t_pre, PairingKind.BOTH_SIDES)
    if len(right):
        return PairingOutcome(t_pre, PairingKind.VALID, int(right[0]) + 1)
    if len(left):
        nearest = max(0, t_pre - window) + int(left[-1])
        return PairingOutcome(t_pre, PairingKind.VALID, nearest - t_pre)
    return PairingOutcome(t_pre, PairingKind.NO_POST)


def classify_matrix(post: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Classify every step of every train as a hypothetical presynaptic spike time.

    ``post`` has shape ``(n_trains, L)``. Returns ``(kind_code, dt)`` arrays of
    the same shape; ``dt`` is meaningful only where the kind is Valid.
    """
    post = np.asarray(post, dtype=bool)
    n, length = post.shape
    far = 2 * length + 2 * window + 2
    idx = np.arange(length)
    last = np.maximum.accumulate(np.where(post, idx, -far), axis=1)
    nxt = np.minimum.accumulate(np.where(post, idx, far)[:, ::-1], axis=1)[:, ::-1]
    # Strictly before / strictly after each step.
    before = np.concatenate([np.full((n, 1), -far), last[:, :-1]], axis=1)
    after = np.concatenate([nxt[:, 1:], np.full((n, 1), far)], axis=1)
    gap_left = idx - before
    gap_right = after - idx
    has_left = gap_left <= window
    has_right = gap_right <= window

    kind = np.full(post.shape, KIND_CODES[PairingKind.NO_POST], dtype=np.int8)
    kind[has_left | has_right] = KIND_CODES[PairingKind.VALID]
    kind[has_left & has_right] = KIND_CODES[PairingKind.BOTH_SIDES]
    kind[post] = KIND_CODES[PairingKind.COINCIDENT]
    dt = np.where(has_right, gap_right, -gap_left)
    dt[kind != KIND_CODES[PairingKind.VALID]] = 0
    return kind, dt


def stdp_kernel(dt, p: RuleParams):
    """Signed exponential ``A * sign(dt) * exp(-|dt| / tau)`` (0 at ``dt = 0``)."""
    dt_arr = np.asarray(dt, dtype=float)
    out = p.kernel_amplitude * np.sign(dt_arr) * np.exp(-np.abs(dt_arr) / p.kernel_tau)
    return float(out) if out.ndim == 0 else out


def nn_stdp_update(outcome: PairingOutcome, p: RuleParams) -> float:
    if outcome.kind is not PairingKind.VALID:
        return 0.0
    return stdp_kernel(outcome.dt, p)
