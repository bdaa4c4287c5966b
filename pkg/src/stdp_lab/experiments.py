"""Monte Carlo experiments over random rate sequences.

Every sequence is an independent work unit whose random streams derive only
from ``(master_seed, sequence_index)``, and partial results are gathered in
index order before any reduction. Results are therefore identical for any
number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .rates import ActivationParams, RateTrajectory, TrajectoryParams, generate_trajectory, rho
from .rules import KIND_CODES, PairingKind, RuleParams, classify_matrix, rate_update, spike_update, stdp_kernel
from .spikes import sample_spike_matrix
from .stats import BinStatistics, bin_statistics, weighted_moments

__all__ = [
    "ExperimentConfig",
    "EventTable",
    "StdpCurve",
    "RuleAgreement",
    "RateDynamicsReport",
    "TraceRecord",
    "DegenerateRegressionError",
    "bin_statistics",
    "run_events",
    "events_for_trajectories",
    "pair_events",
    "run_stdp_curve",
    "run_rule_agreement",
    "run_rate_dynamics",
    "dump_example_trace",
    "sequence_rng",
    "trace_rng",
    "closed_loop",
]

# Stream indices within one sequence.
PRE_TRAJ, POST_TRAJ, PRE_TRAINS, POST_TRAINS = range(4)
# Spawn key reserved for the example trace, outside any sequence index.
TRACE_KEY = 2**63


class DegenerateRegressionError(ValueError):
    """Fewer than two populated bins; no correlation or slope is defined."""


@dataclass(frozen=True)
class ExperimentConfig:
    trajectory: TrajectoryParams = field(default_factory=TrajectoryParams)
    activation: ActivationParams = field(default_factory=ActivationParams)
    rule: RuleParams = field(default_factory=RuleParams)
    n_sequences: int = 500
    seq_len: int = 160
    n_trains: int = 1000
    dt_bins: int | None = None
    agreement_bins: int = 20
    master_seed: int = 12345
    # "spike": per-event update eta * D_post (gated form); "rate": eta * D_post * rho(s_pre).
    update_form: str = "spike"
    time_reversed: bool = False
    # Closed-loop dynamics and example-trace settings.
    alpha: float = 0.0
    beta: float = 1.0
    w_init: float = 1.0
    trace_eta: float = 0.01

    def __post_init__(self):
        for name in ("n_sequences", "seq_len", "n_trains", "agreement_bins"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
        if self.seq_len < 2:
            raise ValueError(f"seq_len must be >= 2, got {self.seq_len}")
        expected = 2 * self.rule.window + 1
        if self.dt_bins is None:
            object.__setattr__(self, "dt_bins", expected)
        elif self.dt_bins != expected:
            raise ValueError(f"dt_bins must be 2*window+1 = {expected}, got {self.dt_bins}")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.update_form not in ("spike", "rate"):
            raise ValueError(f"update_form must be 'spike' or 'rate', got {self.update_form!r}")
        for name in ("alpha", "beta", "w_init", "trace_eta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.trajectory.length != self.seq_len:
            object.__setattr__(self, "trajectory", replace(self.trajectory, length=self.seq_len))

    @property
    def window(self) -> int:
        return self.rule.window

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, master_seed=seed)


def sequence_rng(master_seed: int, key: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(key), stream)))


def _trajectory_pair(cfg: ExperimentConfig, q: int) -> tuple[RateTrajectory, RateTrajectory]:
    pre = generate_trajectory(cfg.trajectory, sequence_rng(cfg.master_seed, q, PRE_TRAJ))
    post = generate_trajectory(cfg.trajectory, sequence_rng(cfg.master_seed, q, POST_TRAJ))
    if cfg.time_reversed:
        pre, post = pre.reversed(), post.reversed()
    return pre, post


def _event_values(cfg: ExperimentConfig, pre: RateTrajectory, post: RateTrajectory) -> np.ndarray:
    """Proposed-rule update attached to a presynaptic spike at each step."""
    length = len(pre)
    if cfg.update_form == "spike":
        return spike_update(post.sdot, np.ones(length, dtype=bool), cfg.rule, s_post=post.s, act=cfg.activation)
    return rate_update(post.sdot, pre.s, cfg.activation, cfg.rule, s_post=post.s)


@dataclass(frozen=True, eq=False)
class EventTable:
    """Valid-pairing counts per (sequence, presynaptic step, dt) plus tallies.

    ``counts[q, t, k]`` counts Valid pairings at presynaptic step ``t`` with
    ``dt = k - window``; ``values[q, t]`` is the proposed-rule update for a
    presynaptic spike at that step.
    """

    window: int
    counts: np.ndarray
    values: np.ndarray
    kinds: np.ndarray
    edge_skipped: np.ndarray

    @property
    def dts(self) -> np.ndarray:
        return np.arange(-self.window, self.window + 1)

    def kind_totals(self) -> dict[str, int]:
        totals = self.kinds.sum(axis=0)
        return {kind.value: int(totals[code]) for kind, code in KIND_CODES.items()}

    @property
    def n_examined(self) -> int:
        return int(self.kinds.sum())


def pair_events(
    cfg: ExperimentConfig,
    pre: RateTrajectory,
    post: RateTrajectory,
    pre_rng: np.random.Generator,
    post_rng: np.random.Generator,
):
    """Sample ``n_trains`` train pairs on one trajectory pair and tabulate pairings."""
    window = cfg.window
    length = len(pre)
    pre_spikes = sample_spike_matrix(pre, cfg.activation, pre_rng, cfg.n_trains)
    post_spikes = sample_spike_matrix(post, cfg.activation, post_rng, cfg.n_trains)
    kind, dt = classify_matrix(post_spikes, window)

    examined = pre_spikes.copy()
    if cfg.rule.boundary == "discard":
        inner = np.zeros(length, dtype=bool)
        inner[window : length - window] = True
        examined &= inner
    skipped = int(pre_spikes.sum() - examined.sum())

    kinds = np.bincount(kind[examined], minlength=len(KIND_CODES))
    valid = examined & (kind == KIND_CODES[PairingKind.VALID])
    rows, cols = np.nonzero(valid)
    counts = np.zeros((length, 2 * window + 1), dtype=np.int32)
    np.add.at(counts, (cols, dt[rows, cols] + window), 1)
    return counts, _event_values(cfg, pre, post), kinds, skipped


def _simulate_sequences(cfg: ExperimentConfig, indices: range):
    out = []
    for q in indices:
        pre, post = _trajectory_pair(cfg, q)
        pre_rng = sequence_rng(cfg.master_seed, q, PRE_TRAINS)
        post_rng = sequence_rng(cfg.master_seed, q, POST_TRAINS)
        out.append(pair_events(cfg, pre, post, pre_rng, post_rng))
    return out


def _blocks(n: int, workers: int) -> list[range]:
    n_blocks = min(n, max(1, workers) * 4)
    bounds = np.linspace(0, n, n_blocks + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _map_sequences(func, cfg: ExperimentConfig, workers: int | None) -> list:
    workers = 1 if workers is None else int(workers)
    blocks = _blocks(cfg.n_sequences, workers)
    if workers <= 1 or len(blocks) == 1:
        parts = [func(cfg, block) for block in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(func, [cfg] * len(blocks), blocks))
    return [item for part in parts for item in part]


def _table(window: int, results) -> EventTable:
    return EventTable(
        window=window,
        counts=np.stack([r[0] for r in results]),
        values=np.stack([r[1] for r in results]),
        kinds=np.stack([r[2] for r in results]).astype(np.int64),
        edge_skipped=np.array([r[3] for r in results], dtype=np.int64),
    )


def run_events(cfg: ExperimentConfig, workers: int | None = 1) -> EventTable:
    """Simulate all sequences and trains and tabulate the pairing events."""
    return _table(cfg.window, _map_sequences(_simulate_sequences, cfg, workers))


def events_for_trajectories(cfg: ExperimentConfig, pairs, seed: int | None = None) -> EventTable:
    """Event table for given ``(pre, post)`` trajectory pairs instead of random ones."""
    seed = cfg.master_seed if seed is None else seed
    results = [
        pair_events(cfg, pre, post, sequence_rng(seed, q, PRE_TRAINS), sequence_rng(seed, q, POST_TRAINS))
        for q, (pre, post) in enumerate(pairs)
    ]
    return _table(cfg.window, results)


@dataclass(frozen=True, eq=False)
class StdpCurve:
    """Mean weight update per spike-timing difference (``dt != 0``)."""

    rule: str
    dt: np.ndarray
    mean: np.ndarray
    count: np.ndarray
    stderr: np.ndarray

    def at(self, dt: int) -> tuple[float, int, float]:
        (i,) = np.flatnonzero(self.dt == dt)
        return float(self.mean[i]), int(self.count[i]), float(self.stderr[i])

    @property
    def n_events(self) -> int:
        return int(self.count.sum())


def _curves_from_events(events: EventTable, rule: RuleParams) -> tuple[StdpCurve, StdpCurve]:
    dts = events.dts
    keep = dts != 0
    weights = events.counts.reshape(-1, len(dts)).astype(float)
    values = events.values.reshape(-1, 1)
    proposed = weighted_moments(values, weights)
    nn = weighted_moments(stdp_kernel(dts, rule)[None, :], weights)
    curves = []
    for name, (mean, count, stderr) in (("proposed", proposed), ("nn", nn)):
        curves.append(StdpCurve(name, dts[keep], mean[keep], count[keep].astype(np.int64), stderr[keep]))
    return curves[0], curves[1]


def run_stdp_curve(
    cfg: ExperimentConfig, workers: int | None = 1, events: EventTable | None = None
) -> tuple[StdpCurve, StdpCurve]:
    """Proposed-rule and nearest-neighbour STDP curves over the same events."""
    if events is None:
        events = run_events(cfg, workers)
    return _curves_from_events(events, cfg.rule)


@dataclass(frozen=True, eq=False)
class RuleAgreement:
    bins: BinStatistics
    correlation: float
    slope: float
    intercept: float

    @property
    def populated(self) -> np.ndarray:
        return self.bins.count > 0


def run_rule_agreement(
    cfg: ExperimentConfig, workers: int | None = 1, events: EventTable | None = None
) -> RuleAgreement:
    """Bin Valid pairings by proposed-rule update; average the NN update per bin."""
    if events is None:
        events = run_events(cfg, workers)
    dts = events.dts
    weights = events.counts.reshape(-1, len(dts)).astype(float)
    x = np.broadcast_to(events.values.reshape(-1, 1), weights.shape)
    y = np.broadcast_to(stdp_kernel(dts, cfg.rule)[None, :], weights.shape)
    used = weights > 0
    x, y, weights = x[used], y[used], weights[used]
    if len(x) == 0:
        raise DegenerateRegressionError("no valid pairings")
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise DegenerateRegressionError(f"all proposed-rule updates equal {lo}")
    edges = np.linspace(lo, hi, cfg.agreement_bins + 1)
    edges[-1] = np.nextafter(hi, np.inf)
    bins = bin_statistics(x, y, edges, weights)
    populated = bins.count > 0
    if populated.sum() < 2:
        raise DegenerateRegressionError("fewer than two populated bins")
    cx, cy = bins.centers[populated], bins.mean[populated]
    slope, intercept = np.polyfit(cx, cy, 1)
    r = float(np.corrcoef(cx, cy)[0, 1])
    return RuleAgreement(bins, r, float(slope), float(intercept))


@dataclass(frozen=True, eq=False)
class RateDynamicsReport:
    """Mean squared postsynaptic slope with and without plasticity (paired)."""

    plastic: np.ndarray
    frozen: np.ndarray

    @property
    def trials(self) -> int:
        return len(self.plastic)

    @staticmethod
    def _mean_se(x: np.ndarray) -> tuple[float, float]:
        se = float(np.std(x, ddof=1) / np.sqrt(len(x))) if len(x) > 1 else math.nan
        return float(np.mean(x)), se

    @property
    def mean_sq_plastic(self) -> tuple[float, float]:
        return self._mean_se(self.plastic)

    @property
    def mean_sq_frozen(self) -> tuple[float, float]:
        return self._mean_se(self.frozen)

    @property
    def difference(self) -> tuple[float, float]:
        """Paired ``plastic - frozen`` mean and standard error."""
        return self._mean_se(self.plastic - self.frozen)


def closed_loop(
    cfg: ExperimentConfig, pre: RateTrajectory, drive: RateTrajectory, plastic: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Single-synapse loop ``s(t) = alpha + beta * W * rho(s_pre(t-1)) + d(t)``.

    Returns the realised slopes ``s(t) - s(t-1)`` (``t >= 2``) and the weight
    after each step. With ``plastic`` the weight moves by the rate-form update
    (learning rate ``trace_eta``) once each slope is known.
    """
    rule = replace(cfg.rule, eta=cfg.trace_eta)
    act = cfg.activation
    s_pre = [float(v) for v in pre.s]
    w = float(cfg.w_init)
    weights = [w]
    slopes = []
    prev = None
    for t in range(1, len(pre)):
        s = cfg.alpha + cfg.beta * w * rho(s_pre[t - 1], act) + float(drive.s[t])
        if prev is not None:
            sdot = s - prev
            slopes.append(sdot)
            if plastic:
                w = w + rate_update(sdot, s_pre[t - 1], act, rule, s_post=s)
        weights.append(w)
        prev = s
    return np.array(slopes), np.array(weights)


def _dynamics_sequences(cfg: ExperimentConfig, indices: range):
    out = []
    for q in indices:
        pre, drive = _trajectory_pair(cfg, q)
        plastic, _ = closed_loop(cfg, pre, drive, plastic=True)
        frozen, _ = closed_loop(cfg, pre, drive, plastic=False)
        out.append((np.mean(plastic * plastic), np.mean(frozen * frozen)))
    return out


def run_rate_dynamics(cfg: ExperimentConfig, workers: int | None = 1) -> RateDynamicsReport:
    """Mean squared slope of the closed loop, plastic vs frozen weight.

    Both arms of sequence ``q`` see the same presynaptic trajectory and drive.
    """
    results = _map_sequences(_dynamics_sequences, cfg, workers)
    return RateDynamicsReport(
        plastic=np.array([r[0] for r in results]), frozen=np.array([r[1] for r in results])
    )


@dataclass(frozen=True, eq=False)
class TraceRecord:
    t: np.ndarray
    xi_pre: np.ndarray
    s_pre: np.ndarray
    s_post: np.ndarray
    sdot_post: np.ndarray
    updates: np.ndarray
    w: np.ndarray
    w_init: float


def dump_example_trace(cfg: ExperimentConfig, rng: np.random.Generator) -> TraceRecord:
    """One sequence with the weight driven by the spike-gated rule.

    ``w[t]`` is the weight after step ``t``; it changes only on presynaptic
    spikes, by ``spike_update`` with learning rate ``trace_eta``.
    """
    rule = replace(cfg.rule, eta=cfg.trace_eta)
    pre_rng, post_rng, spike_rng = rng.spawn(3)
    pre = generate_trajectory(cfg.trajectory, pre_rng)
    post = generate_trajectory(cfg.trajectory, post_rng)
    if cfg.time_reversed:
        pre, post = pre.reversed(), post.reversed()
    xi = sample_spike_matrix(pre, cfg.activation, spike_rng, 1)[0]
    updates = np.zeros(len(pre))
    w = np.empty(len(pre))
    current = float(cfg.w_init)
    for t in range(len(pre)):
        if xi[t]:
            updates[t] = spike_update(float(post.sdot[t]), True, rule, s_post=float(post.s[t]), act=cfg.activation)
            current = current + updates[t]
        w[t] = current
    return TraceRecord(np.arange(len(pre)), xi, pre.s, post.s, post.sdot, updates, w, float(cfg.w_init))


def trace_rng(master_seed: int) -> np.random.Generator:
    return sequence_rng(master_seed, TRACE_KEY, 0)
