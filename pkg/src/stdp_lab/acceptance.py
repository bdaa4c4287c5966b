"""End-to-end acceptance checks, shared by ``stdp-lab verify`` and the test suite.

Each check returns one or more :class:`CheckResult` lines. Tolerances are
fixed here and never adjusted at run time.
"""

from __future__ import annotations

import itertools
import math
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import gradlink
from .experiments import (
    ExperimentConfig,
    run_events,
    run_rate_dynamics,
    run_rule_agreement,
    run_stdp_curve,
    sequence_rng,
)
from .rates import ActivationParams, linear_ramp, rho
from .rules import KIND_CODES, PairingKind, RuleParams, classify_matrix, classify_pairing, rate_update, spike_update, stdp_kernel
from .spikes import sample_spike_matrix

SIGMAS = 3.0
TAIL_RATIO = 0.25
MIN_CORRELATION = 0.9
GRAD_TOL = 1e-6
SGD_TOL = 1e-5
UNBIASED_TRAINS = 100_000
ORACLE_TRAINS = 200_000
FULL_RUNTIME_S = 300.0
QUICK_RUNTIME_S = 15.0
SGD_RUNTIME_S = 1.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def quick_config(cfg: ExperimentConfig) -> ExperimentConfig:
    return replace(cfg, n_sequences=100, n_trains=100)


def constant_rate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    return replace(cfg, trajectory=replace(cfg.trajectory, slope_sigma=0.0))


class Context:
    """Caches the expensive runs shared by several criteria."""

    def __init__(self, cfg: ExperimentConfig, quick: bool = False, workers: int = 1):
        self.cfg = quick_config(cfg) if quick else cfg
        self.quick = quick
        self.workers = workers
        self._events = {}
        self.runtime = {}

    def events(self, key: str):
        if key not in self._events:
            cfg = {
                "default": self.cfg,
                # Same seed: the same trajectories, reversed, with trains drawn on them.
                "reversed": replace(self.cfg, time_reversed=True),
                "constant": constant_rate_config(self.cfg),
            }[key]
            start = time.perf_counter()
            self._events[key] = (cfg, run_events(cfg, self.workers))
            self.runtime[key] = time.perf_counter() - start
        return self._events[key]

    def curves(self, key: str):
        cfg, events = self.events(key)
        return run_stdp_curve(cfg, events=events)


def _fmt_bin(curve, dt):
    mean, count, se = curve.at(dt)
    return f"dt={dt:+d}: {mean:.4g} (se {se:.2g}, n={count})"


def check_stdp_shape(ctx: Context) -> list[CheckResult]:
    proposed, _ = ctx.curves("default")
    w = ctx.cfg.window
    problems = []
    for dt in range(1, 6):
        for signed, want in ((dt, 1), (-dt, -1)):
            mean, count, se = proposed.at(signed)
            if not (count > 1 and want * mean > SIGMAS * se and want * mean > 0):
                problems.append(_fmt_bin(proposed, signed))
    ratios = []
    for side in (1, -1):
        edge, near = abs(proposed.at(side * w)[0]), abs(proposed.at(side)[0])
        ratios.append(edge / near if near > 0 else math.inf)
    tail_ok = all(r <= TAIL_RATIO for r in ratios)
    budget = QUICK_RUNTIME_S if ctx.quick else FULL_RUNTIME_S
    runtime = ctx.runtime["default"]
    detail = (
        f"dt=+1 {proposed.at(1)[0]:.4g}, dt=-1 {proposed.at(-1)[0]:.4g}; tail ratios +{ratios[0]:.3f} / -{ratios[1]:.3f} "
        f"(<= {TAIL_RATIO}); runtime {runtime:.1f}s (<= {budget:.0f}s)"
    )
    if problems:
        detail += "; failing bins: " + ", ".join(problems)
    return [CheckResult("1 STDP curve shape (proposed rule)", not problems and tail_ok and runtime <= budget, detail)]


def check_nn_shape(ctx: Context) -> list[CheckResult]:
    _, nn = ctx.curves("default")
    rule = ctx.cfg.rule
    problems = []
    for dt in range(1, 6):
        for signed, want in ((dt, 1), (-dt, -1)):
            mean, count, se = nn.at(signed)
            if not (count > 1 and want * mean > SIGMAS * se and want * mean > 0):
                problems.append(_fmt_bin(nn, signed))
    worst = 0.0
    for dt, mean, count, se in zip(nn.dt, nn.mean, nn.count, nn.stderr):
        if count == 0:
            continue
        gap = abs(mean - stdp_kernel(int(dt), rule))
        se = se if count > 1 else 0.0
        if not gap <= SIGMAS * se:
            problems.append(f"dt={int(dt):+d} off kernel by {gap:.3g} (se {se:.2g})")
        worst = max(worst, gap)
    detail = f"max |mean - kernel| = {worst:.3g}"
    if problems:
        detail += "; failing: " + ", ".join(problems)
    return [CheckResult("2 STDP curve shape (nearest neighbour)", not problems, detail)]


def check_agreement(ctx: Context) -> list[CheckResult]:
    cfg, events = ctx.events("default")
    agreement = run_rule_agreement(cfg, events=events)
    ok = agreement.correlation >= MIN_CORRELATION and agreement.slope > 0
    detail = (
        f"pearson r = {agreement.correlation:.4f} (>= {MIN_CORRELATION}), slope = {agreement.slope:.4g} (> 0), "
        f"{int(agreement.populated.sum())} populated bins"
    )
    return [CheckResult("3 rule agreement", ok, detail)]


def check_null_controls(ctx: Context) -> list[CheckResult]:
    results = []
    proposed, nn = ctx.curves("constant")
    populated = proposed.count > 0
    exact_zero = bool(np.all(proposed.mean[populated] == 0.0))
    results.append(
        CheckResult(
            "4a constant rate: proposed-rule curve identically zero",
            exact_zero and populated.any(),
            f"{int(populated.sum())} populated bins, max |mean| = {np.max(np.abs(proposed.mean[populated])):.3g}",
        )
    )

    bad = []
    for dt, mean, count, se in zip(nn.dt, nn.mean, nn.count, nn.stderr):
        if count > 0 and not abs(mean) <= SIGMAS * se:
            bad.append(int(dt))
    results.append(
        CheckResult(
            "4b constant rate: NN curve bins within 3 se of zero",
            not bad,
            f"{len(bad)} of {int((nn.count > 0).sum())} bins outside; e.g. dt=+1 mean {nn.at(1)[0]:.4g} se {nn.at(1)[2]:.3g}"
            if bad
            else "all bins within 3 se",
        )
    )

    fwd, _ = ctx.curves("default")
    rev, _ = ctx.curves("reversed")
    bad = []
    worst = 0.0
    for dt in fwd.dt:
        m1, n1, s1 = fwd.at(int(dt))
        m2, n2, s2 = rev.at(int(-dt))
        if n1 < 2 or n2 < 2:
            continue
        z = abs(m2 + m1) / math.hypot(s1, s2)
        worst = max(worst, z)
        if z > SIGMAS:
            bad.append(int(dt))
    results.append(
        CheckResult(
            "4c time reversal mirrors and negates the proposed-rule curve",
            not bad,
            f"max |z| = {worst:.2f} over {len(fwd.dt)} bins" + (f"; failing dt {bad}" if bad else ""),
        )
    )
    return results


def check_unbiasedness(seed: int, n: int = UNBIASED_TRAINS) -> list[CheckResult]:
    act = ActivationParams()
    rule = RuleParams(eta=1.0)
    worst = 0.0
    for k, (s_pre, sdot) in enumerate(itertools.product((-2.0, 0.0, 2.0), (-0.3, 0.05, 0.2))):
        rng = sequence_rng(seed, 10_000 + k, 0)
        p = rho(s_pre, act)
        xi = rng.random(n) < p
        mc = float(np.mean(spike_update(sdot, xi, rule)))
        expected = rate_update(sdot, s_pre, act, rule)
        sigma = abs(rule.eta * sdot) * math.sqrt(p * (1 - p) / n)
        worst = max(worst, abs(mc - expected) / sigma)
    return [
        CheckResult(
            "5 spike-gated mean equals rate update",
            worst <= SIGMAS,
            f"max |z| = {worst:.2f} over 9 grid points, {n} trains each",
        )
    ]


def enumerate_pairing_probabilities(p_post: np.ndarray, t_pre: int, window: int, max_spikes: int | None = None):
    """Exact distribution of the pairing outcome by enumerating post-spike patterns.

    Returns ``{dt: probability}`` for Valid outcomes and the total
    probability mass enumerated (less than 1 when ``max_spikes`` restricts
    the patterns).
    """
    length = len(p_post)
    probs: dict[int, float] = {}
    mass = 0.0
    for pattern in itertools.product((False, True), repeat=length):
        if max_spikes is not None and sum(pattern) > max_spikes:
            continue
        prob = 1.0
        for fired, p in zip(pattern, p_post):
            prob *= p if fired else 1.0 - p
        mass += prob
        outcome = classify_pairing(t_pre, np.array(pattern), window)
        if outcome.kind is PairingKind.VALID:
            probs[outcome.dt] = probs.get(outcome.dt, 0.0) + prob
    return probs, mass


def check_small_instance(seed: int, n: int = ORACLE_TRAINS) -> list[CheckResult]:
    """11-step window, linear postsynaptic ramp, presynaptic spike at the centre."""
    window = 5
    length = 2 * window + 1
    t_pre = window
    act = ActivationParams()
    rule = RuleParams(eta=1.0, window=window)
    ramp = linear_ramp(-2.0, 2.0, length)
    p_post = np.asarray(rho(ramp.s, act))
    update = spike_update(float(ramp.sdot[t_pre]), True, rule)

    post = sample_spike_matrix(ramp, act, sequence_rng(seed, 20_000, 0), n)
    kind, dt = classify_matrix(post, window)
    kind, dt = kind[:, t_pre], dt[:, t_pre]
    valid = kind == KIND_CODES[PairingKind.VALID]
    at_most_one = post.sum(axis=1) <= 1

    worst = 0.0
    cond_mean_ok = True
    for label, mask, cap in (("all patterns", np.ones(n, dtype=bool), None), ("<= 1 post spike", at_most_one, 1)):
        exact, mass = enumerate_pairing_probabilities(p_post, t_pre, window, cap)
        m = int(mask.sum())
        for d in [d for d in range(-window, window + 1) if d != 0]:
            prob = exact.get(d, 0.0) / mass
            mc = float(np.sum(valid & mask & (dt == d)) * update / m)
            sigma = abs(update) * math.sqrt(prob * (1 - prob) / m)
            if sigma == 0:
                worst = max(worst, 0.0 if mc == update * prob else math.inf)
                continue
            worst = max(worst, abs(mc - update * prob) / sigma)
            # Bin means of the update itself: every event carries the same value.
            sel = valid & mask & (dt == d)
            if sel.any():
                cond_mean_ok &= bool(np.all(spike_update(ramp.sdot[t_pre], np.ones(sel.sum(), bool), rule) == update))
    return [
        CheckResult(
            "6 small-instance enumeration oracle",
            worst <= SIGMAS and cond_mean_ok,
            f"max |z| = {worst:.2f} over 2 x {2 * window} dt bins, {n} Monte Carlo trains",
        )
    ]


def check_gradient_link(seed: int, instances: int = 5, h: float = 1e-4) -> list[CheckResult]:
    worst = 0.0
    rows_identical = True
    for k in range(instances):
        rng = sequence_rng(seed, 30_000 + k, 0)
        net = gradlink.random_network(rng, 3, 4)
        s_prev = rng.normal(size=4)
        report = gradlink.check_gradient(net, s_prev, h)
        worst = max(worst, report.max_rel_error if report.finite else math.inf)
        sens = gradlink.analytic_ds_dw(net, s_prev)
        rows_identical &= bool(np.all(sens == sens[0]))
    return [
        CheckResult(
            "7 ds/dW analytic vs central differences",
            worst <= GRAD_TOL and rows_identical,
            f"max relative error {worst:.3g} (<= {GRAD_TOL}) over {instances} random 3x4 nets; rows identical: {rows_identical}",
        )
    ]


def check_sgd_equivalence(seed: int, steps: int = 50, eps: float = 1e-2, h: float = 1e-4) -> list[CheckResult]:
    rng = sequence_rng(seed, 40_000, 0)
    net = gradlink.random_network(rng, 3, 4)
    s_prev = rng.normal(size=4)
    obj = gradlink.Objective(rng.normal(size=3))
    start = time.perf_counter()
    report = gradlink.sgd_equivalence_run(net, obj, s_prev, relax_steps=steps, eps=eps, h=h)
    elapsed = time.perf_counter() - start
    ok = report.max_fd_rel_dev <= SGD_TOL and report.monotone and elapsed < SGD_RUNTIME_S
    detail = (
        f"max relative deviation {report.max_fd_rel_dev:.3g} (<= {SGD_TOL}) over {steps} steps; "
        f"J {report.objective[0]:.4g} -> {report.objective[-1]:.4g}, non-increasing: {report.monotone}; "
        f"{elapsed * 1000:.0f} ms"
    )
    return [CheckResult("8 rate rule equals gradient step under relaxation", ok, detail)]


def check_rate_dynamics(ctx: Context) -> list[CheckResult]:
    cfg = ctx.cfg
    report = run_rate_dynamics(cfg, ctx.workers)
    (mp, sp), (mf, sf), (md, sd) = report.mean_sq_plastic, report.mean_sq_frozen, report.difference
    finite = all(math.isfinite(v) for v in (mp, sp, mf, sf, md, sd))
    small = replace(quick_config(cfg), n_sequences=50)
    no_eta = run_rate_dynamics(replace(small, trace_eta=0.0))
    no_beta = run_rate_dynamics(replace(small, beta=0.0))
    eta_same = np.array_equal(no_eta.plastic, no_eta.frozen)
    beta_same = np.array_equal(no_beta.plastic, no_beta.frozen)
    detail = (
        f"E[sdot^2] plastic {mp:.5g} +- {sp:.2g}, frozen {mf:.5g} +- {sf:.2g}, paired difference {md:.3g} +- {sd:.2g} "
        f"({report.trials} trials); eta=0 identical: {eta_same}; beta=0 identical: {beta_same}"
    )
    return [CheckResult("9 squared-slope experiment (paired)", finite and eta_same and beta_same, detail)]


def check_determinism(ctx: Context, workers=(1, 2)) -> list[CheckResult]:
    from .cli import write_outputs

    cfg = ctx.cfg
    digests = []
    with tempfile.TemporaryDirectory() as tmp:
        for w in workers:
            out = Path(tmp) / f"w{w}"
            write_outputs(cfg, out, ("stdp-curve", "agreement", "rate-dynamics", "trace"), workers=w)
            digests.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    same = all(d == digests[0] for d in digests[1:]) and len(digests[0]) == 4
    return [
        CheckResult(
            "10 worker-count invariance of CSV output",
            same,
            f"{', '.join(sorted(digests[0]))} byte-identical for workers {list(workers)}: {same}",
        )
    ]


def run_all(cfg: ExperimentConfig | None = None, quick: bool = False, workers: int = 1, echo=print) -> list[CheckResult]:
    cfg = cfg or ExperimentConfig()
    ctx = Context(cfg, quick=quick, workers=workers)
    seed = ctx.cfg.master_seed
    results = []
    for check in (
        lambda: check_stdp_shape(ctx),
        lambda: check_nn_shape(ctx),
        lambda: check_agreement(ctx),
        lambda: check_null_controls(ctx),
        lambda: check_unbiasedness(seed),
        lambda: check_small_instance(seed),
        lambda: check_gradient_link(seed),
        lambda: check_sgd_equivalence(seed),
        lambda: check_rate_dynamics(ctx),
        lambda: check_determinism(ctx, (1, max(2, workers))),
    ):
        for result in check():
            results.append(result)
            if echo:
                echo(result.line())
    return results
