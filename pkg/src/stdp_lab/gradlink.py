"""Numerical checks linking the rate rule to gradient descent.

The postsynaptic layer is ``s = alpha + beta * W @ rho(s_prev)``, so
``ds_i/dW_ij = beta * rho(s_prev_j)``. If the postsynaptic state relaxes
down the gradient of an objective ``J``, the rate rule's update equals a
scaled gradient step on ``W``; :func:`sgd_equivalence_run` checks this
against finite differences of ``J``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .rates import ActivationParams, rho
from .rules import RuleParams, rate_update

REL_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class LayeredNetwork:
    alpha: float
    beta: float
    weights: np.ndarray  # shape (n_post, n_pre)
    act: ActivationParams = field(default_factory=ActivationParams)

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if w.ndim != 2:
            raise ValueError("weights must be a matrix")
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta) and np.all(np.isfinite(w))):
            raise ValueError("network parameters must be finite")
        object.__setattr__(self, "weights", w)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def with_weights(self, weights) -> LayeredNetwork:
        return replace(self, weights=weights)


@dataclass(frozen=True, eq=False)
class Objective:
    """Squared error ``0.5 * sum((s - target)**2)`` on the output units."""

    target: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float).ravel())

    def __call__(self, s) -> float:
        err = np.asarray(s, dtype=float) - self.target
        return 0.5 * float(err @ err)

    def grad(self, s) -> np.ndarray:
        return np.asarray(s, dtype=float) - self.target


def random_network(rng: np.random.Generator, n_post: int = 3, n_pre: int = 4, **kwargs) -> LayeredNetwork:
    """Random instance: ``alpha`` and ``beta`` uniform, weights standard normal."""
    alpha = float(rng.uniform(-1, 1))
    beta = float(rng.uniform(0.5, 2.0))
    weights = rng.normal(size=(n_post, n_pre))
    return LayeredNetwork(alpha, beta, weights, **kwargs)


def _check_prev(net: LayeredNetwork, s_prev) -> np.ndarray:
    s_prev = np.asarray(s_prev, dtype=float).ravel()
    if len(s_prev) != net.shape[1]:
        raise ValueError(f"s_prev has length {len(s_prev)}, network expects {net.shape[1]}")
    return s_prev


def _forward(net: LayeredNetwork, weights: np.ndarray, s_prev: np.ndarray) -> np.ndarray:
    # No validation: finite-difference probes may push weights out of range.
    return net.alpha + net.beta * (weights @ rho(s_prev, net.act))


def step_activation(net: LayeredNetwork, s_prev) -> np.ndarray:
    """One discrete-time step of the postsynaptic layer."""
    return _forward(net, net.weights, _check_prev(net, s_prev))


def analytic_ds_dw(net: LayeredNetwork, s_prev) -> np.ndarray:
    """Sensitivities ``ds_i/dW_ij`` as an ``(n_post, n_pre)`` matrix (rows identical)."""
    s_prev = _check_prev(net, s_prev)
    row = net.beta * np.asarray(rho(s_prev, net.act), dtype=float)
    return np.tile(row, (net.shape[0], 1))


def relative_error(a, b, floor: float = REL_FLOOR) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass(frozen=True, eq=False)
class GradCheckReport:
    max_rel_error: float
    abs_errors: np.ndarray
    h: float
    finite: bool

    def passed(self, tol: float) -> bool:
        return self.finite and self.max_rel_error <= tol


def numeric_ds_dw(net: LayeredNetwork, s_prev, h: float) -> np.ndarray:
    """Central differences of ``s_i`` with respect to ``W_ij``.

    Only output ``i`` depends on row ``i`` of ``W``, so entry ``(i, j)``
    differences ``s_i`` alone.
    """
    s_prev = _check_prev(net, s_prev)
    n_post, n_pre = net.shape
    out = np.empty((n_post, n_pre))
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_post):
            for j in range(n_pre):
                plus = net.weights.copy()
                minus = net.weights.copy()
                plus[i, j] += h
                minus[i, j] -= h
                diff = _forward(net, plus, s_prev)[i] - _forward(net, minus, s_prev)[i]
                out[i, j] = diff / (2 * h)
    return out


def check_gradient(net: LayeredNetwork, s_prev, h: float = 1e-4) -> GradCheckReport:
    """Compare :func:`analytic_ds_dw` against central differences."""
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    analytic = analytic_ds_dw(net, s_prev)
    numeric = numeric_ds_dw(net, s_prev, h)
    finite = bool(np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric)))
    rel = relative_error(analytic, numeric)
    return GradCheckReport(float(np.max(rel)), np.abs(analytic - numeric), h, finite)


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    """Per-step comparison of rate-rule updates with gradient steps.

    ``rule_updates[k]`` is the rate-rule update matrix at relaxation step
    ``k`` and ``fd_steps[k]`` the scaled gradient step ``-(eps/beta) dJ/dW``
    from central differences of ``J``.
    """

    objective: np.ndarray
    rule_updates: np.ndarray
    fd_steps: np.ndarray
    chain_rel_dev: np.ndarray
    fd_rel_dev: np.ndarray
    eps: float
    h: float

    @property
    def max_chain_rel_dev(self) -> float:
        return float(self.chain_rel_dev.max()) if len(self.chain_rel_dev) else 0.0

    @property
    def max_fd_rel_dev(self) -> float:
        return float(self.fd_rel_dev.max()) if len(self.fd_rel_dev) else 0.0

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.objective) <= 0))


def _fd_dj_dw(net: LayeredNetwork, obj: Objective, s_prev: np.ndarray, s_now: np.ndarray, h: float) -> np.ndarray:
    """Central differences of ``J`` under weight perturbations at the current state.

    A perturbation of ``W`` moves the output by ``step_activation(W') -
    step_activation(W)``; that shift is applied to the relaxed state ``s_now``.
    """
    base = step_activation(net, s_prev)
    n_post, n_pre = net.shape
    out = np.empty((n_post, n_pre))
    for i in range(n_post):
        for j in range(n_pre):
            plus = net.weights.copy()
            minus = net.weights.copy()
            plus[i, j] += h
            minus[i, j] -= h
            j_plus = obj(s_now + (_forward(net, plus, s_prev) - base))
            j_minus = obj(s_now + (_forward(net, minus, s_prev) - base))
            out[i, j] = (j_plus - j_minus) / (2 * h)
    return out


def sgd_equivalence_run(
    net: LayeredNetwork,
    obj: Objective,
    s_prev,
    relax_steps: int = 50,
    eps: float = 1e-2,
    h: float = 1e-4,
    s_init=None,
    bound: float = 1e6,
) -> EquivalenceReport:
    """Relax the output down ``dJ/ds`` and compare rule updates with gradient steps.

    The output starts at ``s_init`` (default: one activation step from
    ``s_prev``) and moves by ``-eps * dJ/ds`` each step, so its slope is
    proportional to minus the objective gradient. At each step the rate
    rule (``eta = 1``) applied to that slope is compared with
    ``-(eps / beta) * dJ/dW``, once from the chain rule and once from
    central differences of ``J``.
    """
    if net.beta == 0:
        raise ValueError("beta must be non-zero")
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    s_prev = _check_prev(net, s_prev)
    if len(obj.target) != net.shape[0]:
        raise ValueError("target length must equal the number of output units")
    s = step_activation(net, s_prev) if s_init is None else np.asarray(s_init, dtype=float).copy()
    rule = RuleParams(eta=1.0)

    objective = [obj(s)]
    rule_updates, fd_steps, chain_dev, fd_dev = [], [], [], []
    for _ in range(relax_steps):
        grad_s = obj.grad(s)
        sdot = -eps * grad_s
        update = rate_update(sdot[:, None], s_prev[None, :], net.act, rule)
        chain = -(eps / net.beta) * (grad_s[:, None] * analytic_ds_dw(net, s_prev))
        fd = -(eps / net.beta) * _fd_dj_dw(net, obj, s_prev, s, h)
        rule_updates.append(update)
        fd_steps.append(fd)
        chain_dev.append(relative_error(update, chain).max())
        fd_dev.append(relative_error(update, fd).max())

        s = s + sdot
        if not np.all(np.isfinite(s)) or np.max(np.abs(s)) > bound:
            raise DivergenceError(f"relaxation left |s| <= {bound}")
        objective.append(obj(s))
    return EquivalenceReport(
        np.array(objective), np.array(rule_updates), np.array(fd_steps), np.array(chain_dev), np.array(fd_dev), eps, h
    )
