"""Weighted moments and fixed-edge binning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def weighted_moments(values, weights):
    """Mean, count and standard error along axis 0 with frequency weights.

    ``values`` and ``weights`` broadcast against each other. The mean is taken
    around the first positively weighted value, so a column of identical
    values has that value as its mean exactly and a zero standard error.
    Columns with no weight get ``nan`` mean; a single sample gets ``nan`` error.
    """
    weights = np.asarray(weights, dtype=float)
    values = np.broadcast_to(np.asarray(values, dtype=float), np.broadcast_shapes(np.shape(values), weights.shape))
    weights = np.broadcast_to(weights, values.shape)
    count = weights.sum(axis=0)
    has = weights > 0
    first = np.argmax(has, axis=0)
    shift = np.take_along_axis(values, np.expand_dims(first, 0), axis=0)[0]
    with np.errstate(invalid="ignore", divide="ignore"):
        dev = np.where(has, values - shift, 0.0)
        mean = shift + (weights * dev).sum(axis=0) / count
        resid = np.where(has, values - mean, 0.0)
        m2 = (weights * resid * resid).sum(axis=0)
        var = m2 / (count - 1)
        stderr = np.sqrt(var / count)
    mean = np.where(count > 0, mean, np.nan)
    stderr = np.where(count > 1, stderr, np.nan)
    return mean, count, stderr


@dataclass(frozen=True, eq=False)
class BinStatistics:
    edges: np.ndarray
    mean: np.ndarray
    count: np.ndarray
    stderr: np.ndarray
    n_outside: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def bin_statistics(keys, values, edges, weights=None) -> BinStatistics:
    """Per-bin mean/count/stderr of ``values`` grouped by ``keys``.

    Bins are half-open ``[edges[k], edges[k+1])``. Samples outside every bin
    are excluded and tallied in ``n_outside``.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2:
        raise ValueError("need at least two bin edges")
    if not np.all(np.diff(edges) > 0):
        raise ValueError("bin edges must be strictly increasing")
    keys = np.asarray(keys, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    weights = np.ones_like(keys) if weights is None else np.asarray(weights, dtype=float).ravel()
    if not len(keys) == len(values) == len(weights):
        raise ValueError("keys, values and weights must have equal length")

    n_bins = len(edges) - 1
    which = np.searchsorted(edges, keys, side="right") - 1
    inside = (which >= 0) & (which < n_bins)
    mean = np.full(n_bins, np.nan)
    count = np.zeros(n_bins)
    stderr = np.full(n_bins, np.nan)
    for k in range(n_bins):
        sel = inside & (which == k) & (weights > 0)
        if sel.any():
            m, c, e = weighted_moments(values[sel], weights[sel])
            mean[k], count[k], stderr[k] = m, c, e
    return BinStatistics(edges, mean, count, stderr, float(weights[~inside].sum()))
