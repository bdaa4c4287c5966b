"""CSV tables and dependency-free SVG figures."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .experiments import RateDynamicsReport, RuleAgreement, StdpCurve, TraceRecord


class EmptyPlotError(ValueError):
    pass


@dataclass
class Table:
    header: list[str]
    rows: list[tuple]


def _cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        # repr gives the shortest string that round-trips.
        return repr(float(value))
    return str(value)


def emit_csv(table: Table, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.header)
        for row in table.rows:
            writer.writerow([_cell(v) for v in row])


def _parse(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(path) -> Table:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [tuple(_parse(v) for v in row) for row in reader]
    return Table(header, rows)


def curve_table(*curves: StdpCurve) -> Table:
    rows = []
    for curve in curves:
        for dt, mean, count, se in zip(curve.dt, curve.mean, curve.count, curve.stderr):
            rows.append((int(dt), curve.rule, float(mean), int(count), float(se)))
    return Table(["dt", "rule", "mean_dw", "count", "stderr"], rows)


def agreement_table(agreement: RuleAgreement) -> Table:
    bins = agreement.bins
    rows = [(float(c), float(m), int(n)) for c, m, n in zip(bins.centers, bins.mean, bins.count)]
    return Table(["bin_center", "mean_nn_dw", "count"], rows)


def dynamics_table(report: RateDynamicsReport) -> Table:
    rows = []
    for name, (mean, se) in (
        ("plastic", report.mean_sq_plastic),
        ("frozen", report.mean_sq_frozen),
        ("difference", report.difference),
    ):
        rows.append((name, mean, se, report.trials))
    return Table(["condition", "mean_sq_slope", "stderr", "trials"], rows)


def trace_table(trace: TraceRecord) -> Table:
    rows = [(int(t), bool(x), float(s), float(w)) for t, x, s, w in zip(trace.t, trace.xi_pre, trace.s_post, trace.w)]
    return Table(["t", "xi_pre", "s_post", "w"], rows)


# --- SVG ---------------------------------------------------------------------

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=40, bottom=55)
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.3g}"


class _Axes:
    """Linear data-to-pixel mapping for one panel."""

    def __init__(self, xlim, ylim, box):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.left, self.top, self.width, self.height = box

    def px(self, x):
        return self.left + (x - self.x0) / (self.x1 - self.x0) * self.width

    def py(self, y):
        return self.top + (self.y1 - y) / (self.y1 - self.y0) * self.height


def _limits(values, pad=0.05, include_zero=False):
    values = np.asarray([v for v in np.ravel(values) if math.isfinite(v)], dtype=float)
    if include_zero:
        values = np.append(values, 0.0)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        span = abs(lo) if lo else 1.0
        return lo - span, hi + span
    span = hi - lo
    return lo - pad * span, hi + pad * span


def _frame(ax: _Axes, xlabel: str, ylabel: str, n_ticks=5) -> list[str]:
    out = [
        f'<rect class="plot-area" x="{_fmt(ax.left)}" y="{_fmt(ax.top)}" width="{_fmt(ax.width)}" '
        f'height="{_fmt(ax.height)}" fill="none" stroke="#333"/>'
    ]
    for v in np.linspace(ax.x0, ax.x1, n_ticks):
        x = ax.px(v)
        bottom = ax.top + ax.height
        out.append(f'<line x1="{_fmt(x)}" y1="{_fmt(bottom)}" x2="{_fmt(x)}" y2="{_fmt(bottom + 5)}" stroke="#333"/>')
        out.append(f'<text x="{_fmt(x)}" y="{_fmt(bottom + 18)}" font-size="11" text-anchor="middle">{_tick_label(v)}</text>')
    for v in np.linspace(ax.y0, ax.y1, n_ticks):
        y = ax.py(v)
        out.append(f'<line x1="{_fmt(ax.left - 5)}" y1="{_fmt(y)}" x2="{_fmt(ax.left)}" y2="{_fmt(y)}" stroke="#333"/>')
        out.append(f'<text x="{_fmt(ax.left - 8)}" y="{_fmt(y + 4)}" font-size="11" text-anchor="end">{_tick_label(v)}</text>')
    cx = ax.left + ax.width / 2
    out.append(f'<text x="{_fmt(cx)}" y="{_fmt(ax.top + ax.height + 40)}" font-size="13" text-anchor="middle">{escape(xlabel)}</text>')
    cy = ax.top + ax.height / 2
    out.append(
        f'<text x="{_fmt(ax.left - 52)}" y="{_fmt(cy)}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 {_fmt(ax.left - 52)} {_fmt(cy)})">{escape(ylabel)}</text>'
    )
    return out


def _zero_line(ax: _Axes) -> str:
    y = ax.py(0.0)
    return (
        f'<line class="zero-line" x1="{_fmt(ax.left)}" y1="{_fmt(y)}" x2="{_fmt(ax.left + ax.width)}" '
        f'y2="{_fmt(y)}" stroke="#888" stroke-dasharray="4 3"/>'
    )


def _series(ax: _Axes, xs, ys, color, label, errs=None, line=True) -> list[str]:
    pts = [(x, y) for x, y in zip(xs, ys) if math.isfinite(y)]
    out = [f'<g class="series" data-label="{escape(label)}">']
    if line and len(pts) > 1:
        path = " ".join(f"{_fmt(ax.px(x))},{_fmt(ax.py(y))}" for x, y in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
    if errs is not None:
        for x, y, e in zip(xs, ys, errs):
            if math.isfinite(y) and math.isfinite(e) and e > 0:
                out.append(
                    f'<line x1="{_fmt(ax.px(x))}" y1="{_fmt(ax.py(y - e))}" x2="{_fmt(ax.px(x))}" '
                    f'y2="{_fmt(ax.py(y + e))}" stroke="{color}"/>'
                )
    for x, y in pts:
        out.append(f'<circle cx="{_fmt(ax.px(x))}" cy="{_fmt(ax.py(y))}" r="2.5" fill="{color}"/>')
    out.append("</g>")
    return out


def _document(title: str, body: list[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n'
        f'<text x="{WIDTH / 2}" y="22" font-size="14" text-anchor="middle">{escape(title)}</text>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def _box(top=MARGIN["top"], height=None):
    height = HEIGHT - MARGIN["top"] - MARGIN["bottom"] if height is None else height
    return (MARGIN["left"], top, WIDTH - MARGIN["left"] - MARGIN["right"], height)


def _legend(labels) -> list[str]:
    out = []
    for k, label in enumerate(labels):
        y = MARGIN["top"] + 14 + 16 * k
        x = WIDTH - MARGIN["right"] - 120
        out.append(f'<rect x="{x}" y="{y - 8}" width="10" height="10" fill="{COLORS[k % len(COLORS)]}"/>')
        out.append(f'<text x="{x + 15}" y="{y + 1}" font-size="11">{escape(label)}</text>')
    return out


def svg_curves(curves: list[StdpCurve], title="STDP curve") -> str:
    if not curves or all(c.n_events == 0 for c in curves):
        raise EmptyPlotError("no data to plot")
    xs = np.concatenate([c.dt for c in curves])
    ys = np.concatenate([np.concatenate([c.mean - np.nan_to_num(c.stderr), c.mean + np.nan_to_num(c.stderr)]) for c in curves])
    ax = _Axes(_limits(xs), _limits(ys, include_zero=True), _box())
    body = _frame(ax, "spike timing difference, post - pre (ms, 1 step = 1 ms)", "weight change")
    body.append(_zero_line(ax))
    for k, c in enumerate(curves):
        body += _series(ax, c.dt, c.mean, COLORS[k % len(COLORS)], c.rule, errs=c.stderr)
    body += _legend([c.rule for c in curves])
    return _document(title, body)


def svg_agreement(agreement: RuleAgreement, title="Rule agreement") -> str:
    bins = agreement.bins
    used = bins.count > 0
    if not used.any():
        raise EmptyPlotError("no data to plot")
    xs, ys = bins.centers[used], bins.mean[used]
    ax = _Axes(_limits(xs), _limits(ys, include_zero=True), _box())
    body = _frame(ax, "proposed-rule update (bin center)", "mean nearest-neighbour STDP update")
    body.append(_zero_line(ax))
    fit = agreement.intercept + agreement.slope * np.array([ax.x0, ax.x1])
    fit = np.clip(fit, ax.y0, ax.y1)
    body.append(
        f'<line class="fit" x1="{_fmt(ax.px(ax.x0))}" y1="{_fmt(ax.py(fit[0]))}" x2="{_fmt(ax.px(ax.x1))}" '
        f'y2="{_fmt(ax.py(fit[1]))}" stroke="#999"/>'
    )
    body += _series(ax, xs, ys, COLORS[0], f"r = {agreement.correlation:.3f}", line=False)
    body += _legend([f"r = {agreement.correlation:.3f}"])
    return _document(title, body)


def svg_trace(trace: TraceRecord, title="Example trace") -> str:
    if len(trace.t) == 0:
        raise EmptyPlotError("no data to plot")
    inner = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    gap = 20
    h = (inner - 2 * gap) / 3
    xlim = (float(trace.t[0]), float(max(trace.t[-1], trace.t[0] + 1)))
    body = []
    panels = [
        ("presynaptic spikes", trace.xi_pre.astype(float), (0.0, 1.2)),
        ("postsynaptic s", trace.s_post, _limits(trace.s_post)),
        ("weight", trace.w, _limits(np.append(trace.w, trace.w_init))),
    ]
    for k, (label, ys, ylim) in enumerate(panels):
        ax = _Axes(xlim, ylim, _box(top=MARGIN["top"] + k * (h + gap), height=h))
        body.append(
            f'<rect class="plot-area" x="{_fmt(ax.left)}" y="{_fmt(ax.top)}" width="{_fmt(ax.width)}" '
            f'height="{_fmt(ax.height)}" fill="none" stroke="#333"/>'
        )
        body.append(f'<text x="{_fmt(ax.left + 4)}" y="{_fmt(ax.top + 12)}" font-size="11">{escape(label)}</text>')
        if k == 0:
            body.append('<g class="series" data-label="spikes">')
            for t in trace.t[trace.xi_pre]:
                body.append(
                    f'<line x1="{_fmt(ax.px(t))}" y1="{_fmt(ax.py(0))}" x2="{_fmt(ax.px(t))}" '
                    f'y2="{_fmt(ax.py(1))}" stroke="{COLORS[0]}"/>'
                )
            body.append("</g>")
        else:
            body += _series(ax, trace.t, ys, COLORS[k], label)
    xlabel_y = HEIGHT - MARGIN["bottom"] + 30
    body.append(f'<text x="{WIDTH / 2}" y="{xlabel_y}" font-size="13" text-anchor="middle">time step</text>')
    return _document(title, body)


def emit_svg_plot(data, path) -> None:
    """Render a curve pair, an agreement result or a trace to ``path``."""
    if isinstance(data, (list, tuple)) and not data:
        raise EmptyPlotError("no data to plot")
    if isinstance(data, StdpCurve):
        text = svg_curves([data])
    elif isinstance(data, (list, tuple)) and data and all(isinstance(c, StdpCurve) for c in data):
        text = svg_curves(list(data))
    elif isinstance(data, RuleAgreement):
        text = svg_agreement(data)
    elif isinstance(data, TraceRecord):
        text = svg_trace(data)
    else:
        raise ValueError(f"cannot plot {type(data).__name__}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
