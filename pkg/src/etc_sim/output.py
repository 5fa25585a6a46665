"""Writers for trajectory CSV, key/value reports and SVG plots.

All writers produce text deterministically (no timestamps) so identical runs
give byte-identical files.
"""
from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .analysis import ConvergenceReport, TriggerStats
from .simulator import SimulationResult
from .triggering import IssCertificate

CSV_FORMAT = "%.12g"


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path: str | os.PathLike, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_header(result: SimulationResult) -> list[str]:
    n, m, p = result.x.shape[1], result.ubar.shape[1], result.ybar.shape[1]
    cols = ["t"]
    cols += [f"x_{i + 1}" for i in range(n)]
    cols += [f"xhat_{i + 1}" for i in range(n)]
    cols += [f"ubar_{i + 1}" for i in range(m)]
    cols += [f"ybar_{i + 1}" for i in range(p)]
    return cols + ["norm_x", "norm_z"]


def format_csv(result: SimulationResult) -> str:
    """One row per logged sample, LF line endings, 12 significant digits."""
    data = np.column_stack([result.t, result.x, result.xhat, result.ubar, result.ybar,
                            result.norm_x, result.norm_z]) if result.t.size else np.empty((0, 0))
    buf = io.StringIO()
    buf.write(",".join(csv_header(result)) + "\n")
    if data.size:
        np.savetxt(buf, data, fmt=CSV_FORMAT, delimiter=",", newline="\n")
    return buf.getvalue()


def write_csv(result: SimulationResult, path) -> Path:
    return atomic_write(path, format_csv(result))


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


CERTIFICATE_FIELDS = (
    "L_a3_inv", "L_b", "L_G", "lambda_c", "L_beta_c", "L_beta_o", "L_alpha_c3", "L_alpha_o3_inv",
    "sigma", "sigma_prime", "kappa", "tau_min", "L_gamma", "L_h", "dim_E", "a3_inv_form",
)


def certificate_lines(cert: IssCertificate) -> list[str]:
    lines = [f"{name}: {_fmt(getattr(cert, name))}" for name in CERTIFICATE_FIELDS]
    act, sen = cert.relative_factors()
    lines.append(f"sigma_max: {_fmt(cert.sigma_max)}")
    lines.append(f"actuator_threshold_factor: {_fmt(act)}")
    lines.append(f"sensor_threshold_factor: {_fmt(sen)}")
    lines += [f"note: {note}" for note in cert.notes]
    return lines


def stats_lines(stats: TriggerStats) -> list[str]:
    lines = []
    for node in stats.nodes:
        lines.append(f"{node.label}: count={node.count} min_gap={_fmt(node.min_gap)} "
                     f"mean_gap={_fmt(node.mean_gap)} max_gap={_fmt(node.max_gap)}")
    lines.append(f"total_actuator: {stats.totals['actuator']}")
    lines.append(f"total_sensor: {stats.totals['sensor']}")
    lines.append(f"total: {stats.total}")
    return lines


def convergence_lines(conv: ConvergenceReport) -> list[str]:
    return [
        f"threshold: {_fmt(conv.threshold)}",
        f"settling_time: {'never' if conv.never_settles else _fmt(conv.settling_time)}",
        f"tail_sup_x: {_fmt(conv.tail_sup_x)}",
        f"tail_sup_z: {_fmt(conv.tail_sup_z)}",
        f"peak_norm_x: {_fmt(conv.peak)}",
        f"decay_rate: {_fmt(conv.decay_rate)}",
    ]


def format_report(sections: Iterable[tuple[str, Mapping[str, object] | list[str]]]) -> str:
    """Render ``[section]`` blocks of ``key: value`` lines."""
    out = []
    for title, body in sections:
        if out:
            out.append("")
        out.append(f"[{title}]")
        if isinstance(body, Mapping):
            out += [f"{k}: {_fmt(v)}" for k, v in body.items()]
        else:
            out += list(body)
    return "\n".join(out) + "\n"


def write_report(sections, path) -> Path:
    return atomic_write(path, format_report(sections))


# --------------------------------------------------------------------------- svg

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")
_W, _PANEL_H, _PAD, _LEFT = 720, 160, 28, 60
MAX_POINTS = 1500


def _decimate(n: int) -> np.ndarray:
    if n <= MAX_POINTS:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, MAX_POINTS).round().astype(int))


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _panel(y0: float, title: str, t_range, series, step: bool = False) -> list[str]:
    """``series`` is a list of ``(label, t, values)``."""
    t0, t1 = t_range
    vals = [v for _, _, v in series if len(v)]
    lo = min((float(np.min(v)) for v in vals), default=0.0)
    hi = max((float(np.max(v)) for v in vals), default=1.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pw, ph = _W - _LEFT - 10, _PANEL_H - _PAD - 10
    top = y0 + _PAD

    def sx(t):
        return _LEFT + (np.asarray(t) - t0) / (t1 - t0 if t1 > t0 else 1.0) * pw

    def sy(v):
        return top + (hi - np.asarray(v)) / (hi - lo) * ph

    out = [
        f'<rect x="{_LEFT}" y="{top:.2f}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>',
        f'<text x="{_LEFT}" y="{y0 + 18:.2f}" font-size="13">{_esc(title)}</text>',
        f'<text x="{_LEFT - 4}" y="{top + 10:.2f}" font-size="10" text-anchor="end">{hi:.3g}</text>',
        f'<text x="{_LEFT - 4}" y="{top + ph:.2f}" font-size="10" text-anchor="end">{lo:.3g}</text>',
    ]
    legend_x = _LEFT + 200
    for k, (label, t, v) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        t, v = np.asarray(t, dtype=float), np.asarray(v, dtype=float)
        if step and t.size:
            # horizontal then vertical segments, extended to the end of the run
            t, v = np.r_[t0, np.repeat(t, 2), t1], np.r_[0.0, 0.0, np.repeat(v, 2)[:-1], v[-1]]
        elif step:
            t, v = np.array([t0, t1]), np.zeros(2)
        if t.size:
            idx = _decimate(t.size) if not step else np.arange(t.size)
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(t[idx]), sy(v[idx])))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{legend_x + 70 * k}" y="{y0 + 18:.2f}" font-size="11" fill="{color}">{_esc(label)}</text>')
    return out


def render_svg(result: SimulationResult, title: str = "simulation") -> str:
    """Deterministic SVG 1.1: state and estimate per coordinate, norms, held inputs,
    and a cumulative transmission count per node."""
    t = result.t
    t_range = (0.0, float(result.t_end))
    n = result.x.shape[1]
    panels = []
    for i in range(n):
        panels.append((f"state {i + 1}", [(f"x_{i + 1}", t, result.x[:, i]), (f"xhat_{i + 1}", t, result.xhat[:, i])], False))
    panels.append(("norms", [("|x|", t, result.norm_x), ("|z|", t, result.norm_z)], False))
    panels.append(("held input", [(f"ubar_{i + 1}", t, result.ubar[:, i]) for i in range(result.ubar.shape[1])], False))
    counts = []
    for k, label in enumerate(result.node_labels):
        times = result.event_times(k)
        counts.append((label, times, np.arange(1, times.size + 1, dtype=float)))
    panels.append(("cumulative transmissions", counts, True))

    height = _PANEL_H * len(panels) + 30
    body = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_W}" height="{height}" '
        f'viewBox="0 0 {_W} {height}" font-family="sans-serif">',
        f'<rect width="{_W}" height="{height}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="18" font-size="15" text-anchor="middle">{_esc(title)}</text>',
    ]
    for k, (name, series, step) in enumerate(panels):
        body += _panel(24 + k * _PANEL_H, name, t_range, series, step)
    body.append(f'<text x="{_W - 10}" y="{height - 6}" font-size="10" text-anchor="end">t [s], 0 to {t_range[1]:g}</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"


def write_svg(result: SimulationResult, path, title: str = "simulation") -> Path:
    return atomic_write(path, render_svg(result, title))
