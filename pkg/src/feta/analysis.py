"""Frequency-response export: per-graph CSV, aggregate CSV/SVG, eigenvector maps.

CSV floats are written with ``repr`` so values round-trip exactly.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .filters import default_grid, frequency_response
from .model import FetaConfig, evaluate, prepare_split
from .spectral import eigendecompose, normalized_laplacian


@dataclass
class ResponseRecord:
    graph_id: str
    layer: int
    head: int
    alpha: np.ndarray
    response: np.ndarray


def _fmt(x) -> str:
    return repr(float(x))


def response_records(cfg: FetaConfig, params, graphs, grid=None, alphas=None) -> list:
    """One record per (graph, layer, head) with the sampled response."""
    if cfg.filter not in ("chebyshev", "static-chebyshev"):
        raise ConfigError(f"frequency responses need a Chebyshev filter, model uses {cfg.filter!r}")
    grid = default_grid() if grid is None else grid
    if alphas is None:
        alphas = evaluate(cfg, params, prepare_split(cfg, graphs))["alphas"]
    out = []
    for gi, g in enumerate(graphs):
        gid = str(g.meta.get("id", gi))
        for l in range(alphas.shape[1]):
            for h in range(alphas.shape[2]):
                a = alphas[gi, l, h].copy()
                out.append(ResponseRecord(gid, l, h, a, frequency_response(a, grid).magnitude))
    return out


def write_response_csv(path, records, grid=None) -> None:
    grid = default_grid() if grid is None else grid
    if not records:
        raise ConfigError("no response records to write")
    K = records[0].alpha.size - 1
    header = ["graph_id", "layer", "head"] + [f"alpha_{k}" for k in range(K + 1)] + [f"r_{j}" for j in range(len(grid))]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in records:
            w.writerow([r.graph_id, r.layer, r.head] + [_fmt(x) for x in r.alpha] + [_fmt(x) for x in r.response])


def read_response_csv(path) -> list:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        n_alpha = sum(1 for h in header if h.startswith("alpha_"))
        for row in rows:
            vals = [float(x) for x in row[3:]]
            out.append(ResponseRecord(row[0], int(row[1]), int(row[2]), np.array(vals[:n_alpha]), np.array(vals[n_alpha:])))
    return out


def aggregate(records, grid=None) -> dict:
    """Mean and standard deviation of the response per ``(layer, head)``."""
    grid = default_grid() if grid is None else grid
    groups = {}
    for r in records:
        groups.setdefault((r.layer, r.head), []).append(r.response)
    return {k: (np.mean(v, axis=0), np.std(v, axis=0)) for k, v in sorted(groups.items())}


def write_aggregate_csv(path, agg, grid=None) -> None:
    grid = default_grid() if grid is None else grid
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "head", "frequency", "mean_response", "std_response"])
        for (l, h), (mean, std) in agg.items():
            for x, m, s in zip(grid, mean, std):
                w.writerow([l, h, _fmt(x), _fmt(m), _fmt(s)])


_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def svg_plot(curves, grid, title="", width=480, height=320) -> str:
    """Polyline plot of ``{label: y}`` over ``grid`` with simple axis ticks."""
    pad_l, pad_r, pad_t, pad_b = 52, 16, 28, 40
    ys = np.concatenate([np.asarray(y) for y in curves.values()]) if curves else np.zeros(1)
    lo, hi = float(ys.min()), float(ys.max())
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    lo, hi = lo - 0.05 * span, hi + 0.05 * span
    x0, x1 = float(grid[0]), float(grid[-1])
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def px(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def py(y):
        return pad_t + (hi - y) / (hi - lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="13">{title}</text>',
        f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in np.linspace(x0, x1, 5):
        parts.append(f'<line x1="{px(t):.2f}" y1="{pad_t + ph}" x2="{px(t):.2f}" y2="{pad_t + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{px(t):.2f}" y="{pad_t + ph + 16}" text-anchor="middle" font-family="sans-serif" font-size="10">{t:.1f}</text>')
    for t in np.linspace(lo, hi, 5):
        parts.append(f'<line x1="{pad_l - 4}" y1="{py(t):.2f}" x2="{pad_l}" y2="{py(t):.2f}" stroke="black"/>')
        parts.append(f'<text x="{pad_l - 6}" y="{py(t) + 3:.2f}" text-anchor="end" font-family="sans-serif" font-size="10">{t:.2f}</text>')
    parts.append(f'<text x="{pad_l + pw / 2:.1f}" y="{height - 6}" text-anchor="middle" font-family="sans-serif" font-size="11">normalized frequency</text>')
    for i, (label, y) in enumerate(curves.items()):
        colour = _COLOURS[i % len(_COLOURS)]
        pts = " ".join(f"{px(x):.2f},{py(v):.2f}" for x, v in zip(grid, y))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{pad_l + 8}" y="{pad_t + 14 + 13 * i}" font-family="sans-serif" font-size="10" fill="{colour}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_aggregate_svgs(out_dir, agg, grid=None) -> list:
    grid = default_grid() if grid is None else grid
    paths = []
    for layer in sorted({l for l, _ in agg}):
        curves = {f"head {h}": agg[(l, h)][0] for (l, h) in agg if l == layer}
        path = os.path.join(out_dir, f"aggregate_layer{layer}.svg")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg_plot(curves, grid, title=f"mean response, layer {layer}"))
        paths.append(path)
    return paths


def interpretability_rows(cfg: FetaConfig, graphs, records) -> list:
    """Node components of the eigenvector whose response magnitude is largest.

    For each (graph, layer, head) the response is evaluated at the graph's
    rescaled normalized-Laplacian eigenvalues.
    """
    by_graph = {}
    for r in records:
        by_graph.setdefault(r.graph_id, []).append(r)
    rows = []
    for gi, g in enumerate(graphs):
        gid = str(g.meta.get("id", gi))
        basis = eigendecompose(normalized_laplacian(g.adjacency()))
        lam_max = basis.lambda_max if cfg.lambda_max == "exact" else 2.0
        lt = np.clip(2.0 * basis.lam / max(lam_max, 1e-12) - 1.0, -1.0, 1.0)
        for r in by_graph.get(gid, []):
            resp = frequency_response(r.alpha, lt).magnitude
            j = int(np.argmax(np.abs(resp)))
            for node in range(g.n):
                rows.append([gid, r.layer, r.head, j, _fmt(lt[j]), _fmt(resp[j]), node, _fmt(basis.U[node, j])])
    return rows


def write_interpretability_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["graph_id", "layer", "head", "eig_index", "frequency", "response", "node", "component"])
        w.writerows(rows)


def analyze(cfg: FetaConfig, params, graphs, out_dir) -> dict:
    """Write every analyzer artifact into ``out_dir``; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    grid = default_grid()
    records = response_records(cfg, params, graphs, grid)
    paths = {"responses": os.path.join(out_dir, "responses.csv"),
             "aggregate": os.path.join(out_dir, "aggregate.csv"),
             "interpretability": os.path.join(out_dir, "interpretability.csv")}
    write_response_csv(paths["responses"], records, grid)
    agg = aggregate(records, grid)
    write_aggregate_csv(paths["aggregate"], agg, grid)
    paths["svg"] = write_aggregate_svgs(out_dir, agg, grid)
    write_interpretability_csv(paths["interpretability"], interpretability_rows(cfg, graphs, records))
    return paths
