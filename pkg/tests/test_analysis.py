import csv

import numpy as np
import pytest

from feta.analysis import (
    aggregate,
    analyze,
    interpretability_rows,
    read_response_csv,
    response_records,
    svg_plot,
    write_response_csv,
)
from feta.errors import ConfigError
from feta.filters import default_grid, frequency_response
from feta.model import FetaConfig, init_params
from feta.synthetic import build_synthetic_dataset


@pytest.fixture(scope="module")
def graphs():
    return build_synthetic_dataset("Synthetic_1", seed=2, counts=(0, 0, 6)).splits["test"]


def _static(alpha, layers=1, heads=2):
    cfg = FetaConfig(in_dim=2, n_classes=2, layers=layers, hidden=8, heads=heads, order=len(alpha) - 1,
                     filter="static-chebyshev")
    P = init_params(cfg, np.random.default_rng(0))
    for l in range(layers):
        for h in range(heads):
            P[f"l{l}.alpha{h}"].data[...] = alpha
    return cfg, P


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_all_pass_flat(graphs, tmp_path):
    cfg, P = _static([1.0, 0.0, 0.0, 0.0])
    paths = analyze(cfg, P, graphs, tmp_path)
    rows = _rows(paths["aggregate"])
    assert rows[0] == ["layer", "head", "frequency", "mean_response", "std_response"]
    assert len(rows) == 1 + 2 * 256
    assert all(float(r[3]) == 1.0 and float(r[4]) == 0.0 for r in rows[1:])


def test_first_order_identity_line(graphs, tmp_path):
    cfg, P = _static([0.0, 1.0, 0.0])
    rows = _rows(analyze(cfg, P, graphs, tmp_path)["aggregate"])
    x = np.array([float(r[2]) for r in rows[1:]])
    y = np.array([float(r[3]) for r in rows[1:]])
    assert np.allclose(x, y, rtol=0, atol=1e-15)
    assert x[0] == -1.0 and x[255] == 1.0


def test_csv_recomputes_exactly(graphs, tmp_path):
    cfg = FetaConfig(in_dim=2, n_classes=2, layers=2, hidden=8, heads=2, order=4)
    P = init_params(cfg, np.random.default_rng(3))
    grid = default_grid()
    recs = response_records(cfg, P, graphs, grid)
    assert len(recs) == len(graphs) * 2 * 2
    write_response_csv(tmp_path / "r.csv", recs, grid)
    back = read_response_csv(tmp_path / "r.csv")
    for a, b in zip(recs, back):
        assert (a.graph_id, a.layer, a.head) == (b.graph_id, b.layer, b.head)
        assert np.array_equal(a.alpha, b.alpha)
        assert np.array_equal(b.response, frequency_response(b.alpha, grid).magnitude)
    header = _rows(tmp_path / "r.csv")[0]
    assert header[:8] == ["graph_id", "layer", "head", "alpha_0", "alpha_1", "alpha_2", "alpha_3", "alpha_4"]
    assert header[-1] == "r_255"


def test_aggregate_statistics(graphs):
    cfg = FetaConfig(in_dim=2, n_classes=2, layers=1, hidden=8, heads=1, order=3)
    recs = response_records(cfg, init_params(cfg, np.random.default_rng(1)), graphs)
    agg = aggregate(recs)
    mean, std = agg[(0, 0)]
    stack = np.stack([r.response for r in recs])
    assert np.allclose(mean, stack.mean(0)) and np.allclose(std, stack.std(0))


def test_non_chebyshev_rejected(graphs):
    cfg = FetaConfig(in_dim=2, n_classes=2, layers=1, hidden=8, heads=1, order=3, filter="arma")
    with pytest.raises(ConfigError):
        response_records(cfg, init_params(cfg, np.random.default_rng(0)), graphs)


def test_interpretability_rows(graphs):
    cfg, P = _static([0.0, 1.0, 0.0], heads=1)
    recs = response_records(cfg, P, graphs[:2])
    rows = interpretability_rows(cfg, graphs[:2], recs)
    assert len(rows) == 2 * graphs[0].n
    # T_1 peaks in magnitude at an end of the rescaled spectrum
    assert all(abs(float(r[4])) == 1.0 for r in rows)
    comps = np.array([float(r[7]) for r in rows[: graphs[0].n]])
    assert abs(np.linalg.norm(comps) - 1.0) < 1e-10


def test_svg_outputs(graphs, tmp_path):
    cfg, P = _static([0.5, 0.5, 0.0], layers=2)
    paths = analyze(cfg, P, graphs, tmp_path)
    assert [p.rsplit("/", 1)[1] for p in paths["svg"]] == ["aggregate_layer0.svg", "aggregate_layer1.svg"]
    text = open(paths["svg"][0]).read()
    assert text.startswith("<svg") and text.count("<polyline") == 2


def test_svg_plot_deterministic():
    grid = default_grid(16)
    a = svg_plot({"x": grid}, grid, title="t")
    assert a == svg_plot({"x": grid}, grid, title="t")


def test_analyzer_rerun_identical(graphs, tmp_path):
    cfg = FetaConfig(in_dim=2, n_classes=2, layers=1, hidden=8, heads=2, order=3)
    P = init_params(cfg, np.random.default_rng(9))
    p1 = analyze(cfg, P, graphs, tmp_path / "a")
    p2 = analyze(cfg, P, graphs, tmp_path / "b")
    for key in ("responses", "aggregate", "interpretability"):
        assert open(p1[key], "rb").read() == open(p2[key], "rb").read()
