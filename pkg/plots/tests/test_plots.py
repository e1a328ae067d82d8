import csv

import numpy as np
import pytest

from gsac_plots.cli import main
from gsac_plots.figures import (
    CurveSpec,
    _panel_curves,
    fit_rate_slope,
    plot_adaptation,
    plot_estimation_rate,
    plot_tables,
    plot_training,
)
from gsac_plots.io import METRICS_COLUMNS, MissingColumnsError, read_csv_rows

METHODS = ("GSAC", "SAC-MTL", "SAC-FT", "SAC-LFS")
GRIDS = (2, 3, 4)


def _write_metrics(path, grids=GRIDS, methods=METHODS, seeds=(0, 1, 2),
                   episodes=30, iterations=20):
    """Synthetic sweep: per-method offsets so curve ordering is known."""
    rng = np.random.default_rng(0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_COLUMNS)
        for g in grids:
            for mi, m in enumerate(methods):
                for s in seeds:
                    for phase, count in (("train", iterations), ("adapt", episodes)):
                        for k in range(count):
                            ret = 5.0 - mi + 0.02 * k + rng.normal(0, 0.05)
                            w.writerow([m, phase, g, 0.65, s, k, 0,
                                        f"{ret:.17g}", 0.0, 0.0, 0])
    return str(path)


def _write_rate(path, t_es=(10, 20, 40, 80, 160, 320), seeds=200):
    """Monte-Carlo Bernoulli(0.5) estimation error, which scales as T_e^-1/2."""
    rng = np.random.default_rng(7)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t_e", "abs_error", "seed"))
        for t in t_es:
            for s in range(seeds):
                err = abs(rng.binomial(t, 0.5) / t - 0.5)
                w.writerow([t, f"{err:.17g}", s])
    return str(path)


def _write_tables(path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("agent", "raw_features", "compact_features"))
        for a in range(16):
            w.writerow([a, 20, 10])
    return str(path)


class TestIo:
    def test_missing_column_named(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("method,phase\nGSAC,adapt\n")
        with pytest.raises(MissingColumnsError, match="grid_size"):
            read_csv_rows([str(p)], METRICS_COLUMNS)

    def test_empty_csv_rejected(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text(",".join(METRICS_COLUMNS) + "\n")
        with pytest.raises(ValueError, match="no data rows"):
            read_csv_rows([str(p)], METRICS_COLUMNS)

    def test_no_paths_rejected(self):
        with pytest.raises(ValueError):
            read_csv_rows([], METRICS_COLUMNS)


class TestCurveSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            CurveSpec(csv_paths=(), out_path="x.png")
        with pytest.raises(ValueError):
            CurveSpec(csv_paths=("a.csv",), out_path="x.png", smoothing=0)


class TestAdaptation:
    def test_panels_and_methods(self, tmp_path):
        # the headline layout: one panel per grid size, one line per method
        p = _write_metrics(tmp_path / "m.csv")
        rows = read_csv_rows([p], METRICS_COLUMNS)
        panels = _panel_curves(rows, "adapt", 1)
        assert sorted(panels) == list(GRIDS)
        for g in GRIDS:
            assert sorted(panels[g]) == sorted(METHODS)
            for ks, mean, std in panels[g].values():
                assert len(ks) == 30 and np.all(np.isfinite(mean))

    def test_renders_file(self, tmp_path):
        p = _write_metrics(tmp_path / "m.csv")
        out = plot_adaptation(CurveSpec((p,), str(tmp_path / "adapt.png")))
        data = open(out, "rb").read()
        assert data[:8] == b"\x89PNG\r\n\x1a\n" and len(data) > 1000

    def test_single_seed_band_collapses(self, tmp_path):
        p = _write_metrics(tmp_path / "m.csv", seeds=(0,))
        rows = read_csv_rows([p], METRICS_COLUMNS)
        panels = _panel_curves(rows, "adapt", 1)
        for g in GRIDS:
            for ks, mean, std in panels[g].values():
                assert np.all(std == 0.0)

    def test_deterministic_bytes(self, tmp_path):
        p = _write_metrics(tmp_path / "m.csv")
        a = plot_adaptation(CurveSpec((p,), str(tmp_path / "a.png")))
        b = plot_adaptation(CurveSpec((p,), str(tmp_path / "b.png")))
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_smoothing_shortens_curve(self, tmp_path):
        p = _write_metrics(tmp_path / "m.csv")
        rows = read_csv_rows([p], METRICS_COLUMNS)
        panels = _panel_curves(rows, "adapt", 5)
        ks, mean, _ = panels[3]["GSAC"]
        assert len(ks) == 30 - 4 and len(mean) == len(ks)


class TestTraining:
    def test_renders_training_phase(self, tmp_path):
        p = _write_metrics(tmp_path / "m.csv")
        out = plot_training(CurveSpec((p,), str(tmp_path / "train.png")))
        assert open(out, "rb").read()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_wrong_phase_only_errors(self, tmp_path):
        p = _write_metrics(tmp_path / "m.csv", iterations=0)
        with pytest.raises(ValueError, match="phase"):
            plot_training(CurveSpec((p,), str(tmp_path / "train.png")))


class TestEstimationRate:
    def test_slope_near_half(self, tmp_path):
        p = _write_rate(tmp_path / "r.csv")
        out, slope = plot_estimation_rate(CurveSpec((p,), str(tmp_path / "r.png")))
        assert -0.7 <= slope <= -0.3
        assert open(out, "rb").read()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_single_point_scatter_no_fit(self, tmp_path):
        p = _write_rate(tmp_path / "r.csv", t_es=(20,), seeds=10)
        out, slope = plot_estimation_rate(CurveSpec((p,), str(tmp_path / "r.png")))
        assert slope is None
        assert open(out, "rb").read()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_empty_csv_errors(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("t_e,abs_error,seed\n")
        with pytest.raises(ValueError):
            plot_estimation_rate(CurveSpec((str(p),), str(tmp_path / "r.png")))

    def test_fit_rate_slope_exact(self):
        t = np.array([10.0, 100.0, 1000.0])
        assert fit_rate_slope(t, t ** -0.5) == pytest.approx(-0.5, abs=1e-12)
        with pytest.raises(ValueError):
            fit_rate_slope([10.0], [0.1])
        with pytest.raises(ValueError):
            fit_rate_slope([10.0, 20.0], [0.1, 0.0])


class TestTables:
    def test_renders(self, tmp_path):
        p = _write_tables(tmp_path / "t.csv")
        out = plot_tables(CurveSpec((p,), str(tmp_path / "t.png")))
        assert open(out, "rb").read()[:8] == b"\x89PNG\r\n\x1a\n"


class TestCli:
    def test_all_subcommands(self, tmp_path, capsys):
        m = _write_metrics(tmp_path / "m.csv")
        r = _write_rate(tmp_path / "r.csv", t_es=(10, 40, 160), seeds=50)
        t = _write_tables(tmp_path / "t.csv")
        assert main(["adaptation", "--csv", m, "--out", str(tmp_path / "a.png")]) == 0
        assert main(["training", "--csv", m, "--out", str(tmp_path / "tr.png")]) == 0
        assert main(["rate", "--csv", r, "--out", str(tmp_path / "ra.png")]) == 0
        assert "fitted slope" in capsys.readouterr().out
        assert main(["tables", "--csv", t, "--out", str(tmp_path / "tb.png")]) == 0

    def test_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("noise\n1\n")
        rc = main(["adaptation", "--csv", str(bad), "--out", str(tmp_path / "x.png")])
        assert rc == 1
        assert "error" in capsys.readouterr().err
