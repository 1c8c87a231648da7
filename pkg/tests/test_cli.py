import json

import numpy as np
import pytest

from gpnbounds.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, load_config, main, read_csv_table, write_csv
from gpnbounds.dgp import generate
from gpnbounds.errors import ConfigError


def write_dataset(path, data):
    cols = np.column_stack([data.y, data.z, data.x])
    np.savetxt(path, cols, delimiter=",", header="y,z,x1,x2,x3", comments="", fmt="%.10g")
    return str(path)


@pytest.fixture(scope="module")
def dataset_csv(tmp_path_factory):
    data, _ = generate("b", 800, 17)
    return write_dataset(tmp_path_factory.mktemp("data") / "b.csv", data)


def run(*argv):
    return main([str(a) for a in argv])


def parse_bounds_output(text):
    out = {}
    for line in text.strip().splitlines():
        name, *rest = line.split()
        if rest == ["n/a"]:
            out[name] = None
        else:
            kv = dict(item.split("=") for item in rest)
            out[name] = (float(kv["lower"]), float(kv["upper"]))
    return out


class TestBoundsCommand:
    def test_fh(self, capsys):
        assert run("bounds", "--u1", 0.6, "--u0", 0.7) == EXIT_OK
        out = parse_bounds_output(capsys.readouterr().out)
        assert out["FH"] == (0.25, 1.0)
        assert out["Mono"] is None and out["Copula"] is None and out["Point"] is None

    def test_copula_ranges(self, capsys):
        run("bounds", "--u1", 0.6, "--u0", 0.7, "--rho", 0, 1)
        assert parse_bounds_output(capsys.readouterr().out)["Copula"] == (0.25, 0.7)
        run("bounds", "--u1", 0.5, "--u0", 0.5, "--rho", 0.2, 0.7)
        lo, hi = parse_bounds_output(capsys.readouterr().out)["Copula"]
        assert (lo, hi) == pytest.approx((0.253183, 0.435906), abs=1e-6)

    def test_all_methods(self, capsys):
        run("bounds", "--u1", 0.4, "--u0", 0.7, "--u0-at-c1", 0.7, "--equal-thresholds")
        out = parse_bounds_output(capsys.readouterr().out)
        assert out["Mono"] == pytest.approx((0.5, 0.5))
        assert out["Point"] == pytest.approx((0.5, 0.5))

    def test_degenerate_is_numeric_failure(self, capsys):
        assert run("bounds", "--u1", 1.0, "--u0", 0.5) == 4
        assert "u1 = 1" in capsys.readouterr().err


class TestSimulate:
    def test_table1(self, tmp_path):
        out = tmp_path / "t1"
        assert run("--out", out, "simulate", "--table", 1, "--n", 512, "--seeds", 1) == EXIT_OK
        header, rows = read_csv_table(out / "table1.csv")
        assert header == ("method", "case", "mse_lb", "mse_ub", "width")
        assert len(rows) == 12
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["files"]) == {"table1.csv"}

    def test_table1_oracle(self, tmp_path):
        out = tmp_path / "t1o"
        assert run("--out", out, "simulate", "--table", 1, "--n", 512, "--seeds", 1,
                   "--oracle-marginals") == EXIT_OK
        assert len(read_csv_table(out / "table1.csv")[1]) == 12

    def test_table2(self, tmp_path):
        out = tmp_path / "t2"
        assert run("--out", out, "simulate", "--table", 2, "--n", 512, "--oracle-marginals") == EXIT_OK
        header, rows = read_csv_table(out / "table2.csv")
        assert header[:4] == ("family", "tau", "rho", "true_mean_gpn")
        assert len(rows) == 9

    def test_manifest_reproducible(self, tmp_path):
        for name in ("r1", "r2"):
            assert run("--seed", 5, "--out", tmp_path / name, "simulate", "--table", 1,
                       "--n", 256, "--seeds", 1) == EXIT_OK
        a = (tmp_path / "r1" / "manifest.json").read_bytes()
        b = (tmp_path / "r2" / "manifest.json").read_bytes()
        assert a == b
        run("--seed", 6, "--out", tmp_path / "r3", "simulate", "--table", 1, "--n", 256, "--seeds", 1)
        assert (tmp_path / "r3" / "manifest.json").read_bytes() != a


class TestAnalyze:
    def test_outputs(self, tmp_path, dataset_csv):
        out = tmp_path / "an"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "thresholds": {"c0": 10, "c1": 12},
            "copula": {"family": "gaussian", "conservative": [0, 1], "expert": [0.2, 0.7]},
            "subsample": {"b": 5},
            "seed": 3,
        }))
        assert run("--config", cfg, "--out", out, "analyze", dataset_csv) == EXIT_OK
        header, rows = read_csv_table(out / "bounds.csv")
        assert header == ("method", "lower", "upper", "lower_sd", "upper_sd")
        assert [r[0] for r in rows] == ["FH", "Mono", "Conservative", "Expert"]
        for _, lo, hi, sd_lo, sd_hi in rows:
            assert 0 <= lo <= hi <= 1 and sd_lo >= 0 and sd_hi >= 0
        per_unit = read_csv_table(out / "per_unit_bounds.csv")
        assert len(per_unit[1]) == 800
        diag = json.loads((out / "diagnostics.json").read_text())
        assert diag["n"] == 800 and "monotonicity_violations" in diag
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["files"]) == {"bounds.csv", "per_unit_bounds.csv", "diagnostics.json"}

    def test_reproducible(self, tmp_path, dataset_csv):
        for name in ("a", "b"):
            assert run("--seed", 2, "--out", tmp_path / name, "analyze", dataset_csv, "--c0", 10,
                       "--c1", 12, "--no-subsample") == EXIT_OK
        assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()

    def test_single_arm(self, tmp_path, capsys):
        data, _ = generate("b", 100, 1)
        data = data.subset(data.z == 1)
        path = write_dataset(tmp_path / "one.csv", data)
        assert run("--out", tmp_path / "o", "analyze", path, "--no-subsample") == EXIT_DATA
        assert "treatment arms" in capsys.readouterr().err

    def test_malformed(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text("y,z,x1\n1.0,0,0.3\n2.0,1,abc\n")
        assert run("--out", tmp_path / "o", "analyze", path) == EXIT_DATA
        err = capsys.readouterr().err
        assert "row 3" in err and "x1" in err

    def test_missing_column(self, tmp_path, capsys):
        path = tmp_path / "nocol.csv"
        path.write_text("y,x1\n1.0,0.3\n")
        assert run("--out", tmp_path / "o", "analyze", path) == EXIT_DATA

    def test_no_control_below_c0(self, tmp_path):
        data, _ = generate("b", 600, 4)
        path = write_dataset(tmp_path / "high.csv", data)
        out = tmp_path / "hi"
        assert run("--out", out, "analyze", path, "--c0", -50, "--c1", 12, "--no-subsample") == EXIT_OK
        _, rows = read_csv_table(out / "bounds.csv")
        for _, lo, hi, *_ in rows:
            assert lo < 1e-12 and hi < 0.05
        header, units = read_csv_table(out / "per_unit_bounds.csv")
        cols = {h: np.array([u[i] for u in units]) for i, h in enumerate(header)}
        # u0 sits at the clip floor delta, so FH upper is delta / (1 - u1) per unit
        assert np.all(cols["u0"] == 1e-4)
        assert np.all(cols["fh_lower"] < 1e-12)
        np.testing.assert_allclose(cols["fh_upper"], np.minimum(1.0, 1e-4 / (1 - cols["u1"])), rtol=5e-3)


class TestSensitivity:
    def test_endpoints_are_fh(self, tmp_path, dataset_csv):
        out = tmp_path / "s"
        assert run("--out", out, "sensitivity", "--dataset", dataset_csv, "--c0", 10, "--c1", 12,
                   "--points", 21) == EXIT_OK
        _, rows = read_csv_table(out / "sensitivity.csv")
        assert len(rows) == 21 and rows[0][0] == -1 and rows[-1][0] == 1
        crossings = json.loads((out / "crossings.json").read_text())["crossings"]
        assert rows[0][1] == pytest.approx(crossings["FH"]["upper_value"], rel=1e-5)
        assert rows[-1][1] == pytest.approx(crossings["FH"]["lower_value"], rel=1e-5)
        assert crossings["FH"]["lower"] == 1.0

    def test_single_point(self, tmp_path):
        out = tmp_path / "one"
        assert run("--out", out, "sensitivity", "--case", "b", "--n", 300, "--oracle-marginals",
                   "--rho", 0) == EXIT_OK
        _, rows = read_csv_table(out / "sensitivity.csv")
        assert rows == [(0.0, rows[0][1])]

    def test_invalid_grid(self, tmp_path):
        assert run("--out", tmp_path / "x", "sensitivity", "--case", "b", "--rho", 1.5) == EXIT_CONFIG


class TestConfig:
    def test_line_numbers(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{\n  "thresholds": {"c0": 12, "c1": 10},\n  "seed": 1\n}\n')
        assert run("--config", cfg, "bounds", "--u1", 0.5, "--u0", 0.5) == EXIT_CONFIG
        assert "c1 >= c0" in capsys.readouterr().err

        cfg.write_text('{\n  "seed": 1,\n  "copula": {"familly": "gaussian"}\n}\n')
        with pytest.raises(ConfigError, match="line 3"):
            load_config(str(cfg))

        cfg.write_text('{\n  "seed": 1,\n  "clip": {"eps": 0.01,}\n}\n')
        with pytest.raises(ConfigError, match="line 3"):
            load_config(str(cfg))

    def test_invalid_values(self, tmp_path):
        cfg = tmp_path / "c.json"
        for body in ('{"copula": {"expert": [0.9, 0.2]}}',
                     '{"copula": {"family": "gumbel", "conservative": [0, 1]}}',
                     '{"regressor": {"kind": "forest"}}',
                     '{"clip": {"eps": 0.7}}',
                     '{"subsample": {"b": 1}}',
                     '{"seed": -3}'):
            cfg.write_text(body)
            with pytest.raises(ConfigError):
                load_config(str(cfg))

    def test_full_schema(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "thresholds": {"c0": 2500, "c1": 3000},
            "copula": {"family": "gaussian", "conservative": [0, 1], "expert": [0.2, 0.7]},
            "regressor": {"kind": "mlp", "hidden": [16, 16], "epochs": 10},
            "clip": {"eps": 0.02, "delta": 1e-3},
            "subsample": {"b": 50, "m": 1000},
            "seed": 11,
        }))
        c = load_config(str(cfg))
        assert (c.c0, c.c1, c.expert, c.subsample_b, c.subsample_m, c.seed) == (
            2500, 3000, (0.2, 0.7), 50, 1000, 11)
        assert c.regressor_spec().hidden == (16, 16)


def test_csv_round_trip(tmp_path):
    header = ("method", "case", "width")
    rows = [("FH", "a", 0.5471234567), ("Mono", "b", 1e-7)]
    write_csv(tmp_path / "t.csv", header, rows)
    h, parsed = read_csv_table(tmp_path / "t.csv")
    write_csv(tmp_path / "u.csv", h, parsed)
    assert (tmp_path / "t.csv").read_bytes() == (tmp_path / "u.csv").read_bytes()
    assert parsed[0][2] == 0.547123
