import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivregime import PanelDataset, SimConfig, generate
from ivregime.simgen import generate as real_generate
from ivregime import io as ivio
from ivregime.cli import latents_path, main
from ivregime.harness import format_table, metrics, run_config


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# metrics ------------------------------------------------------------------


def test_metrics_examples():
    assert metrics([4.5, 5.5, 5.0], 5.0) == pytest.approx((0.0, 1 / 3, 0.0, 0.5), abs=1e-15)
    assert metrics([5.0] * 4, 5.0) == (0.0, 0.0, 0.0, 0.0)
    assert metrics([6.0, 6.0, 6.0], 5.0) == (1.0, 1.0, 1.0, 1.0)


def test_metrics_even_length_median():
    assert metrics([4.0, 7.0], 5.0)[2:] == (0.5, 1.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-100, 100))
def test_single_estimate_collapses(est):
    m = metrics([est], 5.0)
    assert m == (abs(est - 5.0),) * 4


def test_table_layout():
    text = format_table({"latre": (0.56, 0.56, 0.54, 0.54), "naive": (0.86,) * 4, "noiv": (1.24,) * 4})
    rows = text.splitlines()
    assert rows[0].split()[:2] == ["Error", "Metric"]
    assert [r.split()[0] for r in rows[2:]] == ["Naive", "No", "LATRE"]
    assert "0.56" in rows[4]


# CSV --------------------------------------------------------------------------


def small_panel(seed=0, n=50):
    return generate(SimConfig(n=n, seed=seed))[0]


def test_csv_round_trip_bytes(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    ivio.write_csv(small_panel(), first)
    ivio.write_csv(ivio.read_csv(first), second)
    assert first.read_bytes() == second.read_bytes()


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=6, max_size=6),
       st.integers(0, 1), st.integers(0, 1))
def test_csv_round_trip_values(tmp_path_factory, reals, z, w):
    x0 = np.array([reals[:2]])
    d = PanelDataset([x0, np.array([reals[2:3]]), np.array([reals[3:4]])],
                     [[z, 1 - z]], [[w, w]], [reals[4:6]])
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    ivio.write_csv(d, path)
    back = ivio.read_csv(path)
    assert back.dims == d.dims
    for a, b in zip(back.x, d.x):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(back.y, d.y)
    np.testing.assert_array_equal(back.z, d.z)


def test_csv_header_layout():
    assert ivio.header(1, (2, 1, 0)) == ["x0_1", "x0_2", "z0", "w0", "y1", "x1_1", "z1", "w1", "y2"]


def test_csv_binary_columns_are_integers(tmp_path):
    path = tmp_path / "p.csv"
    ivio.write_csv(small_panel(n=3), path)
    row = path.read_text().splitlines()[1].split(",")
    assert row[6] in ("0", "1") and row[7] in ("0", "1")


@pytest.mark.parametrize("text,match", [
    ("", "row 0"),
    ("x0_1,z0,w0,q1\n", "row 0"),
    ("x0_1,w0,z0,y1\n", "row 0"),
    ("x0_1,z0,w0,y1\n0.5,1,1,2.0\n0.1,0,1\n", "row 2: expected 4 fields"),
    ("x0_1,z0,w0,y1\n0.5,1,1,abc\n", "row 1: column y1"),
    ("x0_1,z0,w0,y1\n", "no data rows"),
])
def test_csv_schema_errors(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(ivio.CsvSchemaError, match=match):
        ivio.read_csv(path)


def test_latents_round_trip(tmp_path):
    _, lat = generate(SimConfig(n=20, seed=1, emit_latents=True))
    path = tmp_path / "l.csv"
    ivio.write_latents_csv(lat, path)
    back = ivio.read_latents_csv(path)
    np.testing.assert_array_equal(back.eps0, lat.eps0)
    np.testing.assert_array_equal(back.w1_0, lat.w1_0)


# configuration and JSON ----------------------------------------------------------------


def test_config_file_with_and_without_sections(tmp_path):
    flat = tmp_path / "a.ini"
    flat.write_text("n = 1000\nxi = 1, 2, 3, -1, -2, -3  # comment\nregime_a = 1,0\n")
    sectioned = tmp_path / "b.ini"
    sectioned.write_text("[sim]\nn = 1000\n[estimation]\nmethod = naive\n")
    assert ivio.read_config(flat)["xi"] == "1, 2, 3, -1, -2, -3"
    assert run_config(ivio.read_config(sectioned)).est.method == "naive"


@pytest.mark.parametrize("values,key", [
    ({"e1": "1.5"}, "e1"),
    ({"n": "ten"}, "n"),
    ({"xi": "1,2"}, "alpha1"),
    ({"method": "ols"}, "method"),
    ({"regime_a": "0,1"}, "regime_b"),
    ({"colour": "red"}, "colour"),
    ({"bootstrap": "20"}, "bootstrap"),
    ({"normalize": "maybe"}, "normalize"),
])
def test_config_errors_name_key(values, key):
    with pytest.raises(ivio.ConfigError) as info:
        run_config(values)
    assert info.value.key == key
    assert str(info.value).startswith(key)


def test_large_seed_parses_exactly():
    assert run_config({"master_seed": str(2 ** 63 + 1)}).master_seed == 2 ** 63 + 1


def test_json_floats_full_precision():
    text = ivio.dumps({"a": 0.1, "b": [1.0, float("nan")], "c": 3, "d": None, "e": True})
    data = json.loads(text)
    assert data == {"a": 0.1, "b": [1.0, None], "c": 3, "d": None, "e": True}
    assert "0.10000000000000001" in text
    assert '"c": 3' in text


# command line ------------------------------------------------------------------------


def test_simulate_smoke(tmp_path, capsys):
    out = tmp_path / "d.csv"
    code, _, _ = run(["simulate", "--out", out, "--n", 1000], capsys)
    assert code == 0
    assert len(out.read_text().splitlines()) == 1001


def test_simulate_same_seed_same_bytes(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(["simulate", "--out", a, "--n", 300, "--seed", 5], capsys)
    run(["simulate", "--out", b, "--n", 300, "--seed", 5, "--workers", 3], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_simulate_bad_key(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("e1 = 1.5\n")
    code, _, err = run(["simulate", "--config", cfg, "--out", tmp_path / "d.csv"], capsys)
    assert code == 2
    assert "e1" in err


def test_simulate_emits_latents(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("emit_latents = true\nn = 40\n")
    out = tmp_path / "d.csv"
    assert run(["simulate", "--config", cfg, "--out", out], capsys)[0] == 0
    lat = latents_path(out)
    assert lat.name == "d.latents.csv"
    assert len(lat.read_text().splitlines()) == 41


@pytest.fixture
def dataset(tmp_path):
    path = tmp_path / "d.csv"
    ivio.write_csv(generate(SimConfig(n=20_000, seed=3))[0], path)
    return path


@pytest.mark.parametrize("method", ["latre", "naive", "noiv"])
def test_estimate_outputs_report(dataset, capsys, method):
    code, out, _ = run(["estimate", "--data", dataset, "--method", method], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["method"] == method
    assert np.isfinite(report["effect"])
    assert report["regime_a"] == [1, 0] and report["regime_b"] == [0, 1]


def test_estimate_bootstrap_deterministic(dataset, capsys):
    argv = ["estimate", "--data", dataset, "--method", "naive", "--bootstrap", 100, "--seed", 4]
    first = run(argv, capsys)[1]
    second = run(argv + ["--workers", 3], capsys)[1]
    assert first == second
    boot = json.loads(first)["bootstrap"]
    assert boot["lower"] <= json.loads(first)["effect"] <= boot["upper"]


def test_estimate_malformed_row(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("x0_1,z0,w0,y1\n0.1,1,1,2.0\n0.2,0,1,nope\n")
    code, _, err = run(["estimate", "--data", path], capsys)
    assert code == 2
    assert "row 2" in err


def test_estimate_degenerate_is_structured(tmp_path, capsys):
    rng = np.random.default_rng(0)
    n = 4000
    x0 = rng.uniform(-1, 1, size=(n, 6))
    z = (rng.uniform(size=(n, 2)) < 0.5).astype(float)
    path = tmp_path / "d.csv"
    # nobody is ever treated, so the complier probability estimate is exactly 0
    ivio.write_csv(PanelDataset([x0, x0], z, np.zeros((n, 2)), rng.normal(size=(n, 2))), path)
    code, out, _ = run(["estimate", "--data", path], capsys)
    assert code == 3
    assert json.loads(out)["error"]["type"] == "DegenerateDenominator"


def test_validate_command(tmp_path, dataset, capsys):
    code, out, _ = run(["validate", "--data", dataset], capsys)
    assert code == 0 and out.startswith("ok")
    bad = tmp_path / "bad.csv"
    bad.write_text("x0_1,z0,w0,y1\n0.1,2,1,2.0\n0.2,0,1,1.0\n0.3,1,1,1.0\n")
    code, out, _ = run(["validate", "--data", bad], capsys)
    assert code == 2
    assert "z out of {0,1} (path 0, period 0)" in out


def test_replicate_single_rep_collapses(capsys):
    code, out, _ = run(["replicate", "--R", 1, "--n", 50_000], capsys)
    assert code == 0
    result = json.loads(out)
    for m in ("latre", "naive", "noiv"):
        vals = list(result["methods"][m]["metrics"].values())
        assert vals == [abs(result["methods"][m]["estimates"][0] - 5.0)] * 4
    assert "wall_seconds" not in result


def test_replicate_same_seed_same_json_any_workers(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["replicate", "--R", 4, "--n", 4000, "--seed", 11, "--out", a], capsys)
    run(["replicate", "--R", 4, "--n", 4000, "--seed", 11, "--out", b, "--workers", 2], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_replicate_per_rep_csv(tmp_path, capsys):
    per = tmp_path / "reps.csv"
    run(["replicate", "--R", 3, "--n", 4000, "--seed", 6, "--per-rep", per, "--out", tmp_path / "r.json"],
        capsys)
    lines = per.read_text().splitlines()
    assert lines[0] == "replication,seed,latre,naive,noiv"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["6", "7", "4"]


def test_replicate_failure_names_replication(monkeypatch, capsys):
    from ivregime import harness
    from ivregime.identification import DegenerateDenominator

    real = harness.estimate

    def flaky(data, est, method=None):
        if data.n == 3001:
            raise DegenerateDenominator("forced")
        return real(data, est, "naive")

    monkeypatch.setattr(harness, "estimate", flaky)
    monkeypatch.setattr(harness, "generate", lambda sim: real_generate(sim.replace(n=3001 if sim.seed == 2 else 3000)))
    code, _, err = run(["replicate", "--R", 4, "--n", 3000], capsys)
    assert code == 3
    assert "replication 2 failed: DegenerateDenominator" in err


def test_missing_file(capsys):
    code, _, err = run(["validate", "--data", "/nonexistent/x.csv"], capsys)
    assert code == 2
