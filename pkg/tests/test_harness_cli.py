from __future__ import annotations

import json
import math

import pytest

from fklab import cli
from fklab.errors import SchemaError
from fklab.harness import ExperimentRecord, load_record, load_spec, render_svg, report, rows_to_csv, run, validate_spec


def detapprox_spec(**extra):
    spec = {
        "name": "x-minus-2",
        "experiment": "detapprox",
        "group": "Zd(1)",
        "element": "x - 2",
        "sofic": [{"kind": "cyclic", "sizes": [16]}, {"kind": "cyclic", "sizes": [64]}],
    }
    spec.update(extra)
    return spec


def weakstar_spec(threads=None):
    spec = {
        "name": "a-plus-b",
        "experiment": "weakstar",
        "group": "Free(2)",
        "element": "a + b",
        "sofic": [{"kind": "random-hom", "rank": 2, "degree": 500, "seed": 7}],
        "params": {"k_max": 3},
    }
    if threads:
        spec["threads"] = threads
    return spec


# --- schema -----------------------------------------------------------------


def test_schema_error_names_the_field():
    spec = {
        "name": "bad",
        "experiment": "entropy-bounds",
        "group": "Zd(1)",
        "element": "x - 2",
        "sofic": [{"kind": "cyclic", "sizes": [8]}],
        "params": {"delta": -0.1, "eps": 0.5},
    }
    with pytest.raises(SchemaError) as exc:
        validate_spec(spec)
    assert exc.value.field == "params.delta"
    assert "params.delta" in str(exc.value)
    assert exc.value.exit_code == 2


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"experiment": "nope"}, "experiment"),
        ({"group": "Z(3)"}, "group"),
        ({"sofic": []}, "sofic"),
        ({"threads": 0}, "threads"),
        ({"extra": 1}, "<root>"),
    ],
)
def test_schema_rejections(patch, field):
    with pytest.raises(SchemaError) as exc:
        validate_spec(detapprox_spec(**patch))
    assert exc.value.field == field


def test_schema_missing_required_param():
    spec = weakstar_spec()
    del spec["params"]["k_max"]
    with pytest.raises(SchemaError) as exc:
        validate_spec(spec)
    assert exc.value.field == "params.k_max"


def test_load_spec_reports_bad_json(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        load_spec(path)


# --- experiments ------------------------------------------------------------


def test_detapprox_two_rows_with_gap(tmp_path):
    rec = run(detapprox_spec(), out=tmp_path)
    lines = (tmp_path / "x-minus-2.csv").read_text().splitlines()
    assert len(lines) == 3
    header = lines[0].split(",")
    assert "gap" in header and "rate_log" in header
    assert [r["degree"] for r in rec.rows] == [16, 64]
    assert rec.rows[0]["gap"] < 1e-4
    data = json.loads((tmp_path / "x-minus-2.json").read_text())
    assert data["config"] == detapprox_spec()
    assert data["provenance"]["csv_sha256"]


def test_weakstar_exact_moments():
    rec = run(weakstar_spec())
    assert [r["exact"] for r in rec.rows] == [2, 6, 20]
    assert [r["k"] for r in rec.rows] == [1, 2, 3]
    assert all(r["gap"] >= 0 for r in rec.rows)


def test_entropy_bounds_experiment():
    spec = {
        "name": "eb",
        "experiment": "entropy-bounds",
        "group": "Zd(1)",
        "element": "x - 2",
        "sofic": [{"kind": "cyclic", "sizes": [16]}],
        "params": {"delta": [0.01, 0.0025], "eps": [0.1, 0.05]},
    }
    rows = run(spec).rows
    assert len(rows) == 2
    assert all(r["lower_log"] <= r["upper_log"] for r in rows)
    bad = dict(spec, params={"delta": [0.01, 0.02, 0.03], "eps": [0.1, 0.05]})
    with pytest.raises(SchemaError):
        validate_spec(bad)


@pytest.mark.parametrize(
    "spec, check",
    [
        (
            {"experiment": "lattice", "params": {"matrices": [[[2, 4], [6, 8]], [[1, 2, 3], [4, 5, 6]]]}},
            lambda rows: rows[0]["invariant_factors"] == "2 4" and rows[0]["quotient_order"] == 8 and rows[1]["det"] is None,
        ),
        (
            {"experiment": "overlap", "params": {"n": 1, "R": 1.0, "s": [0.0, 1.0], "samples": 20000}},
            lambda rows: rows[0]["estimate"] == 0 and abs(rows[1]["estimate"] - 0.5) < 0.02,
        ),
        (
            {"experiment": "mahler", "group": "Zd(1)", "element": "x - 2"},
            lambda rows: abs(rows[0]["value_log"] - math.log(2)) < 1e-8,
        ),
        (
            {"experiment": "series", "group": "Zd(1)", "element": "x + 3", "params": {"k_max": 40}},
            lambda rows: abs(rows[0]["value_log"] - math.log(3)) <= rows[0]["error"] + 1e-12,
        ),
        (
            {"experiment": "spectrum", "group": "Zd(1)", "element": "x + 1", "sofic": [{"kind": "cyclic", "sizes": [4]}]},
            lambda rows: rows[0]["zero_count"] == 1 and rows[0]["atoms"] == 4,
        ),
        (
            {"experiment": "perturb", "group": "Zd(1)", "element": "x + 1", "sofic": [{"kind": "cyclic", "sizes": [4]}]},
            lambda rows: rows[0]["rows_excluded"] == 1 and rows[0]["det_certified_nonzero"] == 1,
        ),
        (
            {
                "experiment": "submodule",
                "group": "Zd(1)",
                "element": "x - 2",
                "alpha": "x^2 - x - 2",
                "sofic": [{"kind": "cyclic", "sizes": [5]}],
                "params": {"C": 10},
            },
            lambda rows: rows[0]["fraction"] == "1",
        ),
    ],
    ids=["lattice", "overlap", "mahler", "series", "spectrum", "perturb", "submodule"],
)
def test_every_experiment_runs(spec, check):
    rec = run({"name": "t", **spec})
    assert check(rec.rows)


def test_serial_and_threaded_runs_agree():
    spec = detapprox_spec(sofic=[{"kind": "cyclic", "sizes": [N]} for N in (8, 16, 32, 64)])
    serial = run(spec, threads=1)
    threaded = run(spec, threads=4)
    assert serial.csv == threaded.csv
    assert serial.provenance == threaded.provenance


def test_rerun_is_byte_identical():
    assert run(weakstar_spec()).csv == run(weakstar_spec()).csv


def test_csv_formatting():
    text = rows_to_csv([{"a": 0.1, "b": None, "c": "1/3"}, {"a": 1e-20, "b": 2, "c": "x,y"}])
    lines = text.splitlines()
    assert lines[0] == "a,b,c"
    assert lines[1] == "0.1,,1/3"
    assert lines[2].startswith("1e-20,2,")
    assert float(lines[1].split(",")[0]) == 0.1


# --- report -----------------------------------------------------------------


def test_report_single_record_has_reference_rule():
    rec = run(detapprox_spec())
    svg, text = report([rec])
    assert svg.startswith("<svg") and "stroke-dasharray" in svg
    assert "x-minus-2" in text and "reference" in text
    assert svg == report([rec])[0]


def test_report_empty_rows():
    rec = ExperimentRecord("empty", "detapprox", {}, [], {}, {})
    assert report([rec]) == (None, "no data\n")


def test_report_two_records_two_series():
    a = run(detapprox_spec())
    b = run(detapprox_spec(name="x-plus-1", element="x + 1", sofic=[{"kind": "cyclic", "sizes": [17]}, {"kind": "cyclic", "sizes": [65]}]))
    svg = render_svg([a, b])
    assert svg.count("<polyline") == 2
    assert "x-minus-2" in svg and "x-plus-1" in svg


def test_record_round_trip(tmp_path):
    rec = run(detapprox_spec(), out=tmp_path)
    back = load_record(tmp_path / "x-minus-2.json")
    assert back.rows == json.loads(json.dumps(rec.to_json()))["rows"]
    assert back.config == rec.config


# --- command line -----------------------------------------------------------


def test_cli_run_and_report(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(detapprox_spec()))
    assert cli.main(["run", str(spec), "--out", str(tmp_path / "out"), "--threads", "2"]) == 0
    record = tmp_path / "out" / "x-minus-2.json"
    assert record.exists()
    assert cli.main(["report", str(record), "--svg", str(tmp_path / "plot.svg")]) == 0
    assert (tmp_path / "plot.svg").read_text().startswith("<svg")
    assert "x-minus-2" in capsys.readouterr().out


def test_cli_schema_error_exit_code(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(dict(detapprox_spec(), experiment="entropy-bounds", params={"delta": -0.1, "eps": 0.5})))
    assert cli.main(["run", str(spec)]) == 2
    assert "params.delta" in capsys.readouterr().err


def test_cli_mahler(capsys):
    assert cli.main(["mahler", "--element", "x-2", "--d", "1", "--tol", "1e-8"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["value"] - math.log(2)) < 1e-8 and out["method"] == "quadrature"


def test_cli_exit_codes(capsys):
    assert cli.main(["mahler", "--element", "x + 2", "--d", "4"]) == 4
    assert cli.main(["series", "--element", "x + 1", "--d", "1"]) == 4
    assert cli.main(["series", "--element", "5 - a - a^-1 - b - b^-1", "--group", "Free(2)", "--tol", "1e-3", "--support-limit", "20000"]) == 3
    assert cli.main(["mahler", "--element", "3x", "--d", "1"]) == 2
    capsys.readouterr()


def test_cli_count_small(capsys):
    assert cli.main(["count-small", "--n", "2", "--r", "1"]) == 0
    assert cli.main(["count-small", "--n", "2", "--r", "1", "--enumerate"]) == 0
    assert capsys.readouterr().out.split() == ["13", "13"]


def test_cli_lift_and_matrix_ops(tmp_path, capsys):
    mtx = tmp_path / "a.mtx"
    assert cli.main(["lift", "--element", "x - 2", "--d", "1", "--cyclic", "5", "--out", str(mtx)]) == 0
    capsys.readouterr()
    assert cli.main(["det", "--matrix", str(mtx)]) == 0
    assert abs(int(capsys.readouterr().out)) == 31
    assert cli.main(["rank", "--matrix", str(mtx)]) == 0
    assert json.loads(capsys.readouterr().out)["rank"] == 5
    assert cli.main(["snf", "--matrix", str(mtx)]) == 0
    assert capsys.readouterr().out.split()[-1] == "31"


def test_cli_spectrum_and_perturb(tmp_path, capsys):
    out = tmp_path / "spec.csv"
    assert cli.main(["spectrum", "--element", "x + 1", "--d", "1", "--cyclic", "4", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "value,weight_num,weight_den,certified_zero"
    assert cli.main(["perturb", "--element", "x + 1", "--d", "1", "--cyclic", "4"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["rows_excluded"] == 1 and info["det_certified_nonzero"]


def test_cli_overlap(capsys):
    assert cli.main(["overlap", "--n", "1", "--s", "1", "--samples", "20000"]) == 0
    assert abs(json.loads(capsys.readouterr().out)["estimate"] - 0.5) < 0.02


def test_cli_missing_file(capsys):
    assert cli.main(["det", "--matrix", "/nonexistent/a.mtx"]) == 2


def test_shipped_specs_validate():
    from pathlib import Path

    paths = sorted((Path(__file__).parent.parent / "specs").glob("*.json"))
    assert paths
    for path in paths:
        spec = load_spec(path)
        assert spec["name"] == path.stem
