import csv
import io
import json

import pytest

from fibrepair.cli import main, parse_filter, parse_range
from fibrepair.errors import ConfigError
from fibrepair.jsa import FilterSpec, RelativeFilter
from fibrepair.tomography import read_record_csv


def run(argv, stdin=""):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, stdout=out, stderr=err, stdin=io.StringIO(stdin))
    return code, out.getvalue(), err.getvalue()


def test_parse_helpers():
    assert parse_range("700:740:200") == (700.0, 740.0, 200)
    assert parse_range("705") == (705.0, 705.0, 1)
    with pytest.raises(ConfigError):
        parse_range("a:b:c")
    assert isinstance(parse_filter("10x"), RelativeFilter)
    assert parse_filter("597:1.5:gaussian") == FilterSpec(597.0, 1.5, "gaussian")
    with pytest.raises(ConfigError):
        parse_filter("wide")


def test_presets_list():
    code, out, _ = run(["presets", "list"])
    assert code == 0 and "pcf-a" in out.split()


def test_phasematch_csv():
    code, out, _ = run(["phasematch", "--preset", "pcf-a", "--scheme", "ssff", "--pump", "700:740:200"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 200
    assert all(590 < float(r["lambda_s_nm"]) < 650 for r in rows)


def test_phasematch_deterministic():
    argv = ["phasematch", "--pump", "700:740:21"]
    assert run(argv)[1] == run(argv)[1]


def test_bad_preset_exit_2():
    code, _, err = run(["phasematch", "--preset", "nope"])
    assert code == 2 and "unknown preset" in err


def test_bad_arguments_exit_2():
    assert run(["phasematch", "--pump", "x:y:z"])[0] == 2
    assert run(["nonsense"])[0] == 2
    assert run(["jsa", "--filter-s", "wide"])[0] == 2


def test_empty_window_header_only():
    code, out, _ = run(["phasematch", "--pump", "700:705:2", "--window", "450:460"])
    assert code == 0
    assert out.strip().count("\n") == 0 and out.startswith("lambda_p_nm,")


def test_numerical_error_exit_3():
    code, _, err = run(["bandwidth", "--window", "450:460"])
    assert code == 3 and "no phase-matched signal" in err


def test_span_error_exit_3():
    assert run(["jsa", "--grid", "64", "--span-factor", "0.2"])[0] == 3


def test_bandwidth_summary(tmp_path):
    code, out, _ = run(["bandwidth", "--lengths", "0.2,0.4", "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads(out)
    assert summary["signal_bandwidth_nm"][1] == pytest.approx(0.15, abs=0.02)
    rows = list(csv.DictReader(open(tmp_path / "bandwidth.csv")))
    assert [float(r["length_m"]) for r in rows] == [0.2, 0.4]


def test_jsa_outputs(tmp_path):
    code, out, _ = run(["jsa", "--grid", "128", "--out", str(tmp_path)])
    assert code == 0
    s = json.loads(out)
    assert s["K"] >= 1.0 and s["signal_fwhm_nm"] < s["idler_fwhm_nm"]
    for name in ("jsi.csv", "signal_marginal.csv", "idler_marginal.csv", "summary.json"):
        assert (tmp_path / name).is_file()
    rows = list(csv.reader(open(tmp_path / "jsi.csv")))
    assert len(rows) == 129 and len(rows[1]) == 129


def test_schmidt_scan_quick(tmp_path):
    code, out, _ = run(
        ["schmidt-scan", "--length", "0.4", "--grid", "128", "--samples", "6", "--bw-range", "1:6", "--out", str(tmp_path)]
    )
    assert code == 0
    s = json.loads(out)
    assert 1.0 <= s["K_min"] < 1.1
    assert (tmp_path / "bandwidth_scan.csv").is_file()


def test_hom(tmp_path):
    code, out, _ = run(["hom", "--grid", "128", "--out", str(tmp_path)])
    assert code == 0
    s = json.loads(out)
    assert s["visibility"] == pytest.approx(1 / s["K_a"], abs=1e-9)
    rows = list(csv.DictReader(open(tmp_path / "hom_dip.csv")))
    assert len(rows) == 201


def test_tomo_metrics():
    code, out, _ = run(["tomo", "metrics", "--state", "phi_plus.json"])
    m = json.loads(out)
    assert code == 0 and m["fidelity"] == 1.0 and m["linear_entropy"] == 0.0
    m = json.loads(run(["tomo", "metrics", "--state", "sagnac_reconstructed.json"])[1])
    assert m["fidelity"] == pytest.approx(0.839, abs=0.005)


def test_tomo_pipeline():
    code, record, _ = run(["tomo", "simulate", "--state", "phi_plus.json", "--n", "10000", "--seed", "7"])
    assert code == 0
    assert read_record_csv(io.StringIO(record)).counts.sum() > 0
    assert run(["tomo", "simulate", "--state", "phi_plus.json", "--n", "10000", "--seed", "7"])[1] == record
    code, out, _ = run(["tomo", "reconstruct", "-"], stdin=record)
    assert code == 0
    assert json.loads(out)["metrics"]["fidelity"] > 0.98


def test_tomo_reconstruct_output_reloads(tmp_path):
    record = run(["tomo", "simulate", "--state", "phi_plus", "--n", "1000", "--seed", "1"])[1]
    (tmp_path / "r.csv").write_text(record)
    code, out, _ = run(["tomo", "reconstruct", str(tmp_path / "r.csv"), "--method", "linear"])
    assert code == 0
    (tmp_path / "rho.json").write_text(out)
    code, out, _ = run(["tomo", "metrics", "--state", str(tmp_path / "rho.json")])
    assert code == 0 and json.loads(out)["fidelity"] > 0.9


def test_tomo_schema_error_reports_row():
    record = run(["tomo", "simulate", "--state", "phi_plus", "--n", "100", "--seed", "1"])[1]
    lines = record.split("\n")
    lines[5] = lines[5].rsplit(",", 1)[0] + ",-3"
    code, _, err = run(["tomo", "reconstruct", "-"], stdin="\n".join(lines))
    assert code == 2 and "row 6" in err


def test_tomo_missing_file():
    assert run(["tomo", "reconstruct", "/nonexistent/record.csv"])[0] == 2
    assert run(["tomo", "metrics", "--state", "/nonexistent.json"])[0] == 2


def test_tomo_fringe():
    code, out, _ = run(["tomo", "fringe", "--state", "phi_plus", "--basis", "D", "--angles", "0:90:19"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 19


def test_recipes(tmp_path):
    code, out, _ = run(["recipe", "list"])
    assert code == 0
    assert out.split() == sorted(["fig1", "fig3", "fig4", "fig9a", "fig9b", "fig10", "fig11"])
    code, _, _ = run(["recipe", "fig4", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "fig4" / "bandwidth.csv").is_file()
    assert run(["recipe", "fig99"])[0] == 2
