import csv
import io
import json
import sys
from pathlib import Path
from unittest.mock import patch

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from pushbeta import runlog
from pushbeta.cli import run
from pushbeta.distribution import sample
from pushbeta.params import Direction, PushBetaParams

FIGURE = ["--shape1", "3", "--shape2", "2", "--intensity", "4", "--proportion", "0.6"]
SURVEY = ["--shape1", "1", "--shape2", "93", "--intensity", "248", "--proportion", str(1 / 3), "--right"]


@pytest.fixture(autouse=True)
def isolated_home(tmp_path, monkeypatch):
    monkeypatch.setenv("PUSHBETA_HOME", str(tmp_path / "home"))
    monkeypatch.delenv("PUSHBETA_LOG", raising=False)
    yield tmp_path
    runlog.configure()


def _run(argv, stdin_text=""):
    out, err = io.StringIO(), io.StringIO()
    code = run(argv, stdin=io.StringIO(stdin_text), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_pdf_plain_prints_values_only():
    code, out, err = _run(["pdf", "--shape1", "2", "--shape2", "2", "--x", "0.5"])
    assert code == 0
    assert out == "1.5\n"
    assert err == ""


def test_aliases_behave_like_commands():
    assert _run(["dpushbeta", *FIGURE, "--x", "0.2,0.7"])[1] == _run(["pdf", *FIGURE, "--x", "0.2,0.7"])[1]
    code, out, _ = _run(["--help"])
    assert code == 0
    for alias in ("dpushbeta", "ppushbeta", "qpushbeta", "rpushbeta", "moments.dpushbeta", "scale.pushbeta", "HDR.pushbeta"):
        assert alias in out


def test_pdf_json_table():
    code, out, _ = _run(["pdf", *FIGURE, "--x", "0,0.5,2", "--format", "json"])
    assert code == 0
    rows = json.loads(out)
    assert [row["x"] for row in rows] == [0.0, 0.5, 2.0]
    assert rows[0]["density"] == 0.0
    assert rows[2]["density"] == 0.0
    assert rows[1]["density"] > 0.0


def test_cdf_and_quantile_round_trip():
    code, out, _ = _run(["cdf", *FIGURE, "--x", "0.3"])
    assert code == 0
    p = out.strip()
    code, out, _ = _run(["qpushbeta", *FIGURE, "--p", p])
    assert code == 0
    assert float(out) == pytest.approx(0.3, abs=1e-6)


def test_upper_tail_flag():
    lower = float(_run(["cdf", *FIGURE, "--x", "0.4"])[1])
    upper = float(_run(["cdf", *FIGURE, "--x", "0.4", "--no-lower-tail"])[1])
    assert lower + upper == pytest.approx(1.0, abs=1e-9)


def test_sample_is_reproducible():
    argv = ["rpushbeta", *FIGURE, "--n", "5", "--seed", "7"]
    first, second = _run(argv), _run(argv)
    assert first == second
    assert len(first[1].splitlines()) == 5
    code, out, _ = _run([*argv, "--format", "json"])
    payload = json.loads(out)
    assert payload["seed"] == 7
    assert len(payload["values"]) == 5


def test_moments_for_survey_posterior():
    code, out, _ = _run(["moments.dpushbeta", *SURVEY, "--include-sd", "--format", "json"])
    assert code == 0
    record = json.loads(out)
    assert record["mean"] == pytest.approx(0.1856469, abs=1e-4)
    assert record["sd"] == pytest.approx(0.0701663, abs=1e-4)


def test_moments_plain_with_logs():
    code, out, _ = _run(["moments", "--shape1", "1", "--shape2", "1", "--proportion", "0.5", "--include-logs"])
    assert code == 0
    lines = dict(line.split(": ", 1) for line in out.splitlines())
    assert float(lines["mean"]) == pytest.approx(0.5)
    assert float(lines["e_log_x"]) == pytest.approx(-1.0, abs=1e-8)
    assert "entropy" in lines


def test_scale_reports_log_integral():
    code, out, _ = _run(["scale.pushbeta", "--shape1", "2", "--shape2", "3", "--r", "1"])
    assert code == 0
    assert float(out) == pytest.approx(-2.4849066498, abs=1e-8)


def test_shape_and_hdr():
    code, out, _ = _run(["shape", *FIGURE, "--format", "json"])
    record = json.loads(out)
    assert record["classification"] == "quasi_concave"
    assert record["mode"] == pytest.approx(0.41001, abs=1e-4)

    code, out, _ = _run(["HDR.pushbeta", "--shape1", "2", "--shape2", "2", "--cover-prob", "0.5", "--format", "json"])
    region = json.loads(out)
    assert len(region["intervals"]) == 1
    lo, hi = region["intervals"][0]
    assert lo + hi == pytest.approx(1.0, abs=1e-6)


def test_density_curve_csv():
    code, out, _ = _run(["density-curve", *FIGURE[:4], "--intensity", "0,1,4", "--proportion", "0.6", "--points", "5"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["x", "gamma=0", "gamma=1", "gamma=4"]
    assert len(rows) == 6
    assert [float(r[0]) for r in rows[1:]] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_posterior_survey_command():
    code, out, _ = _run(
        ["posterior", "--survey-yes", "248", "--survey-no", "92", "--proportion", str(1 / 3), "--format", "json"]
    )
    assert code == 0
    record = json.loads(out)
    assert record["variant"] == "absence"
    assert record["posterior"]["beta"] == 93
    assert record["posterior"]["gamma"] == 248
    assert record["posterior"]["direction"] == "right"
    assert record["mean"] == pytest.approx(0.1856469, abs=1e-4)
    lo, hi = record["hdr"][0]
    assert lo < record["mean"] < hi


def test_posterior_primary_counts():
    code, out, _ = _run(
        ["posterior", "--shape1", "2", "--shape2", "3", "--intensity", "1", "--proportion", "0.4",
         "--n", "10", "--sum", "4", "--format", "json"]
    )
    assert code == 0
    assert json.loads(out)["posterior"] == {"alpha": 6.0, "beta": 3.0, "gamma": 7.0, "phi": 0.4, "direction": "left"}


def test_posterior_absence_counts_give_the_survey_posterior():
    code, out, err = _run(
        ["posterior", "--shape1", "1", "--shape2", "1", "--proportion", str(1 / 3), "--right",
         "--variant", "absence", "--n", "340", "--sum", "92", "--format", "json"]
    )
    assert code == 0, err
    record = json.loads(out)
    assert record["posterior"]["alpha"] == 1.0
    assert record["posterior"]["beta"] == 93.0
    assert record["posterior"]["gamma"] == 248.0
    assert record["mean"] == pytest.approx(0.1856469, abs=1e-4)
    assert record["sd"] == pytest.approx(0.0701663, abs=1e-4)
    (lo, hi), = record["hdr"]
    assert lo < record["mean"] < hi


def test_kl_values_and_profile():
    code, out, _ = _run(["kl", "--theta0", "0.5", "--phi0", "1", "--phi", "1", "--theta", "0.25"])
    assert code == 0
    assert float(out) == pytest.approx(0.1438410362, abs=1e-9)

    code, out, _ = _run(["kl", "--theta0", "0.9", "--phi0", "0.9", "--phi", "0.5", "--format", "json"])
    assert json.loads(out)["theta_star"] == 1.0


def test_consistency_csv():
    code, out, _ = _run(
        ["consistency", "--theta0", "0.5", "--phi0", "0.5", "--phi", "0.5",
         "--schedule", "10,20", "--replications", "2", "--seed", "1"]
    )
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["replication", "n", "post_mean", "post_sd", "theta_star", "abs_err"]
    assert [(r[0], r[1]) for r in rows[1:]] == [("0", "10"), ("0", "20"), ("1", "10"), ("1", "20")]


def test_fit_reads_stdin():
    data = sample(500, PushBetaParams(2, 3, 0, 0.5, Direction.LEFT), seed=3)
    text = "# draws\n" + "\n".join(repr(float(v)) for v in data) + "\n"
    code, out, _ = _run(["fit", "--fix-phi", "0"], stdin_text=text)
    assert code == 0
    record = json.loads(out)
    assert record["n"] == 500
    assert record["params"]["phi"] == 0.0
    assert record["converged"] is True


def test_fit_reads_file(isolated_home):
    path = isolated_home / "data.txt"
    path.write_text("0.2\n0.4\n0.5\n0.7\n0.9\n", encoding="utf-8")
    code, out, _ = _run(["fit", "--input", str(path), "--fix-phi", "0.5", "--max-iterations", "3"])
    assert code == 0
    assert json.loads(out)["iterations"] <= 3


def test_usage_and_parameter_errors_exit_2():
    code, out, err = _run(["pdf", "--x", "0.5"])
    assert code == 2
    assert err.startswith("pushbeta: ")

    code, _, err = _run(["pdf", "--shape1", "-1", "--shape2", "2", "--x", "0.5"])
    assert code == 2
    assert "alpha" in err

    code, _, err = _run(["fit"], stdin_text="0.3\nnope\n")
    assert code == 2
    assert "line 2" in err


def test_fit_failure_exits_1():
    code, out, err = _run(["fit"], stdin_text="0.2\n0.4\n0.6\n")
    assert code == 1
    assert out == ""
    assert err.startswith("pushbeta: ")


def test_numerical_failures_exit_1():
    argv = ["posterior", "--shape1", "2", "--shape2", "3", "--intensity", "1", "--proportion", "0.4", "--n", "10", "--sum", "4"]
    with patch("pushbeta.cli.hdr", side_effect=ValueError("f(a) and f(b) must have different signs")):
        code, out, err = _run(argv)
    assert code == 1
    assert out == ""
    assert err == "pushbeta: f(a) and f(b) must have different signs\n"

    code, _, err = _run(["posterior", "--shape1", "2", "--shape2", "3", "--intensity", "x", "--n", "10", "--sum", "4"])
    assert code == 2
    assert "--intensity" in err


def test_settings_persist(isolated_home):
    code, out, _ = _run(["settings", "--format", "json"])
    record = json.loads(out)
    assert record["saved"] is False
    assert record["node_count"] == 10**6

    code, out, _ = _run(["settings", "--intvals", "5000", "--method", "quantile", "--format", "json"])
    record = json.loads(out)
    assert record["saved"] is True
    assert Path(record["settings_file"]) == (isolated_home / "home" / "settings.json").resolve()

    code, out, _ = _run(["settings", "--format", "json"])
    record = json.loads(out)
    assert record["node_count"] == 5000
    assert record["method"] == "quantile"

    code, _, err = _run(["settings", "--intvals", "0"])
    assert code == 2


def test_verbose_and_log_file(isolated_home):
    log_path = isolated_home / "events.jsonl"
    code, _, err = _run(["--verbose", "--log-file", str(log_path), "fit", "--fix-phi", "0"], stdin_text="0.2\n0.4\n0.5\n0.8\n")
    assert code == 0
    events = [json.loads(line) for line in err.splitlines()]
    assert events[-1]["event"] == "fit_finished"
    assert any(e["event"] == "fit_iteration" for e in events)
    logged = [json.loads(line) for line in log_path.read_text(encoding="utf-8").splitlines()]
    assert logged[-1]["event"] == "fit_finished"
