import csv
import json
import math

import pytest

from maxwell_cfem import runner
from maxwell_cfem.runner import ExperimentSpec, RunError


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    spec = ExperimentSpec(domain="cube", r=1, coarse_n=2, levels=2, nev=5, out=str(out),
                          export_matrices=True, export_vtk=True)
    report = runner.run(spec)
    runner.write_outputs(report, out)
    return spec, report, out


def test_spec_defaults_and_validation(tmp_path):
    assert ExperimentSpec(domain="fichera").nev == 8
    assert ExperimentSpec(domain="thick-l").nev == 9
    assert ExperimentSpec().nev == 11
    assert ExperimentSpec(coarse_n=3, levels=3).ns == [3, 6, 12]
    for bad in ({"r": 3}, {"levels": 0}, {"coarse_n": 0}, {"nev": 0}, {"domain": "ball"}, {"boundary": "x"}):
        with pytest.raises(ValueError):
            ExperimentSpec(**bad)


def test_tiny_run(tiny):
    spec, report, out = tiny
    assert report.passed, [a for a in report.assertions if not a.passed]
    lv = report.convergence.levels
    assert [x.n for x in lv] == [2, 4]
    assert lv[1].num_tets == 384
    assert lv[1].lam[0] == pytest.approx(2 * math.pi ** 2, rel=0.2)
    assert lv[1].rel_err[0] < lv[0].rel_err[0]
    assert len(lv[1].l2_err) == 5
    assert (out / "level1" / "n4_S.mtx").exists()
    assert "u_h" in (out / "level1_mode0.vtk").read_text()


def test_json_roundtrip_and_csv_agree(tiny):
    _, report, out = tiny
    back = runner.RunReport.from_json((out / "report.json").read_text())
    assert back.to_dict() == json.loads(report.to_json())
    assert back.to_dict()["schema_version"] == runner.SCHEMA_VERSION
    with open(out / "convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == runner.CSV_COLUMNS
    for row in rows:
        lv = back.convergence.levels[int(row["level"])]
        m = int(row["mode"])
        assert float(row["lambda"]) == lv.lam[m]
        assert float(row["rel_err"]) == lv.rel_err[m]
        assert float(row["l2_err"]) == lv.l2_err[m]
        assert float(row["hcurl_err"]) == lv.hcurl_err[m]
        assert int(row["N"]) == lv.num_tets and int(row["dof_u"]) == lv.dof_u
        if row["order_h"]:
            assert float(row["order_h"]) == back.convergence.eigenvalue_orders(m)[lv.level - 1]


def test_unknown_schema_rejected(tiny):
    data = tiny[1].to_dict()
    data["schema_version"] = 99
    with pytest.raises(ValueError):
        runner.RunReport.from_dict(data)


def test_plot_data(tiny):
    _, _, out = tiny
    with open(out / "plot_eigenvalue.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["series", "N", "value"]
    assert any(r[0] == "guide_slope_-0.667" for r in rows[1:])
    assert (out / "plot_eigenfunction.csv").exists()


def test_plot_data_empty_report(tmp_path):
    report = runner.RunReport(
        spec={}, environment={},
        convergence=runner.an.ConvergenceReport("thick-l", 2, "tangential", [1.0]),
    )
    (path,) = runner.emit_plot_data(report, tmp_path)
    assert path.read_text().strip() == "series,N,value"


def test_thick_l_guide_slope(tmp_path):
    report = runner.run(ExperimentSpec(domain="thick-l", r=2, coarse_n=1, levels=2, nev=3))
    paths = runner.emit_plot_data(report, tmp_path)
    assert "guide_slope_-0.450" in paths[0].read_text()


def test_deterministic_reruns():
    spec = ExperimentSpec(domain="thick-l", r=1, coarse_n=2, levels=1, nev=4)
    a, b = runner.run(spec), runner.run(spec)
    for x, y in zip(a.convergence.levels, b.convergence.levels):
        assert x.lam == y.lam and x.residuals == y.residuals


def test_max_dofs_guard():
    with pytest.raises(RunError) as info:
        runner.run(ExperimentSpec(coarse_n=64, levels=1, max_dofs=1000))
    assert info.value.report.partial
    assert "max-dofs" in str(info.value)


def test_layout_failure_is_partial():
    with pytest.raises(RunError) as info:
        runner.run(ExperimentSpec(coarse_n=1, levels=2, nev=2))
    assert info.value.report.partial and not info.value.report.passed


def test_cli_exit_codes(tmp_path, capsys):
    assert runner.main(["--domain", "cube", "--coarse-n", "2", "--levels", "1", "--nev", "3",
                        "--out", str(tmp_path)]) == 0
    assert (tmp_path / "report.json").exists()
    assert "assertions: all passed" in capsys.readouterr().out
    assert runner.main(["--coarse-n", "0"]) == 2
    assert runner.main(["--coarse-n", "64", "--max-dofs", "10"]) == 1
    with pytest.raises(SystemExit):
        runner.main(["--domain", "sphere"])
