import json

import pytest
from click.testing import CliRunner

from colombeau.cli import ConfigError, builtin_names, load_builtin, main, resolve, run_scenario

SMALL = {"box": [-4.0, 4.0], "N": 4096, "eps": {"max": 0.25, "min": 2.0 ** -6}}


def _scenario(tasks, **extra):
    cfg = {"name": "unit", "anchor": "unit test", "regime": {"name": "distribution"}, "domain": SMALL,
           "tasks": tasks}
    cfg.update(extra)
    return cfg


IDENTITY = {"name": "d-heaviside", "kind": "identity",
            "lhs": {"op": "hat", "T": "d", "args": [{"op": "iota", "atom": "heaviside@0"}]},
            "rhs": {"op": "iota", "atom": "delta@0"}, "window": [-2, 2], "expect": {"tol": 1e-8}}
ADMISSIBLE = {"name": "poly", "kind": "scale_admissibility", "pair": "poly", "expect": {"pass": True}}


@pytest.fixture
def runner():
    return CliRunner()


def _write(tmp_path, cfg):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_list_shows_builtins(runner):
    res = runner.invoke(main, ["list"])
    assert res.exit_code == 0
    for name in ("delta-square", "diffeo-invariance", "embedding-products", "fourier-bounds", "sheaf-glue"):
        assert name in builtin_names() and name in res.output


def test_run_writes_report_and_curves(runner, tmp_path):
    out = tmp_path / "out"
    res = runner.invoke(main, ["run", _write(tmp_path, _scenario([IDENTITY, ADMISSIBLE])), "--out", str(out),
                               "--curves"])
    assert res.exit_code == 0, res.output
    report = json.loads((out / "report.json").read_text())
    assert report["pass"] and report["header"]["anchor"] == "unit test"
    assert [t["name"] for t in report["tasks"]] == ["d-heaviside", "poly"]
    lines = (out / "curves.csv").read_text().splitlines()
    assert lines[0] == "task,eps,value,bound" and len(lines) == 6


def test_reports_are_deterministic_apart_from_the_timestamp(tmp_path):
    cfg = _scenario([IDENTITY, ADMISSIBLE])
    texts = []
    for sub in ("a", "b"):
        run_scenario(cfg, tmp_path / sub)
        lines = (tmp_path / sub / "report.json").read_text().splitlines()
        texts.append([ln for ln in lines if not ln.lstrip().startswith('"generated"')])
    assert texts[0] == texts[1]
    assert len(texts[0]) > 10


def test_failed_expectation_exits_one(runner, tmp_path):
    task = dict(ADMISSIBLE, expect={"pass": False})
    res = runner.invoke(main, ["run", _write(tmp_path, _scenario([task]))])
    assert res.exit_code == 1
    assert "FAIL poly" in res.output


@pytest.mark.parametrize("mutate, message", [
    (lambda c: c["tasks"][0]["rhs"].update(atom="dleta@0"), "unknown atom 'dleta@0'"),
    (lambda c: c.update(regime={"name": "sobolev"}), "unknown regime"),
    (lambda c: c["tasks"][0].update(kind="integrate"), "unknown kind"),
    (lambda c: c.update(tasks=[]), "nonempty task list"),
    (lambda c: c["domain"].update(N=1000), "domain"),
    (lambda c: c["tasks"].append(dict(c["tasks"][0])), "duplicate task name"),
])
def test_config_errors_exit_two(runner, tmp_path, mutate, message):
    cfg = _scenario([json.loads(json.dumps(IDENTITY))])
    cfg["domain"] = dict(SMALL)
    mutate(cfg)
    res = runner.invoke(main, ["run", _write(tmp_path, cfg)])
    assert res.exit_code == 2
    assert message in res.output


def test_missing_config_and_bad_json(runner, tmp_path):
    assert runner.invoke(main, ["run", "no-such-scenario"]).exit_code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert runner.invoke(main, ["run", str(bad)]).exit_code == 2


def test_eps_override_and_resolution():
    res = resolve(_scenario([ADMISSIBLE]), seed=7, eps_min=2.0 ** -5)
    assert res["eps"] == [2.0 ** -k for k in range(2, 6)]
    assert res["seed"] == 7
    with pytest.raises(ConfigError):
        resolve(_scenario([ADMISSIBLE]), eps_min=2.0 ** -3)


def test_verify_scales(runner):
    res = runner.invoke(main, ["verify-scales", "poly"])
    assert res.exit_code == 0
    assert json.loads(res.output)["pass"] is True
    assert runner.invoke(main, ["verify-scales", "quadratic"]).exit_code == 2


def test_verify_mollifier_rejects_unknown_params(runner):
    assert runner.invoke(main, ["verify-mollifier", "gaussian"]).exit_code == 2


@pytest.mark.parametrize("name", builtin_names())
def test_builtin_scenarios_validate(name):
    res = resolve(load_builtin(name))
    assert res["anchor"] and res["tasks"]
    assert all("expect" in t for t in res["tasks"])
