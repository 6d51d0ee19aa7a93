import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodalab.cli import REGISTRY, ConfigError, RunConfig, load_config, main

SMALL = {
    "fields": [{"closed_form": "square_mode", "args": [2, 1]}, {"eigen": 2}],
    "mesh_h": 1 / 32,
    "centers": [[0.5, 0.5], [0.3, 0.6]],
    "sweep": {"amplitudes": [0.0, 1.0], "indices": [2, 3], "frequency": 3.0},
}


def _write(tmp_path, cfg, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps({**cfg, "output": str(tmp_path / "out")}))
    return str(p)


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("run")
    cfg = _write(tmp, SMALL)
    codes = {c: main([c, cfg]) for c in ("solve", "frequency", "doubling", "nodal", "divide", "sweep")}
    codes["report"] = main(["report", str(tmp / "out")])
    return tmp / "out", codes


def test_all_commands_succeed(full_run):
    _, codes = full_run
    assert codes == {c: 0 for c in codes}


def test_report_covers_every_registered_check(full_run):
    out, _ = full_run
    rep = json.loads((out / "report.json").read_text())
    assert rep["manifest"]["coverage"] == {k: True for k in REGISTRY}
    assert all(r["check"] in REGISTRY or r["check"] == "hard_invariant" for r in rep["records"])
    assert (out / "summary.csv").exists()
    assert any((out / "plotdata").iterdir())


def test_divide_summary_kappa(full_run):
    out, _ = full_run
    s = json.loads((out / "divide" / "summary.json").read_text())
    assert s["kappa"] == "17/18"


def test_report_on_empty_directory(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) != 0
    assert "dependency error" in capsys.readouterr().err


def test_counterexample_oracle_sets_nonzero_exit(tmp_path, capsys):
    cfg = _write(tmp_path, {"dividing": {"A": 3, "M0": 2.0, "oracle": "counterexample", "M_Q": 17.0}})
    assert main(["divide", cfg]) == 1
    assert "FAILED dividing" in capsys.readouterr().err


@pytest.mark.parametrize(
    "bad, path",
    [
        ({"mesh_h": 2}, "mesh_h"),
        ({"radii": [0.2, 0.1]}, "radii"),
        ({"fields": [{"eigen": 0}]}, "fields[0].eigen"),
        ({"dividing": {"A": 4}}, "dividing.A"),
        ({"bogus": 1}, "bogus"),
        ({"domain": {"kind": "triangle"}}, "domain"),
    ],
)
def test_malformed_config_reports_field_path(tmp_path, capsys, bad, path):
    assert main(["solve", _write(tmp_path, bad)]) == 2
    assert f"config error: {path}" in capsys.readouterr().err


def test_override_flags(tmp_path):
    cfg = load_config(_write(tmp_path, SMALL), ["mesh_h=0.05", "fields.1.eigen=4"])
    assert cfg.mesh_h == 0.05 and cfg.fields[1] == {"eigen": 4}
    with pytest.raises(ConfigError):
        load_config(None, ["fields.7.eigen=1"])


@settings(max_examples=40, deadline=None)
@given(
    st.floats(1e-3, 0.25),
    st.lists(st.floats(1e-3, 0.999), min_size=1, max_size=6, unique=True),
    st.integers(-(2**31), 2**31),
    st.floats(-10, 10),
)
def test_config_round_trip_bit_exact(h, radii, seed, offset):
    cfg = RunConfig(mesh_h=h, radii=sorted(radii), seed=seed, potential={"family": "constant", "offset": offset})
    back = RunConfig.from_dict(json.loads(cfg.dumps()))
    assert back == cfg
    assert back.dumps() == cfg.dumps()


def test_nodal_command_length(tmp_path):
    cfg = _write(tmp_path, {"fields": [{"closed_form": "square_mode", "args": [3, 2]}], "mesh_h": 1 / 256})
    assert main(["nodal", cfg]) == 0
    rep = json.loads((tmp_path / "out" / "nodal" / "report.json").read_text())
    L = [r["total_length"] for r in rep["records"] if r["inputs"].get("kind") == "nodal_length"]
    assert L[0] == pytest.approx(3.0, rel=0.01)
