import json

import numpy as np
import pytest

from todaflow import cli, svgout
from todaflow.errors import ConfigError


def minimal_grow_config(out_dir, steps=40, duration=0.4):
    return {
        "scenario": "grow",
        "seed": 5,
        "output": {"directory": str(out_dir), "formats": ["csv", "json", "svg"]},
        "grow": {
            "map": {"r": 1.0, "coeffs": []},
            "flows": [{"kind": "t0_infinity", "duration": duration, "steps": steps}],
            "moment_order": 4,
            "snapshots": 3,
        },
    }


def test_parse_minimal_grow_config(tmp_path):
    cfg = cli.parse_config(json.dumps(minimal_grow_config(tmp_path)))
    assert cfg.scenario == "grow"
    assert cfg.seed == 5
    assert cfg.params["flows"][0]["kind"] == "t0_infinity"


def test_parse_rejects_two_scenario_sections(tmp_path):
    raw = minimal_grow_config(tmp_path)
    raw["hydro"] = {"profile": {"grid": [0, 1], "q_values": [0, 1]},
                    "speed": {"kind": "identity"}, "s": 0.1}
    with pytest.raises(ConfigError) as err:
        cli.parse_config(json.dumps(raw))
    text = str(err.value)
    assert "grow" in text and "hydro" in text


def test_parse_reports_negative_hbar_pointer():
    raw = {"scenario": "dyson", "dyson": {"N": 8, "hbar": -1.0}}
    with pytest.raises(ConfigError) as err:
        cli.parse_config(json.dumps(raw))
    assert any(ptr == "/dyson/hbar" for ptr, _ in err.value.problems)


def test_parse_rejects_unknown_keys(tmp_path):
    raw = minimal_grow_config(tmp_path)
    raw["grow"]["mystery"] = 1
    raw["typo_key"] = 2
    with pytest.raises(ConfigError) as err:
        cli.parse_config(json.dumps(raw))
    pointers = [ptr for ptr, _ in err.value.problems]
    assert "/grow/mystery" in pointers
    assert "/typo_key" in pointers


def test_parse_collects_all_errors():
    raw = {"scenario": "dyson", "dyson": {"N": 0, "hbar": -1.0, "mode": "wat"}}
    with pytest.raises(ConfigError) as err:
        cli.parse_config(json.dumps(raw))
    assert len(err.value.problems) >= 3


def test_parse_reports_missing_keys_with_pointers():
    with pytest.raises(ConfigError) as err:
        cli.parse_config(json.dumps({"scenario": "loewner", "loewner": {}}))
    pointers = [ptr for ptr, _ in err.value.problems]
    assert "/loewner/driving" in pointers
    assert "/loewner/q_max" in pointers


def test_parse_invalid_json():
    with pytest.raises(ConfigError):
        cli.parse_config("{not json")


def test_grow_scenario_end_to_end(tmp_path):
    text = json.dumps(minimal_grow_config(tmp_path / "out", steps=100, duration=3.0))
    report = cli.run_scenario(cli.parse_config(text))
    assert report.exit_code == 0
    assert abs(report.manifest["summary"]["final_r"] - 2.0) < 1e-5
    names = {f["name"] for f in report.manifest["files"]}
    assert names == {"trajectory.csv", "moments.csv", "contours.json", "contours.svg"}
    header = (tmp_path / "out" / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("step,time,t0,r,re_a0,im_a0")
    moments_header = (tmp_path / "out" / "moments.csv").read_text().splitlines()[0]
    assert moments_header == "step,k,re_tk,im_tk,re_vk,im_vk"


def test_loewner_scenario_monotone_real_trace(tmp_path):
    raw = {
        "scenario": "loewner",
        "output": {"directory": str(tmp_path / "out")},
        "loewner": {"driving": {"kind": "constant", "theta0": 0.0},
                    "q0": 0.0, "q_max": 0.5, "trace_points": 12},
    }
    report = cli.run_scenario(cli.parse_config(json.dumps(raw)))
    assert report.exit_code == 0
    rows = (tmp_path / "out" / "trace.csv").read_text().splitlines()[1:]
    tips = np.array([[float(v) for v in row.split(",")] for row in rows])
    assert np.all(np.diff(tips[:, 1]) > 0)  # re_tip increasing
    assert np.max(np.abs(tips[:, 2])) < 1e-9  # im_tip zero by symmetry


def test_hydro_scenario_breakdown_exit_code(tmp_path):
    raw = {
        "scenario": "hydro",
        "output": {"directory": str(tmp_path / "out")},
        "hydro": {"profile": {"grid": [0.1, 0.5, 0.9], "q_values": [0.1, 0.5, 0.9]},
                  "speed": {"kind": "identity"}, "s": 2.0},
    }
    report = cli.run_scenario(cli.parse_config(json.dumps(raw)))
    assert report.exit_code == 2
    assert report.manifest["status"] == "breakdown"
    assert report.manifest["breakdown"]["s_star"] == pytest.approx(1.0, abs=1e-6)
    assert not report.manifest["complete"]


def test_dyson_scenario_small_circular_law(tmp_path):
    raw = {
        "scenario": "dyson",
        "seed": 7,
        "output": {"directory": str(tmp_path / "out")},
        "dyson": {"N": 64, "hbar": 1.0 / 64, "times": [], "mode": "minimize"},
    }
    report = cli.run_scenario(cli.parse_config(json.dumps(raw)))
    assert report.exit_code == 0
    support = json.loads((tmp_path / "out" / "support.json").read_text())
    assert abs(support["fitted_map"]["r"] - 1.0) < 0.05
    state_rows = (tmp_path / "out" / "state.csv").read_text().splitlines()
    assert len(state_rows) == 65  # header + N


def test_hydro_csv_inputs(tmp_path):
    profile_csv = tmp_path / "profile_in.csv"
    profile_csv.write_text("t0,q\n0.1,0.1\n0.5,0.5\n0.9,0.9\n")
    speed_csv = tmp_path / "speed_in.csv"
    speed_csv.write_text("q,c\n-2.0,-2.0\n2.0,2.0\n")
    raw = {
        "scenario": "hydro",
        "output": {"directory": str(tmp_path / "out")},
        "hydro": {"profile": {"csv": str(profile_csv)},
                  "speed": {"kind": "table_csv", "path": str(speed_csv)}, "s": 0.25},
    }
    report = cli.run_scenario(cli.parse_config(json.dumps(raw)))
    assert report.exit_code == 0
    rows = (tmp_path / "out" / "profile.csv").read_text().splitlines()[1:]
    q_mid = float(rows[1].split(",")[1])
    assert q_mid == pytest.approx(0.5 / 0.75, abs=1e-9)  # q = t0 / (1 - s)


def test_missing_csv_is_config_error(tmp_path):
    raw = {
        "scenario": "hydro",
        "output": {"directory": str(tmp_path / "out")},
        "hydro": {"profile": {"csv": str(tmp_path / "nope.csv")},
                  "speed": {"kind": "identity"}, "s": 0.1},
    }
    with pytest.raises(ConfigError):
        cli.run_scenario(cli.parse_config(json.dumps(raw)))


def test_moments_scenario(tmp_path):
    raw = {
        "scenario": "moments",
        "output": {"directory": str(tmp_path / "out"), "formats": ["json"]},
        "moments": {"map": {"r": 1.0, "coeffs": [[0, 0], [0.3, 0]]}, "order": 4},
    }
    report = cli.run_scenario(cli.parse_config(json.dumps(raw)))
    data = json.loads((tmp_path / "out" / "moments.json").read_text())
    assert data["t0"] == pytest.approx(0.91)
    assert data["t"][1][0] == pytest.approx(0.15)


def test_reproducibility_byte_identical(tmp_path):
    text = json.dumps(minimal_grow_config(tmp_path / "a", steps=30))
    cfg1 = cli.parse_config(text)
    cli.run_scenario(cfg1, out_dir=tmp_path / "a")
    cfg2 = cli.parse_config(text)
    cli.run_scenario(cfg2, out_dir=tmp_path / "b")
    for name in ("trajectory.csv", "moments.csv", "contours.json", "contours.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    ma.pop("wall_time_s"), mb.pop("wall_time_s")
    assert ma == mb


def test_main_exit_codes(tmp_path):
    good = tmp_path / "good.json"
    good.write_text(json.dumps(minimal_grow_config(tmp_path / "out", steps=5, duration=0.05)))
    assert cli.main([str(good)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": "dyson", "dyson": {"N": 4, "hbar": -1}}))
    assert cli.main([str(bad)]) == 1
    assert cli.main([str(tmp_path / "missing.json")]) == 1


def test_main_seed_and_format_overrides(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    raw = {
        "scenario": "dyson",
        "seed": 1,
        "output": {"directory": str(tmp_path / "o1")},
        "dyson": {"N": 8, "hbar": 0.125, "mode": "minimize"},
    }
    cfg_path.write_text(json.dumps(raw))
    assert cli.main([str(cfg_path), "--seed", "2", "--format", "csv",
                     "--out", str(tmp_path / "o2")]) == 0
    produced = {p.name for p in (tmp_path / "o2").iterdir()}
    assert "state.csv" in produced
    assert "support.json" not in produced


def test_manifest_lists_every_file_with_hash(tmp_path):
    text = json.dumps(minimal_grow_config(tmp_path / "out", steps=5, duration=0.05))
    report = cli.run_scenario(cli.parse_config(text))
    import hashlib
    for entry in report.manifest["files"]:
        data = (tmp_path / "out" / entry["name"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]
        assert entry["bytes"] == len(data)


def test_render_svg_square_and_determinism():
    square = [0, 1, 1 + 1j, 1j, 0]
    doc1 = svgout.render_svg([("polyline", square, {})])
    doc2 = svgout.render_svg([("polyline", square, {})])
    assert doc1 == doc2
    assert doc1.count("<path") == 2  # square plus scale bar
    assert "viewBox" in doc1


def test_render_svg_points_and_empty():
    pts = [0.1 + 0.2j, -0.3j, 1.0]
    doc = svgout.render_svg([("points", pts, {})])
    assert doc.count("<circle") == 3
    empty = svgout.render_svg([])
    assert "warning: empty input" in empty
    assert empty.startswith("<svg")
