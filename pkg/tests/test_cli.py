import math

import orjson
import pytest

from collapsesim.cli import main, parse_number, parse_params, policies_for
from collapsesim.core.measurement import CollapsePolicy


@pytest.fixture(autouse=True)
def config_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("COLLAPSESIM_CONFIG_DIR", str(tmp_path / "config"))
    return tmp_path / "config"


@pytest.mark.parametrize(
    "text,value",
    [
        ("0.25", 0.25),
        ("pi", math.pi),
        ("-pi", -math.pi),
        ("pi/2", math.pi / 2),
        ("2*pi/3", 2 * math.pi / 3),
        (" 0.5pi ", 0.5 * math.pi),
        ("1e5", 1e5),
    ],
)
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value)


def test_parse_number_rejects_words():
    with pytest.raises(ValueError):
        parse_number("half")


def test_parse_params():
    assert parse_params(["phi=pi", "trials=100"]) == {"phi": pytest.approx(math.pi), "trials": 100.0}
    with pytest.raises(ValueError):
        parse_params(["phi"])


def test_policies_for():
    assert policies_for("both") == [CollapsePolicy.COLLAPSE, CollapsePolicy.UNITARY_ONLY]
    assert policies_for("unitary") == [CollapsePolicy.UNITARY_ONLY]


def test_list(capsys):
    main(["list"])
    out = capsys.readouterr().out
    assert "hardy" in out
    assert "csl-ensemble" in out


def test_describe(capsys):
    main(["describe", "which-way"])
    assert "arrival_step" in capsys.readouterr().out


def test_describe_unknown():
    with pytest.raises(SystemExit) as err:
        main(["describe", "nope"])
    assert err.value.code == 1


def test_run_writes_json(tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "hardy", "--param", "trials=300", "--out", str(out), "--format", "json"])
    document = orjson.loads((out / "hardy.json").read_bytes())
    assert document["scenario"]["parameters"]["trials"] == 300.0
    assert "passed" in capsys.readouterr().out


def test_run_from_config_file(tmp_path):
    spec = tmp_path / "triple.yaml"
    spec.write_text("name: triple-interference\nseed: 5\nparameters:\n  trials: 200\n")
    out = tmp_path / "csv"
    main(
        ["run", "--config", str(spec), "--param", "theta1=pi/4", "--out", str(out), "--format", "csv"]
    )
    assert (out / "intensity_collapse_noclick.csv").exists()
    assert (out / "expectations.csv").exists()


def test_run_config_name_mismatch(tmp_path):
    spec = tmp_path / "hardy.yaml"
    spec.write_text("name: hardy\n")
    with pytest.raises(SystemExit) as err:
        main(["run", "mz-histories", "--config", str(spec)])
    assert err.value.code == 1


def test_run_unknown_parameter(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["run", "hardy", "--param", "phi=1", "--out", str(tmp_path)])
    assert err.value.code == 1


def test_run_without_scenario():
    with pytest.raises(SystemExit) as err:
        main(["run"])
    assert err.value.code == 1


def test_failed_expectation_exit_code(tmp_path):
    # a grid off the quarter period misses the dark fringe
    with pytest.raises(SystemExit) as err:
        main(
            ["run", "mz-histories", "--param", "grid_points=1022", "--param", "trials=10", "--out", str(tmp_path)]
        )
    assert err.value.code == 2


def test_run_uses_saved_settings(config_dir, tmp_path):
    from collapsesim.core.config import SettingsManager

    out = tmp_path / "saved"
    SettingsManager(str(config_dir)).save_settings(
        seed=9, out_dir=str(out), format="json", policy="collapse"
    )
    main(["run", "hardy", "--param", "trials=200"])
    document = orjson.loads((out / "hardy.json").read_bytes())
    assert document["scenario"]["seed"] == 9
    assert [r["policy"] for r in document["results"]] == ["collapse"]


def test_config_show(capsys, config_dir):
    main(["config", "show"])
    out = capsys.readouterr().out
    assert "settings.json" in out
    assert "seed" in out


def test_no_command():
    with pytest.raises(SystemExit):
        main([])
