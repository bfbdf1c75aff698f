import json
from pathlib import Path

import numpy as np
import pytest

from gaitrt.cli import main
from gaitrt.dataset import read_dataset
from gaitrt.pipeline.packets import dump_records_from_trial, write_dump


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ds_dir = root / "dataset"
    rc = main(["generate", "--out", str(ds_dir), "--subjects", "2",
               "--trials", "1", "--duration", "12", "--seed", "3"])
    assert rc == 0
    return root, ds_dir


def test_generate_creates_dataset(workspace):
    _, ds_dir = workspace
    meta = json.loads((ds_dir / "metadata.json").read_text())
    assert len(meta["subjects"]) == 2
    ds = read_dataset(ds_dir)
    assert ds.subjects[0].trials[0].gt.rate == 100.0


def test_unknown_flag_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--no-such-flag"])
    assert exc.value.code == 2


def test_bad_input_machine_readable_error(tmp_path, capsys):
    rc = main(["eval", "--dataset", str(tmp_path / "missing"),
               "--model-config", "GRF"])
    assert rc == 1
    assert "error code=format_error" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained_models(workspace):
    root, ds_dir = workspace
    grf = root / "grf.grtm"
    angle = root / "angle.grtm"
    moment = root / "moment.grtm"
    base = ["--dataset", str(ds_dir), "--seed", "5", "--skip-protocol",
            "--trees", "8", "--row-stride", "15"]
    assert main(["train", *base, "--model-config", "GRF", "--out", str(grf)]) == 0
    assert main(["train", *base, "--model-config", "W4", "--out", str(angle)]) == 0
    assert main(["train", "--dataset", str(ds_dir), "--seed", "5",
                 "--skip-protocol", "--model-config", "M_5JOINT",
                 "--max-epochs", "4", "--window-stride", "40",
                 "--arch-blocks", "6,8", "--arch-dense", "8",
                 "--out", str(moment)]) == 0
    return grf, angle, moment


def test_eval_protocol_prints_reports(workspace, capsys):
    _, ds_dir = workspace
    rc = main(["eval", "--dataset", str(ds_dir), "--model-config", "W1",
               "--mode", "intra", "-k", "3", "--trees", "4",
               "--row-stride", "20", "--seed", "1"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "fold 0 ankleflex" in out
    assert "aggregate ankleflex" in out
    assert "rmse=" in out


def test_eval_model_file(workspace, trained_models, capsys):
    _, ds_dir = workspace
    grf, _, _ = trained_models
    rc = main(["eval", "--dataset", str(ds_dir), "--model-config", "GRF",
               "--model", str(grf)])
    assert rc == 0
    assert "vgrf_bw" in capsys.readouterr().out


def test_train_deterministic_model_files(workspace, tmp_path):
    _, ds_dir = workspace
    a, b = tmp_path / "a.grtm", tmp_path / "b.grtm"
    args = ["train", "--dataset", str(ds_dir), "--model-config", "GRF",
            "--seed", "7", "--skip-protocol", "--trees", "4",
            "--row-stride", "25"]
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_replay_and_report(workspace, trained_models, tmp_path, capsys):
    root, ds_dir = workspace
    grf, angle, moment = trained_models
    ds = read_dataset(ds_dir)
    subj = ds.subjects[0]
    dump_path = tmp_path / "session.dump"
    write_dump(dump_records_from_trial(subj.trials[0]), dump_path)

    out_dir = tmp_path / "rtlogs"
    rc = main(["replay", "--dump", str(dump_path), "--out", str(out_dir),
               "--grf-model", str(grf), "--angle-model", str(angle),
               "--moment-model", str(moment),
               "--mass-kg", str(subj.meta.mass_kg),
               "--weight-n", str(subj.meta.weight_n),
               "--as-fast-as-possible"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "stage offsets ms" in out
    assert (out_dir / "grf_predictions.csv").exists()

    rc = main(["report", "--logs", str(out_dir), "--dataset", str(ds_dir),
               "--out", str(tmp_path / "report")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "vgrf_bw" in out and "moment_ankleflex" in out
    assert (tmp_path / "report" / "mean_profiles.csv").exists()


def test_config_file_supplies_defaults(workspace, tmp_path, capsys):
    _, ds_dir = workspace
    cfg = tmp_path / "run.cfg"
    cfg.write_text("trees=4\nrow-stride=30\n# comment line\n")
    rc = main(["eval", "--dataset", str(ds_dir), "--model-config", "W1",
               "--mode", "intra", "-k", "2", "--seed", "1",
               "--config", str(cfg)])
    assert rc == 0
