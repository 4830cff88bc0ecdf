import os

import numpy as np
import pytest

from oplu_net import Rng, gen_image_classes, load_checkpoint, write_idx_images, write_idx_labels
from oplu_net.cli import main, run_adding, run_grad_diag, run_mnist
from oplu_net.config import ConfigError, format_config, load_config


def write_image_fixture(dir_path, n_train=600, n_test=300, seed=5):
    """Small synthetic labeled-image dataset in IDX files."""
    ds = gen_image_classes(n_train + n_test, Rng(seed))
    os.makedirs(dir_path, exist_ok=True)

    def dump(images, labels, img_name, lbl_name):
        write_idx_images(os.path.join(dir_path, img_name), (images * 255).round().astype(np.uint8))
        write_idx_labels(os.path.join(dir_path, lbl_name), labels.astype(np.uint8))

    dump(ds.images[:n_train], ds.labels[:n_train], "train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    dump(ds.images[n_train:], ds.labels[n_train:], "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


class TestConfig:
    def test_defaults_echo_training_hyperparameters(self):
        text = format_config("adding", load_config("adding"))
        for line in (
            "alpha = 0.0001",
            "mu = 0.9",
            "batch_size = 20",
            "train_n = 20000",
            "valid_n = 1000",
            "test_n = 10000",
            "iterations_per_epoch = 50",
            "seq_len = 30",
            "epochs = 500",
            "threshold = 0.04",
        ):
            assert line in text.splitlines()
        mnist = format_config("mnist", load_config("mnist"))
        assert "alpha = 0.01" in mnist.splitlines()
        assert "mu = 0.9" in mnist.splitlines()

    def test_file_and_overrides(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("seq_len = 12\nalpha = 0.002  # comment\n\n# full line comment\n")
        cfg = load_config("adding", cfg_file, {"epochs": "3"})
        assert cfg["seq_len"] == 12
        assert cfg["alpha"] == 0.002
        assert cfg["epochs"] == 3

    def test_unknown_key_in_file(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("learning_rate = 0.1\n")
        with pytest.raises(ConfigError, match="learning_rate"):
            load_config("adding", cfg_file)

    def test_unknown_key_on_command_line(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config("adding", overrides={"bogus": "1"})

    def test_bad_value_type(self):
        with pytest.raises(ConfigError, match="epochs"):
            load_config("adding", overrides={"epochs": "many"})

    def test_odd_oplu_hidden_rejected(self):
        with pytest.raises(ConfigError, match="even"):
            load_config("adding", overrides={"hidden": "7"})

    def test_paper_scale_epochs(self):
        assert load_config("adding", overrides={"paper_scale": "true"})["epochs"] == 2000
        assert load_config(
            "adding", overrides={"paper_scale": "true", "seq_len": "100"}
        )["epochs"] == 5000
        # explicit epochs win
        assert load_config(
            "adding", overrides={"paper_scale": "true", "epochs": "7"}
        )["epochs"] == 7


ADDING_SMOKE = {
    "seq_len": "6",
    "epochs": "2",
    "iterations_per_epoch": "4",
    "batch_size": "5",
    "train_n": "40",
    "valid_n": "10",
    "test_n": "10",
    "hidden": "8",
}


class TestRunAdding:
    def test_smoke_outputs(self, tmp_path):
        cfg = load_config("adding", overrides={**ADDING_SMOKE, "out_dir": str(tmp_path)})
        report = run_adding(cfg)
        assert os.path.exists(report.csv_path)
        assert os.path.exists(report.checkpoint_path)
        lines = open(report.csv_path).read().splitlines()
        assert lines[0] == "epoch,train_mse,valid_mse"
        assert len(lines) == 3  # header + 2 epochs
        assert 0.0 <= report.test_success_rate <= 1.0
        net = load_checkpoint(report.checkpoint_path)
        assert net.hidden_dim == 8
        trace_lines = open(os.path.join(tmp_path, "adding_oplu_T6_delta_trace.csv")).read().splitlines()
        assert trace_lines[0] == "step_index,l2_norm"
        assert len(trace_lines) == 7  # header + one row per unrolled step

    def test_byte_identical_reruns(self, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        rep_a = run_adding(load_config("adding", overrides={**ADDING_SMOKE, "out_dir": str(out_a)}))
        rep_b = run_adding(load_config("adding", overrides={**ADDING_SMOKE, "out_dir": str(out_b)}))
        assert open(rep_a.csv_path, "rb").read() == open(rep_b.csv_path, "rb").read()
        assert open(rep_a.checkpoint_path, "rb").read() == open(rep_b.checkpoint_path, "rb").read()

    def test_horizon_default_matches_seq_len(self, tmp_path):
        cfg = load_config("adding", overrides={**ADDING_SMOKE, "out_dir": str(tmp_path)})
        assert cfg["horizon"] == 0  # resolved to seq_len inside the runner
        run_adding(cfg)


class TestRunGradDiag:
    def test_single_step_trace(self, tmp_path):
        cfg = load_config(
            "grad-diag",
            overrides={"horizon": "1", "repeats": "2", "hidden": "6", "out_dir": str(tmp_path)},
        )
        report = run_grad_diag(cfg)
        lines = open(report.csv_path).read().splitlines()
        data_rows = [l for l in lines if not l.startswith("#") and "," in l and "step" not in l]
        assert len(data_rows) == 1

    def test_oplu_flat_relu_decaying(self, tmp_path):
        oplu_cfg = load_config(
            "grad-diag",
            overrides={"horizon": "40", "repeats": "5", "hidden": "12", "out_dir": str(tmp_path)},
        )
        oplu_rep = run_grad_diag(oplu_cfg)
        assert abs(oplu_rep.decay_ratio - 1.0) <= 1e-8
        assert not oplu_rep.flagged

        relu_cfg = load_config(
            "grad-diag",
            overrides={
                "activation": "relu",
                "horizon": "40",
                "repeats": "5",
                "hidden": "12",
                "out_dir": str(tmp_path),
            },
        )
        relu_rep = run_grad_diag(relu_cfg)
        assert relu_rep.decay_ratio < 1.0

    def test_metadata_in_csv(self, tmp_path):
        cfg = load_config(
            "grad-diag",
            overrides={"horizon": "3", "repeats": "1", "hidden": "4", "activation": "tanh",
                       "out_dir": str(tmp_path)},
        )
        report = run_grad_diag(cfg)
        text = open(report.csv_path).read()
        assert "# activation=tanh" in text
        assert "# init=xavier" in text
        assert "step,mean_l2_norm" in text
        # every data row is "int,float" parseable and round-trips exactly
        for line in text.splitlines():
            if line.startswith("#") or line.startswith("step"):
                continue
            step, norm = line.split(",")
            int(step)
            assert repr(float(norm)) == norm


MNIST_SMOKE = {
    "hidden": "16",
    "epochs": "1",
    "batch_size": "32",
}


class TestRunMnist:
    def test_smoke_and_untrained_chance_level(self, tmp_path):
        data_dir = tmp_path / "data"
        write_image_fixture(data_dir, n_train=500, n_test=400)
        cfg = load_config(
            "mnist",
            overrides={**MNIST_SMOKE, "epochs": "0", "data_dir": str(data_dir),
                       "out_dir": str(tmp_path / "out")},
        )
        report = run_mnist(cfg)
        assert abs(report.initial_test_accuracy - 0.10) <= 0.05
        assert report.final_test_accuracies == [report.initial_test_accuracy]

    def test_training_improves_and_is_deterministic(self, tmp_path):
        data_dir = tmp_path / "data"
        write_image_fixture(data_dir)
        overrides = {**MNIST_SMOKE, "data_dir": str(data_dir)}
        rep_a = run_mnist(load_config("mnist", overrides={**overrides, "out_dir": str(tmp_path / "a")}))
        rep_b = run_mnist(load_config("mnist", overrides={**overrides, "out_dir": str(tmp_path / "b")}))
        assert rep_a.final_test_accuracies == rep_b.final_test_accuracies
        assert rep_a.best > rep_a.initial_test_accuracy
        assert open(rep_a.csv_path, "rb").read() == open(rep_b.csv_path, "rb").read()
        assert open(rep_a.checkpoint_path, "rb").read() == open(rep_b.checkpoint_path, "rb").read()
        lines = open(rep_a.csv_path).read().splitlines()
        assert lines[0] == "run,epoch,train_loss,train_accuracy,test_accuracy"

    def test_repeats_report_best_and_mean(self, tmp_path):
        data_dir = tmp_path / "data"
        write_image_fixture(data_dir, n_train=300, n_test=200)
        cfg = load_config(
            "mnist",
            overrides={**MNIST_SMOKE, "repeats": "2", "data_dir": str(data_dir),
                       "out_dir": str(tmp_path / "out")},
        )
        report = run_mnist(cfg)
        assert len(report.final_test_accuracies) == 2
        assert report.best == max(report.final_test_accuracies)
        assert abs(report.mean - np.mean(report.final_test_accuracies)) < 1e-12


class TestMainExitCodes:
    def test_show_config(self, capsys):
        assert main(["adding", "--show-config"]) == 0
        out = capsys.readouterr().out
        assert "alpha = 0.0001" in out

    def test_config_error(self, capsys):
        assert main(["adding", "--bogus", "1"]) == 1
        assert "config error" in capsys.readouterr().err

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_value(self, capsys):
        assert main(["adding", "--alpha"]) == 1

    def test_data_error_for_missing_files(self, tmp_path, capsys):
        assert main([
            "mnist", "--data_dir", str(tmp_path), "--epochs", "0",
            "--out_dir", str(tmp_path / "out"),
        ]) == 2
        assert "data error" in capsys.readouterr().err

    def test_help(self, capsys):
        assert main([]) == 0
        assert "oplu-net" in capsys.readouterr().out

    def test_full_run_via_main(self, tmp_path, capsys):
        code = main([
            "grad-diag", "--horizon", "2", "--repeats", "1", "--hidden", "4",
            "--out_dir", str(tmp_path),
        ])
        assert code == 0
        assert "grad-diag" in capsys.readouterr().out

    def test_equals_style_overrides(self, tmp_path):
        code = main([
            "grad-diag", "--horizon=2", "--repeats=1", "--hidden=4",
            f"--out_dir={tmp_path}",
        ])
        assert code == 0

    def test_config_file_via_main(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("horizon = 2\nrepeats = 1\nhidden = 4\n" f"out_dir = {tmp_path}\n")
        assert main(["grad-diag", "--config", str(cfg)]) == 0
