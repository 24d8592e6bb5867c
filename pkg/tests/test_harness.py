import json

import numpy as np
import pytest

from idx_io import write_idx_images, write_idx_labels
from matnet.cli import main as cli_main
from matnet.data import Dataset
from matnet.harness import (
    ConfigError,
    classify_accuracy,
    config_from_dict,
    config_to_dict,
    default_config,
    derived_seeds,
    gradcheck,
    gradcheck_random,
    load_config,
    run_experiment,
    spec_from_dict,
    spec_to_dict,
    validate_config,
)
from matnet.network import Activation, LayerSpec, NetworkSpec, random_gains
from matnet.train import GdConfig, RsmConfig, TrainingError

SIG = Activation.SIGMOID
LIN = Activation.LINEAR


def small_xor_config(tmp_path=None, **overrides):
    """XOR defaults shrunk for fast tests."""
    cfg = default_config("xor", seed=5)
    cfg.gd = GdConfig(0.5, 5)
    cfg.rsm = RsmConfig(8, 1.0, 5, seed=cfg.rsm.seed)
    if tmp_path is not None:
        cfg.out_dir = str(tmp_path)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


class TestDefaults:
    def test_xor_defaults(self):
        cfg = default_config("xor")
        assert cfg.spec.gain_shapes == ((3, 2), (2, 1))
        assert cfg.gd.learning_rate == 5.0 and cfg.gd.epochs == 50
        assert cfg.rsm.ensemble_size == 50 and cfg.rsm.radius == 1.0
        assert cfg.rootfind.max_iterations == 50
        assert cfg.methods == ("gd", "fs", "rsm")

    def test_sine_defaults(self):
        cfg = default_config("sine")
        assert cfg.spec.input_width == 1
        assert [l.activation for l in cfg.spec.layers] == [SIG, LIN]
        assert cfg.spec.final_linear is None
        assert cfg.gd.learning_rate == 0.01
        assert cfg.rsm.ensemble_size == 500
        assert cfg.sine_count == 100

    def test_mnist_defaults(self):
        cfg = default_config("mnist")
        assert cfg.spec.gain_shapes == ((785, 30), (31, 3))
        assert cfg.gd.learning_rate == 0.7
        assert cfg.rsm.ensemble_size == 5000
        assert cfg.record_gains is False

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            default_config("parity")


class TestValidation:
    def test_empty_methods(self):
        cfg = small_xor_config(methods=())
        with pytest.raises(ConfigError):
            validate_config(cfg)

    def test_unknown_method(self):
        with pytest.raises(ConfigError):
            default_config("xor", methods=("gd", "nag"))

    def test_mnist_requires_paths(self):
        cfg = default_config("mnist")
        validate_config(cfg)  # structurally fine without data files
        with pytest.raises(ConfigError, match="mnist_images"):
            validate_config(cfg, require_data=True)


class TestConfigSerialization:
    def test_spec_round_trip(self):
        spec = NetworkSpec(4, (LayerSpec(3, SIG), LayerSpec(2, LIN)), final_linear=2)
        assert spec_from_dict(spec_to_dict(spec)) == spec

    def test_config_round_trip(self):
        cfg = small_xor_config()
        back = config_from_dict(config_to_dict(cfg))
        assert config_to_dict(back) == config_to_dict(cfg)

    def test_partial_dict_gets_defaults(self):
        cfg = config_from_dict({"name": "xor", "seed": 9, "gd": {"epochs": 3}})
        assert cfg.seed == 9
        assert cfg.gd.epochs == 3
        assert cfg.gd.learning_rate == 5.0
        assert cfg.rsm.seed == derived_seeds(9)["rsm"]

    def test_custom_needs_spec_and_seed(self):
        with pytest.raises(ConfigError):
            config_from_dict({"name": "custom"})


class TestRunExperiment:
    def test_xor_outputs(self, tmp_path):
        cfg = small_xor_config(tmp_path)
        report = run_experiment(cfg)
        for key in ("gd", "fs", "rsm"):
            assert (tmp_path / f"cost_{key}.csv").exists()
            assert (tmp_path / f"gains_{key}.csv").exists()
        assert (tmp_path / "predictions.csv").exists()
        assert (tmp_path / "metadata.json").exists()
        # four probe rows plus header
        lines = (tmp_path / "predictions.csv").read_text().splitlines()
        assert len(lines) == 5
        assert lines[0] == "x_0,x_1,y_0,gd_0,fs_0,rsm_0"
        assert report.probe_inputs.shape == (4, 2)

    def test_cost_csv_rows_and_round_trip(self, tmp_path):
        cfg = small_xor_config(tmp_path, methods=("gd",))
        report = run_experiment(cfg)
        lines = (tmp_path / "cost_gd.csv").read_text().splitlines()
        assert lines[0] == "epoch,cost,wall_ms"
        assert len(lines) == 1 + cfg.gd.epochs + 1  # header + initial + epochs
        parsed = [float(line.split(",")[1]) for line in lines[1:]]
        recorded = [r.cost for r in report.traces["gd"].records]
        assert parsed == recorded  # 17 significant digits round-trip exactly

    def test_gains_csv_matches_flattened_order(self, tmp_path):
        cfg = small_xor_config(tmp_path, methods=("gd",))
        report = run_experiment(cfg)
        lines = (tmp_path / "gains_gd.csv").read_text().splitlines()[1:]
        n_params = cfg.spec.param_count
        assert len(lines) == (cfg.gd.epochs + 1) * n_params
        first = [float(line.split(",")[2]) for line in lines[:n_params]]
        np.testing.assert_array_equal(first, report.traces["gd"].snapshots[0])

    def test_deterministic_reruns_byte_identical(self, tmp_path):
        out1, out2, out3 = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        run_experiment(small_xor_config(out1))
        run_experiment(small_xor_config(out2))
        run_experiment(small_xor_config(out3, concurrent=True))
        for name in ("cost_gd.csv", "cost_fs.csv", "cost_rsm.csv",
                     "gains_rsm.csv", "predictions.csv"):
            ref = (out1 / name).read_bytes()
            assert (out2 / name).read_bytes() == ref
            assert (out3 / name).read_bytes() == ref

    def test_metadata_closure(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        run_experiment(small_xor_config(out1))
        cfg = load_config(out1 / "metadata.json")
        cfg.out_dir = str(out2)
        run_experiment(cfg)
        for name in ("cost_rsm.csv", "predictions.csv"):
            assert (out2 / name).read_bytes() == (out1 / name).read_bytes()

    @pytest.mark.filterwarnings("ignore:overflow")
    @pytest.mark.filterwarnings("ignore:invalid value")
    def test_partial_results_flushed_on_failure(self, tmp_path):
        # An affine model cannot saturate, so a huge learning rate diverges
        # geometrically until the gradient overflows and gd aborts; fs has
        # already finished and its files must still be written.
        cfg = config_from_dict({
            "name": "custom",
            "seed": 5,
            "spec": {
                "input_width": 2,
                "layers": [{"width": 2, "activation": "linear"}],
                "final_linear": 1,
            },
            "methods": ["fs", "gd"],
            "gd": {"learning_rate": 1e10, "epochs": 40},
        })
        cfg.out_dir = str(tmp_path)
        with pytest.raises(TrainingError):
            run_experiment(cfg)
        assert (tmp_path / "cost_fs.csv").exists()
        assert (tmp_path / "metadata.json").exists()
        assert not (tmp_path / "cost_gd.csv").exists()

    def test_sine_probe_sampling(self, tmp_path):
        cfg = default_config("sine", seed=4)
        cfg.methods = ("fs",)
        cfg.probe_count = 50
        report = run_experiment(cfg)
        assert report.probe_inputs.shape == (50, 1)
        assert np.all(np.abs(report.probe_inputs) <= np.pi / 2)
        # same probe points on a rerun
        again = run_experiment(cfg)
        assert report.probe_inputs.tobytes() == again.probe_inputs.tobytes()


class TestClassifyAccuracy:
    def test_constant_output_sweeps_one_class(self):
        spec = NetworkSpec(2, (LayerSpec(3, SIG),))
        # zero weights, biases push outputs to (1, 0, 0)
        theta = np.zeros((3, 3))
        theta[2] = [40.0, -40.0, -40.0]
        rng = np.random.default_rng(61)
        val = Dataset.from_pairs(
            [(rng.standard_normal(2), np.eye(3)[i % 3]) for i in range(30)]
        )
        counts = classify_accuracy(spec, [theta], val)
        assert counts[0] == (10, 10)
        assert counts[1] == (0, 10)
        assert counts[2] == (0, 10)

    def test_perfect_predictions(self):
        # Identity passthrough over one-hot inputs classifies everything.
        spec = NetworkSpec(3, (LayerSpec(3, LIN),))
        theta = np.vstack([np.eye(3), np.zeros(3)])
        val = Dataset.from_pairs([(np.eye(3)[i], np.eye(3)[i]) for i in range(3)])
        counts = classify_accuracy(spec, [theta], val)
        assert counts == [(1, 1), (1, 1), (1, 1)]

    def test_random_nets_near_chance(self):
        rng = np.random.default_rng(62)
        spec = NetworkSpec(4, (LayerSpec(4, SIG), LayerSpec(3, SIG)))
        val = Dataset.from_pairs(
            [(rng.standard_normal(4), np.eye(3)[i % 3]) for i in range(90)]
        )
        rates = []
        for _ in range(40):
            gains = random_gains(spec, rng)
            counts = classify_accuracy(spec, gains, val)
            rates.append(sum(c for c, _ in counts) / 90.0)
        assert 0.22 < np.mean(rates) < 0.45

    def test_needs_multiclass_targets(self):
        spec = NetworkSpec(2, (LayerSpec(1, SIG),))
        val = Dataset.from_pairs([(np.zeros(2), [1.0])])
        with pytest.raises(ValueError):
            classify_accuracy(spec, random_gains(spec, np.random.default_rng(0)), val)


class TestGradcheck:
    def test_affine_model_is_roundoff_clean(self):
        # Central differences are exact on a quadratic cost, so a wide step
        # suppresses the roundoff in the difference quotient.
        spec = NetworkSpec(3, (LayerSpec(2, LIN),))
        report = gradcheck(spec, seed=0, trials=3, h=1e-4)
        assert report.max_rel_error < 1e-9

    def test_random_sigmoid_architectures_pass(self):
        report = gradcheck_random(seed=0, trials=5)
        assert report.passed

    def test_relu_spec_passes_with_resampling(self):
        spec = NetworkSpec(
            3, (LayerSpec(4, Activation.RELU), LayerSpec(2, SIG)), final_linear=2
        )
        report = gradcheck(spec, seed=1, trials=5)
        assert report.passed
        assert all(t.resamples >= 0 for t in report.trials)

    def test_trial_count_validated(self):
        spec = NetworkSpec(2, (LayerSpec(2, SIG),))
        with pytest.raises(ValueError):
            gradcheck(spec, seed=0, trials=0)


class TestCli:
    def test_experiment_subcommand(self, tmp_path, capsys):
        code = cli_main(
            ["experiment", "xor", "--seed", "5", "--methods", "fs",
             "--out", str(tmp_path)]
        )
        assert code == 0
        assert (tmp_path / "cost_fs.csv").exists()
        assert "fs:" in capsys.readouterr().out

    def test_unknown_method_is_config_error(self, capsys):
        assert cli_main(["experiment", "xor", "--methods", "adam"]) == 1

    def test_mnist_without_paths_is_config_error(self, capsys):
        assert cli_main(["experiment", "mnist"]) == 1

    def test_train_from_config_file(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({
            "name": "xor",
            "seed": 5,
            "methods": ["fs"],
            "rsm": {"ensemble_size": 4, "epochs": 2},
        }))
        code = cli_main(["train", str(cfg_path), "--out", str(tmp_path / "run")])
        assert code == 0
        assert (tmp_path / "run" / "cost_fs.csv").exists()

    def test_train_from_metadata_reproduces(self, tmp_path):
        out1 = tmp_path / "a"
        assert cli_main(
            ["experiment", "xor", "--seed", "5", "--methods", "fs",
             "--out", str(out1)]
        ) == 0
        out2 = tmp_path / "b"
        assert cli_main(
            ["train", str(out1 / "metadata.json"), "--out", str(out2)]
        ) == 0
        assert (out2 / "cost_fs.csv").read_bytes() == (out1 / "cost_fs.csv").read_bytes()

    def test_gradcheck_subcommand(self, capsys):
        assert cli_main(["gradcheck", "--trials", "3", "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out

    def test_mnist_cli_with_fixture_files(self, tmp_path, capsys):
        import synth_digits

        tr_img, tr_lab = synth_digits.synth_digit_set(3, seed=11)
        va_img, va_lab = synth_digits.synth_digit_set(4, seed=12)
        paths = {}
        for name, (imgs, labs) in {
            "train": (tr_img, tr_lab), "val": (va_img, va_lab)
        }.items():
            ipath = tmp_path / f"{name}_img.idx"
            lpath = tmp_path / f"{name}_lab.idx"
            write_idx_images(ipath, imgs)
            write_idx_labels(lpath, labs)
            paths[name] = (str(ipath), str(lpath))
        cfg_path = tmp_path / "mnist_small.json"
        cfg_path.write_text(json.dumps({
            "name": "mnist",
            "seed": 7,
            "methods": ["gd"],
            "gd": {"learning_rate": 0.7, "epochs": 2},
            "mnist_images": paths["train"][0],
            "mnist_labels": paths["train"][1],
            "mnist_val_images": paths["val"][0],
            "mnist_val_labels": paths["val"][1],
            "mnist_per_class": 3,
            "mnist_val_per_class": 4,
        }))
        code = cli_main(["train", str(cfg_path), "--out", str(tmp_path / "run")])
        assert code == 0
        out = capsys.readouterr().out
        assert "validation" in out
        meta = json.loads((tmp_path / "run" / "metadata.json").read_text())
        counts = meta["validation_counts"]["gd"]
        assert sum(t for _, t in counts) == 12
