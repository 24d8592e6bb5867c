"""Experiment front-end: named experiment defaults, JSON configuration,
method comparison, CSV/metadata emission, and the gradient-check report.

Output files per run directory:
  cost_<method>.csv    epoch,cost,wall_ms (wall_ms is written as 0 unless
                       timing is explicitly enabled; measured timings go to
                       metadata.json so the CSVs stay byte-reproducible)
  gains_<method>.csv   epoch,param_index,value in flattened gain order
  predictions.csv      probe inputs, targets, one output block per method
  metadata.json        resolved config, derived seeds, results, timings
"""

from __future__ import annotations

import concurrent.futures
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .data import Dataset, mnist_load, mnist_subset, sine_dataset, xor_dataset
from .gradient import cost_gradient, finite_difference_gradient, gradient_consistency
from .network import Activation, LayerSpec, NetworkSpec, forward, random_gains
from .train import (
    GdConfig,
    RootFindConfig,
    RsmConfig,
    TrainTrace,
    flatten_gains,
    train_gd,
    train_rootfind,
    train_rsm,
)

METHOD_KEYS = ("gd", "fs", "rsm")

# Default seeds shipped with each experiment (shared by every method so the
# comparison starts from one init).
DEFAULT_SEEDS = {"xor": 103, "sine": 3, "mnist": 7, "custom": 0}

GRADCHECK_THRESHOLD = 1e-5
RELU_PIN_TOL = 1e-3


class ConfigError(ValueError):
    """An experiment configuration is invalid or incomplete."""


@dataclass
class ExperimentConfig:
    name: str
    spec: NetworkSpec
    methods: tuple[str, ...]
    seed: int
    gd: GdConfig
    rsm: RsmConfig
    rootfind: RootFindConfig
    out_dir: str | None = None
    sine_count: int = 100
    probe_count: int = 1000
    mnist_images: str | None = None
    mnist_labels: str | None = None
    mnist_val_images: str | None = None
    mnist_val_labels: str | None = None
    mnist_classes: tuple[int, ...] = (0, 1, 2)
    mnist_per_class: int = 10
    mnist_val_per_class: int = 100
    record_gains: bool = True
    concurrent: bool = False


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    derived_seeds: dict
    init_gains: list[np.ndarray]
    traces: dict[str, TrainTrace] = field(default_factory=dict)
    probe_inputs: np.ndarray | None = None
    probe_targets: np.ndarray | None = None
    predictions: dict[str, np.ndarray] = field(default_factory=dict)
    class_counts: dict[str, list[tuple[int, int]]] | None = None


def derived_seeds(seed: int) -> dict:
    """Per-purpose seeds derived from the experiment seed."""
    init, rsm, probe = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
    return {"init": init, "rsm": rsm, "probe": probe}


def default_config(name: str, seed: int | None = None, out_dir: str | None = None,
                   methods=None) -> ExperimentConfig:
    """Experiment defaults matching the reference settings for each example."""
    if name not in ("xor", "sine", "mnist"):
        raise ConfigError(f"no defaults for experiment {name!r}")
    if seed is None:
        seed = DEFAULT_SEEDS[name]
    rsm_seed = derived_seeds(seed)["rsm"]
    if name == "xor":
        spec = NetworkSpec(2, (LayerSpec(2, Activation.SIGMOID),), final_linear=1)
        gd = GdConfig(learning_rate=5.0, epochs=50)
        rsm = RsmConfig(ensemble_size=50, radius=1.0, epochs=50, seed=rsm_seed)
        record = True
    elif name == "sine":
        # The two single-neuron layers: sigmoid then linear. A second sigmoid
        # could not produce the negative half of the sine values.
        spec = NetworkSpec(
            1, (LayerSpec(1, Activation.SIGMOID), LayerSpec(1, Activation.LINEAR))
        )
        gd = GdConfig(learning_rate=0.01, epochs=50)
        rsm = RsmConfig(ensemble_size=500, radius=1.0, epochs=50, seed=rsm_seed)
        record = True
    else:
        spec = NetworkSpec(
            784, (LayerSpec(30, Activation.RELU), LayerSpec(3, Activation.SIGMOID))
        )
        gd = GdConfig(learning_rate=0.7, epochs=50)
        rsm = RsmConfig(ensemble_size=5000, radius=1.0, epochs=50, seed=rsm_seed)
        record = False
    cfg = ExperimentConfig(
        name=name,
        spec=spec,
        methods=tuple(methods) if methods else ("gd", "fs", "rsm"),
        seed=seed,
        gd=gd,
        rsm=rsm,
        rootfind=RootFindConfig(max_iterations=50),
        out_dir=out_dir,
        record_gains=record,
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig, require_data: bool = False) -> None:
    """Structural checks; with require_data also demand the data files that
    the experiment will read (deferred so paths can be supplied after the
    config is built, e.g. by CLI flags)."""
    if not cfg.methods:
        raise ConfigError("at least one method must be selected")
    for m in cfg.methods:
        if m not in METHOD_KEYS:
            raise ConfigError(f"unknown method {m!r}, expected one of {METHOD_KEYS}")
    if len(set(cfg.methods)) != len(cfg.methods):
        raise ConfigError(f"duplicate methods in {cfg.methods}")
    if cfg.seed is None:
        raise ConfigError("an experiment seed is required")
    if require_data and cfg.name == "mnist":
        for attr in ("mnist_images", "mnist_labels", "mnist_val_images",
                     "mnist_val_labels"):
            if getattr(cfg, attr) is None:
                raise ConfigError(f"mnist experiment needs {attr}")


def spec_to_dict(spec: NetworkSpec) -> dict:
    return {
        "input_width": spec.input_width,
        "layers": [
            {"width": l.width, "activation": l.activation.value} for l in spec.layers
        ],
        "final_linear": spec.final_linear,
    }


def spec_from_dict(d: dict) -> NetworkSpec:
    try:
        layers = tuple(
            LayerSpec(int(l["width"]), Activation(l["activation"]))
            for l in d["layers"]
        )
        final = d.get("final_linear")
        return NetworkSpec(
            int(d["input_width"]),
            layers,
            None if final is None else int(final),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad network spec: {exc}") from exc


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "name": cfg.name,
        "spec": spec_to_dict(cfg.spec),
        "methods": list(cfg.methods),
        "seed": cfg.seed,
        "gd": {"learning_rate": cfg.gd.learning_rate, "epochs": cfg.gd.epochs},
        "rsm": {
            "ensemble_size": cfg.rsm.ensemble_size,
            "radius": cfg.rsm.radius,
            "epochs": cfg.rsm.epochs,
            "elitism": cfg.rsm.elitism,
            "seed": cfg.rsm.seed,
        },
        "rootfind": {
            "max_iterations": cfg.rootfind.max_iterations,
            "function_tol": cfg.rootfind.function_tol,
            "step_tol": cfg.rootfind.step_tol,
            "initial_damping": cfg.rootfind.initial_damping,
            "damping_up": cfg.rootfind.damping_up,
            "damping_down": cfg.rootfind.damping_down,
        },
        "out_dir": cfg.out_dir,
        "sine_count": cfg.sine_count,
        "probe_count": cfg.probe_count,
        "mnist_images": cfg.mnist_images,
        "mnist_labels": cfg.mnist_labels,
        "mnist_val_images": cfg.mnist_val_images,
        "mnist_val_labels": cfg.mnist_val_labels,
        "mnist_classes": list(cfg.mnist_classes),
        "mnist_per_class": cfg.mnist_per_class,
        "mnist_val_per_class": cfg.mnist_val_per_class,
        "record_gains": cfg.record_gains,
        "concurrent": cfg.concurrent,
    }


def config_from_dict(d: dict) -> ExperimentConfig:
    """Build a config from a JSON document; missing sections fall back to the
    named experiment's defaults."""
    try:
        name = d["name"]
    except KeyError as exc:
        raise ConfigError("config needs a 'name'") from exc
    if name in ("xor", "sine", "mnist"):
        base = default_config(name, seed=d.get("seed"))
    elif name == "custom":
        if "spec" not in d or "seed" not in d:
            raise ConfigError("custom experiments need 'spec' and 'seed'")
        rsm_seed = derived_seeds(int(d["seed"]))["rsm"]
        base = ExperimentConfig(
            name="custom",
            spec=spec_from_dict(d["spec"]),
            methods=("gd", "fs", "rsm"),
            seed=int(d["seed"]),
            gd=GdConfig(0.1, 50),
            rsm=RsmConfig(50, 1.0, 50, seed=rsm_seed),
            rootfind=RootFindConfig(max_iterations=50),
        )
    else:
        raise ConfigError(f"unknown experiment name {name!r}")
    if "spec" in d:
        base.spec = spec_from_dict(d["spec"])
    if "methods" in d:
        base.methods = tuple(d["methods"])
    if "gd" in d:
        g = d["gd"]
        base.gd = GdConfig(
            float(g.get("learning_rate", base.gd.learning_rate)),
            int(g.get("epochs", base.gd.epochs)),
        )
    if "rsm" in d:
        r = d["rsm"]
        base.rsm = RsmConfig(
            int(r.get("ensemble_size", base.rsm.ensemble_size)),
            float(r.get("radius", base.rsm.radius)),
            int(r.get("epochs", base.rsm.epochs)),
            bool(r.get("elitism", base.rsm.elitism)),
            int(r.get("seed", base.rsm.seed)),
        )
    if "rootfind" in d:
        f = d["rootfind"]
        base.rootfind = RootFindConfig(
            int(f.get("max_iterations", base.rootfind.max_iterations)),
            float(f.get("function_tol", base.rootfind.function_tol)),
            float(f.get("step_tol", base.rootfind.step_tol)),
            float(f.get("initial_damping", base.rootfind.initial_damping)),
            float(f.get("damping_up", base.rootfind.damping_up)),
            float(f.get("damping_down", base.rootfind.damping_down)),
        )
    for key in (
        "out_dir", "sine_count", "probe_count", "mnist_images", "mnist_labels",
        "mnist_val_images", "mnist_val_labels", "mnist_per_class",
        "mnist_val_per_class", "record_gains", "concurrent",
    ):
        if key in d and d[key] is not None:
            setattr(base, key, d[key])
    if "mnist_classes" in d:
        base.mnist_classes = tuple(int(c) for c in d["mnist_classes"])
    validate_config(base)
    return base


def load_config(path) -> ExperimentConfig:
    """Read a config JSON file; a metadata.json from a previous run (with the
    config under a 'config' key) is accepted too."""
    with open(path) as f:
        d = json.load(f)
    if "config" in d and isinstance(d["config"], dict):
        d = d["config"]
    return config_from_dict(d)


def _build_datasets(cfg: ExperimentConfig):
    """Returns (training dataset, validation dataset or None)."""
    source = cfg.name if cfg.name != "custom" else "xor"
    if source == "xor":
        return xor_dataset(), None
    if source == "sine":
        return sine_dataset(cfg.sine_count), None
    train_set = mnist_subset(
        mnist_load(cfg.mnist_images, cfg.mnist_labels),
        cfg.mnist_classes,
        cfg.mnist_per_class,
    )
    val_set = mnist_subset(
        mnist_load(cfg.mnist_val_images, cfg.mnist_val_labels),
        cfg.mnist_classes,
        cfg.mnist_val_per_class,
    )
    return train_set, val_set


def _build_probes(cfg: ExperimentConfig, dataset: Dataset, validation, probe_seed):
    if cfg.name == "sine":
        rng = np.random.default_rng(probe_seed)
        xs = rng.uniform(-np.pi / 2.0, np.pi / 2.0, cfg.probe_count)
        return xs[:, None], np.sin(xs)[:, None]
    if validation is not None:
        return validation.inputs, validation.targets
    return dataset.inputs, dataset.targets


def _run_method(key, cfg, dataset, init_gains):
    gains = [theta.copy() for theta in init_gains]
    if key == "gd":
        return train_gd(cfg.spec, gains, dataset, cfg.gd, cfg.record_gains)
    if key == "fs":
        return train_rootfind(cfg.spec, gains, dataset, cfg.rootfind, cfg.record_gains)
    return train_rsm(cfg.spec, gains, dataset, cfg.rsm, cfg.record_gains)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Build data and a shared seeded init, run every selected method,
    evaluate probe predictions, and write the output files."""
    validate_config(cfg, require_data=True)
    seeds = derived_seeds(cfg.seed)
    dataset, validation = _build_datasets(cfg)
    init_gains = random_gains(cfg.spec, np.random.default_rng(seeds["init"]))
    report = ExperimentReport(cfg, seeds, init_gains)
    error = None
    try:
        if cfg.concurrent and len(cfg.methods) > 1:
            with concurrent.futures.ThreadPoolExecutor(len(cfg.methods)) as pool:
                futures = {
                    key: pool.submit(_run_method, key, cfg, dataset, init_gains)
                    for key in cfg.methods
                }
                for key in cfg.methods:
                    report.traces[key] = futures[key].result()
        else:
            for key in cfg.methods:
                report.traces[key] = _run_method(key, cfg, dataset, init_gains)
    except Exception as exc:
        error = exc
    report.probe_inputs, report.probe_targets = _build_probes(
        cfg, dataset, validation, seeds["probe"]
    )
    for key, trace in report.traces.items():
        report.predictions[key] = np.array(
            [forward(cfg.spec, trace.gains, x).output for x in report.probe_inputs]
        )
    if validation is not None and report.traces:
        report.class_counts = {
            key: classify_accuracy(cfg.spec, trace.gains, validation)
            for key, trace in report.traces.items()
        }
    if cfg.out_dir:
        write_csv(report, cfg.out_dir)
    if error is not None:
        raise error
    return report


def classify_accuracy(spec: NetworkSpec, gains, validation: Dataset):
    """Correct/total counts per class position; the prediction is the argmax
    of the network output (ties go to the lowest index)."""
    if validation.target_width < 2:
        raise ValueError("classification needs a one-hot target width >= 2")
    counts = [[0, 0] for _ in range(validation.target_width)]
    for x, y in validation:
        truth = int(np.argmax(y))
        guess = int(np.argmax(forward(spec, gains, x).output))
        counts[truth][1] += 1
        if guess == truth:
            counts[truth][0] += 1
    return [tuple(c) for c in counts]


@dataclass
class GradcheckTrial:
    trial: int
    max_rel_error: float
    resamples: int


@dataclass
class GradcheckReport:
    trials: list[GradcheckTrial]
    threshold: float = GRADCHECK_THRESHOLD

    @property
    def max_rel_error(self) -> float:
        return max(t.max_rel_error for t in self.trials)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.threshold


def _relu_pinned(spec, gains, dataset) -> bool:
    # Finite differences are unreliable when a ReLU preactivation sits on
    # the kink; such draws are resampled.
    relu_layers = [
        i for i, l in enumerate(spec.layers) if l.activation is Activation.RELU
    ]
    if not relu_layers:
        return False
    for x, _ in dataset:
        trace = forward(spec, gains, x)
        for i in relu_layers:
            if np.abs(trace.preactivations[i]).min() <= RELU_PIN_TOL:
                return True
    return False


def gradcheck(spec: NetworkSpec, seed: int, trials: int, n_samples: int = 6,
              h: float = 1e-6) -> GradcheckReport:
    """Compare the closed-form cost gradient against central differences on
    random gains and data, once per trial."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    out = []
    for t in range(trials):
        dataset = Dataset.from_pairs(
            [
                (rng.standard_normal(spec.input_width),
                 rng.standard_normal(spec.output_width))
                for _ in range(n_samples)
            ]
        )
        resamples = 0
        gains = random_gains(spec, rng)
        while _relu_pinned(spec, gains, dataset) and resamples < 100:
            gains = random_gains(spec, rng)
            resamples += 1
        analytic = cost_gradient(spec, gains, dataset)
        reference = finite_difference_gradient(spec, gains, dataset, h=h)
        out.append(GradcheckTrial(t, gradient_consistency(analytic, reference),
                                  resamples))
    return GradcheckReport(out)


def random_sigmoid_spec(rng: np.random.Generator) -> NetworkSpec:
    """Random small architecture: 1-3 sigmoid layers of width <= 5, input
    width <= 4, and a trailing linear map to <= 3 outputs."""
    n_layers = int(rng.integers(1, 4))
    layers = tuple(
        LayerSpec(int(rng.integers(1, 6)), Activation.SIGMOID)
        for _ in range(n_layers)
    )
    return NetworkSpec(
        int(rng.integers(1, 5)), layers, final_linear=int(rng.integers(1, 4))
    )


def gradcheck_random(seed: int, trials: int) -> GradcheckReport:
    """gradcheck over freshly drawn random small sigmoid architectures,
    one per trial."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(trials):
        spec = random_sigmoid_spec(rng)
        sub = gradcheck(spec, int(rng.integers(2**32)), 1)
        out.append(GradcheckTrial(t, sub.trials[0].max_rel_error,
                                  sub.trials[0].resamples))
    return GradcheckReport(out)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(report: ExperimentReport, out_dir, include_timing: bool = False):
    """Write every output file for the report; returns the paths written.

    With include_timing=False (the default) the wall_ms column is written as
    0 so repeated runs with one seed produce byte-identical CSVs; measured
    timings are always available in metadata.json.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    for key, trace in report.traces.items():
        path = os.path.join(out_dir, f"cost_{key}.csv")
        with open(path, "w", newline="") as f:
            f.write("epoch,cost,wall_ms\n")
            for rec in trace.records:
                wall = rec.wall_ms if include_timing else 0.0
                f.write(f"{rec.epoch},{_fmt(rec.cost)},{_fmt(wall)}\n")
        written.append(path)

        path = os.path.join(out_dir, f"gains_{key}.csv")
        with open(path, "w", newline="") as f:
            f.write("epoch,param_index,value\n")
            if trace.snapshots is not None:
                rows = zip((r.epoch for r in trace.records), trace.snapshots)
            else:
                rows = [(trace.records[-1].epoch, flatten_gains(trace.gains))]
            for epoch, snap in rows:
                for p, v in enumerate(snap):
                    f.write(f"{epoch},{p},{_fmt(v)}\n")
        written.append(path)

    if report.probe_inputs is not None:
        path = os.path.join(out_dir, "predictions.csv")
        d_in = report.probe_inputs.shape[1]
        d_out = report.probe_targets.shape[1]
        header = [f"x_{i}" for i in range(d_in)] + [f"y_{i}" for i in range(d_out)]
        for key in report.traces:
            header += [f"{key}_{i}" for i in range(d_out)]
        with open(path, "w", newline="") as f:
            f.write(",".join(header) + "\n")
            for row in range(report.probe_inputs.shape[0]):
                cells = [_fmt(v) for v in report.probe_inputs[row]]
                cells += [_fmt(v) for v in report.probe_targets[row]]
                for key in report.traces:
                    cells += [_fmt(v) for v in report.predictions[key][row]]
                f.write(",".join(cells) + "\n")
        written.append(path)

    meta = {
        "version": __version__,
        "config": config_to_dict(report.config),
        "derived_seeds": report.derived_seeds,
        "results": {
            key: {
                "status": trace.status,
                "epochs_recorded": len(trace.records) - 1,
                "final_cost": trace.records[-1].cost,
            }
            for key, trace in report.traces.items()
        },
        "timings_ms": {
            key: sum(r.wall_ms for r in trace.records)
            for key, trace in report.traces.items()
        },
    }
    if report.class_counts is not None:
        meta["validation_counts"] = {
            key: [list(c) for c in counts]
            for key, counts in report.class_counts.items()
        }
    path = os.path.join(out_dir, "metadata.json")
    with open(path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    written.append(path)
    return written
