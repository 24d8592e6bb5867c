"""Matrix-form feedforward networks: closed-form backpropagation and three
trainers (gradient descent, damped least-squares root finding, and ensemble
random search), with reproducible desk-scale experiments."""

__version__ = "0.1.0"

from .linalg import (
    ShapeError,
    SolveFailure,
    augment,
    diag,
    matmul,
    selector,
    solve,
    transpose,
)
from .network import (
    Activation,
    ForwardTrace,
    LayerSpec,
    NetworkSpec,
    activation_deriv,
    activation_eval,
    forward,
    layer_eval,
    neuron_eval,
    predict,
    random_gains,
)
from .gradient import (
    cost,
    cost_gradient,
    finite_difference_gradient,
    lambda_matrix,
    layer_jacobian_input,
    layer_jacobian_theta,
    network_param_gradient,
)
from .data import (
    Dataset,
    IdxFormatError,
    MnistSet,
    mnist_load,
    mnist_subset,
    sine_dataset,
    xor_dataset,
)
from .train import (
    GdConfig,
    RootFindConfig,
    RsmConfig,
    TrainTrace,
    TrainingError,
    flatten_gains,
    gd_step,
    residual_jacobian,
    residual_vector,
    rsm_step,
    train_gd,
    train_rootfind,
    train_rsm,
    unflatten_gains,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    ExperimentReport,
    classify_accuracy,
    config_from_dict,
    config_to_dict,
    default_config,
    gradcheck,
    gradcheck_random,
    load_config,
    run_experiment,
    write_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
