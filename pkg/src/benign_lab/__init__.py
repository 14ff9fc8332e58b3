"""Benign overfitting in two-layer leaky networks trained by gradient descent
on noisy Gaussian mixtures: data, model, trainer, diagnostics and harness."""

from .errors import (ConfigurationError, DimensionError, DivergenceError, NonFiniteError,
                     OracleTooLarge)
from .mixture_data import (ClusterLaw, Dataset, MixtureSpec, NoisePolicy, check_sample_facts,
                           corrupt_labels, fresh_test_batch, load_dataset, sample_clean,
                           save_dataset)
from .shallow_net import (ActivationSpec, NetParams, forward, grad_wrt_weights, init_params,
                          load_params, save_params, slrelu, slrelu_prime, slrelu_second)
from .objective import (LossSnapshot, gradient_coefficients, logistic_loss, loss_gradient,
                        loss_snapshot, margins, surrogate_g)
from .gd_trainer import (Engine, StopRule, TrainConfig, Trajectory, required_iterations,
                         step, theory_hyperparameters, train)
from .assumption_gate import AssumptionReport, check_assumptions, implied_caps

__version__ = "0.1.0"
