"""Correlation-aware differential privacy for empirical risk minimisation."""

from .accounting import (amplify_subsampling, certify_profile, compose, mean_shift,
                         moment_bound_check, renyi_gaussian, scenario, NeighborScenario)
from .data import (Dataset, FeaturePartition, GaussianSpec, ColumnSpec, default_partition,
                   default_synthetic_spec, feature_bound, generate_synthetic, ingest_csv)
from .errors import *  # noqa: F401,F403
from .losses import LossSpec, loss_gradient, loss_value, smoothness_constants
from .mechanisms import (column_mean_query, correlated_sensitivity, laplace_accuracy_bound,
                         laplace_corrdp, laplace_standard)
from .optimizer import (FitResult, NoiseProfile, TrainConfig, calibrate_noise, corrdp_sgd,
                        reference_solution, utility_gap)
from .rng import RandomState
from .tv import (TVKind, TVProfile, build_tv_profile, confidence_adjust, tv_exact,
                 tv_posterior_gaussian)

__version__ = "0.1.0"
