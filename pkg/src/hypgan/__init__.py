"""Hyperbolic GANs on the Poincare ball, built on a small numpy autodiff engine."""
from .autodiff import DomainError, GraphError, NonFiniteError, Tensor, enable_grad, grad, no_grad
from .estimators import HyperbolicGAN, PoincareBallEmbedding, TrainingDiverged
from .evaluator import MnistEvaluator, train_evaluator
from .experiment import ExperimentConfig, SweepSpec, run_experiment, run_sweep
from .metrics import fid, inception_score, matrix_sqrt_psd, radius_distribution
from .networks import ArchConfig, Variant, build_discriminator, build_generator, parse_config
from .poincare import Curvature, exp_map, exp_map_zero, log_map, log_map_zero, mobius_add

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "Curvature",
    "DomainError",
    "ExperimentConfig",
    "GraphError",
    "HyperbolicGAN",
    "MnistEvaluator",
    "NonFiniteError",
    "PoincareBallEmbedding",
    "SweepSpec",
    "Tensor",
    "TrainingDiverged",
    "Variant",
    "build_discriminator",
    "build_generator",
    "enable_grad",
    "exp_map",
    "exp_map_zero",
    "fid",
    "grad",
    "inception_score",
    "log_map",
    "log_map_zero",
    "matrix_sqrt_psd",
    "mobius_add",
    "no_grad",
    "parse_config",
    "radius_distribution",
    "run_experiment",
    "run_sweep",
    "train_evaluator",
]
