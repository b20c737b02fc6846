"""Matrix-free second-order sequence training on a synthetic lattice task.

The package pairs two curvature approximations (gradient outer products
and a linearized Gauss-Newton form) through truncated conjugate-gradient
solves, and benchmarks the composite update against plain gradient,
natural-gradient, and curvature-only baselines on a small
sequence-labelling world with lattice supervision.
"""

from ._kernels import BACKEND as kernel_backend
from .curvature import CurvatureOperator, EigenReport
from .harness import ExperimentConfig, run_experiment
from .lattice import Lattice, PosteriorField, forward_backward
from .network import NetworkSpec, forward, init_network
from .optimizers import OptimizerConfig, second_order_step, sgd_step, train
from .params import ParameterVector, load_checkpoint, save_checkpoint
from .solver import CGConfig, NumericalError, cg_solve, compute_nghf_update
from .task import SequenceProblem, WorldModel, generate_corpus, make_world

__version__ = "0.1.0"
