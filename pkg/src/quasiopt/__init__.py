"""Offline reinforcement learning with bounded-support quadratic-value
policies, a kernel-embedded U-statistic loss, and a discretized-action
reference oracle."""

__version__ = "0.1.0"

from .data import (Dataset, DatasetError, Standardizer, Trajectory, Transition,
                   fit_standardizer, load_dataset, sample_minibatch,
                   save_dataset)
from .envs import EnvSpec, env_reset, env_step, generate_dataset
from .evaluate import (CvReport, EvalReport, cross_validate_mu, cv_criterion,
                       evaluate_policy, mc_rollout, sensitivity_sweep)
from .grid import (GridMDP, GridPolicy, apply_bmu, fixed_point, hard_bellman,
                   oracle_check, q_from_v, random_mdp, stationarity_residual,
                   support_and_policy)
from .kernel import (GradientResult, KernelConfig, LossValue, gaussian_kernel,
                     lambda_term, loss_gradient, median_heuristic_bandwidth,
                     u_statistic_loss)
from .model import (BasisSpec, ModelConfig, ModelError, ModelParams,
                    basis_eval, eta, load_model, peak_density, policy_density,
                    prox_circ, q_coeffs, radial_grid_basis, sample_action,
                    save_model, support, value, varpi)
from .train import (TrainConfig, TrainError, TrainReport, init_search,
                    sgd_train, train_full, value_bound)
