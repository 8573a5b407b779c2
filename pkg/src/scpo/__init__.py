"""Surrogate conformal predictor optimization (SCPO) for classification.

Train a linear conformity measure by gradient descent on a smooth
approximation of inductive-conformal-predictor inefficiency, then use it in
a proper ICP with valid prediction sets.
"""

from .baseline import ProbModel, baseline_icp, train_multinomial
from .conformity import (LinearConformity, ProbConformity, flatten_theta,
                         linear_score_grad, linear_scores, prob_scores,
                         unflatten_theta)
from .data import (Dataset, DataError, Normalizer, SplitSpec, add_intercept,
                   apply_normalizer, fit_normalizer, impute_means, load_csv,
                   prepare, split)
from .icp import (CalibrationScores, IcpModel, calibrate, calibration_quantile,
                  coverage, prediction_set)
from .metrics import (IDENTITY, LOG1P, EvalReport, InefficiencyMeasure,
                      binomial_compare, change_in_inefficiency, evaluate_icp,
                      inefficiency)
from .search import (GridSpec, TrainedCandidate, gradient_descent, grid_search,
                     run_grid, select_best, training_icp_score)
from .surrogate import Hyperparams, SurrogateEval, evaluate, sigmoid, transform_loss

__version__ = "0.1.0"
