"""Learning-trajectory transfer for small MLPs via permutation symmetry."""

from .align import AlignOptions, gradient_matching, solve_lap_max, weight_matching
from .data import BatchSampler, Dataset, parse_idx, split_train_val, synth_blobs
from .landscape import barrier, drift_diagnostic, linear_path_scan, plane_scan
from .nn import Architecture, NumericError, Params, axpy, dot, forward, init_params, l2_dist, loss_and_grad
from .optim import SGDConfig, Trajectory, cosine_lr, evaluate, resume_train, sgd_step, train
from .permsym import Permutation, apply_to_delta, apply_to_params, compose, hamming, identity, invert, random_perm
from .transfer import (TransferResult, fgmt, gmt, linear_trajectory, make_linear_trajectory, naive_transfer,
                       oracle_transfer, transfer_step)

__version__ = "0.1.0"
