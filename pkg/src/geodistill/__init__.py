"""
Dataset distillation by distribution matching in a learnable product of
Euclidean, hyperbolic and spherical factors.
"""

from .data import (LabeledSet, MixedSpec, gen_circle, gen_flat, gen_mixed, gen_tree, load_csv, save_csv,
                   train_test_split)
from .distill import DistillConfig, DistillReport, init_synthetic, run_distill
from .encoder import EncoderParams, encode, sample_encoders
from .evaluation import EvalResult, compare_geometries, eval_logreg, eval_ncm
from .manifolds import Factor, FactorKind, FactorPoint, TangentVector, exp_map, factor_distance, log_map
from .matching import MatchObjective, dm_loss, dm_loss_grad
from .product_space import GeometryParams, ProductPoint, product_distance_sq
from .transport import exact_ot_small, ot_loss_grad, sinkhorn

__version__ = "0.1.0"
