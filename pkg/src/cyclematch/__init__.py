"""cyclematch: cycle-consistent multi-image matching via graph embeddings.

A correspondence graph over features from several images is embedded by a
graph convolutional network so that inner products of node embeddings
reproduce a cycle-consistent version of the noisy pairwise matches. The
package also carries spectral, alternating-least-squares, and projected
gradient doubly stochastic baselines, synthetic graph and scene generators,
an epipolar geometric training prior, and a benchmarking CLI.
"""

from .baselines import (SoftMatchMatrix, matchals, pgdds, sinkhorn_project,
                        spectral, topk_eig)
from .errors import (ConvergenceFailure, CycleMatchError, DegenerateBaseline,
                     DimensionMismatch, FormatError, NonFiniteLoss,
                     SinkhornNoConverge, SingularSystem, SpecError,
                     StaleCache, UnknownKey, ZeroDegreeNode)
from .geometry import (GeometricPrior, Pose, build_prior, epipolar_residual,
                       skew)
from .graph import (CorrespondenceGraph, augmented_operator, degree,
                    load_graph, normalized_laplacian, save_adjacency,
                    save_graph)
from .losses import LossConfig, combined_loss, cycle_loss, geometric_loss
from .metrics import (ErrorReport, SimilarityStats, compare_scores,
                      embedding_similarity, error_report, procrustes_align,
                      similarity_stats, time_method, time_stats,
                      zero_diagonal)
from .nn import (AdamState, GcnModel, adam_step, init_adam, init_model,
                 load_model, model_backward, model_forward, save_model)
from .synthgen import (GroundTruth, MultiViewScene, SynthGraphSpec,
                       derive_seed, gen_graph, gen_scene, load_ground_truth,
                       load_scene, make_rng, save_ground_truth, save_scene)
from .train import TrainConfig, TrainResult, ablate, gradcheck, train

__version__ = "0.1.0"

__all__ = [
    "AdamState", "ConvergenceFailure", "CorrespondenceGraph",
    "CycleMatchError", "DegenerateBaseline", "DimensionMismatch",
    "ErrorReport", "FormatError", "GcnModel", "GeometricPrior",
    "GroundTruth", "LossConfig", "MultiViewScene", "NonFiniteLoss", "Pose",
    "SimilarityStats", "SinkhornNoConverge", "SingularSystem",
    "SoftMatchMatrix", "SpecError", "StaleCache", "SynthGraphSpec",
    "TrainConfig", "TrainResult", "UnknownKey", "ZeroDegreeNode",
    "ablate", "adam_step", "augmented_operator", "build_prior",
    "combined_loss", "compare_scores", "cycle_loss", "degree",
    "derive_seed", "embedding_similarity", "epipolar_residual",
    "error_report", "gen_graph", "gen_scene", "geometric_loss", "gradcheck",
    "init_adam", "init_model", "load_graph", "load_ground_truth",
    "load_model", "load_scene", "make_rng", "matchals", "model_backward",
    "model_forward", "normalized_laplacian", "pgdds", "procrustes_align",
    "save_adjacency", "save_graph", "save_ground_truth", "save_model",
    "save_scene", "similarity_stats", "sinkhorn_project", "skew",
    "spectral", "time_method", "time_stats", "topk_eig", "train",
    "zero_diagonal",
]
