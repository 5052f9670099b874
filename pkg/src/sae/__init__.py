"""Semi-supervised autoencoder with a distance-structured latent space.

Training alternates two steps per epoch: place per-class latent targets by
stress majorization against a prescribed inter-class distance matrix (rotated
onto the current latents), then run mini-batch gradient descent on a weighted
sum of reconstruction and latent-target losses. On top of the structured
latent space sit a linear max-margin classifier with normalized scores, a
margin-based guided-labeling loop, and class-center morphing.
"""

from .align import AlignmentResult, ideal_rotation, pinv, place_targets
from .data import (
    Dataset,
    Decomposition,
    Sample,
    apply_decomposition,
    identity_decomposition,
    load_csv,
    load_idx,
    split_labeled,
)
from .mds import (
    CenterConfiguration,
    DistanceSpec,
    StressReport,
    per_sample_targets,
    smacof_solve,
    stress,
    uniform_distance_spec,
)
from .model import (
    MlpSpec,
    SaeModel,
    decode,
    encode,
    init_model,
    loss_ae,
    loss_combined,
    loss_structural,
    gradients,
)
from .svm import SvmModel, calibration_curve, normalized_score, predict, score_histogram, svm_fit
from .active import UncertaintyRanking, guided_round, margin, rank_unlabeled, select_batch
from .morphing import MorphTrack, class_centers, deformation_vector, morph, morph_track
from .training import EpochMetrics, TrainConfig, train

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
