"""graspkit: semi-supervised top-down grasping at desk scale.

Train a teacher grasp scorer from a small labeled set, distill it into a
student via pseudo-labels on unlabeled scenes, and evaluate both against
an affordance proxy and a deterministic planar grasping simulator.
"""

from .geometry import (
    DESK_WORKSPACE,
    NATIVE_WORKSPACE,
    AngleGrid,
    Grasp,
    GraspRecord,
    Heightmap,
    RotatedPoint,
    WorkspaceGeometry,
    circular_distance,
    distant_angle,
    normalize_depth,
    rotate_map,
    rotate_point,
    workspace_for,
)
from .model import (
    AffordanceVolume,
    DenseModel,
    DenseModelConfig,
    DenseScoreMap,
    affordance_volume,
    forward,
    forward_pair,
    load_checkpoint,
    output_entropy,
    save_checkpoint,
    score,
    softmax3d,
)
from .training import (
    EpochLog,
    EpochStats,
    TrainConfig,
    balanced_accuracy,
    balanced_resample,
    bce_at_pixel,
    cosine_lr,
    train_affordance,
    train_student,
    train_teacher,
)
from .pseudolabel import (
    PseudoLabelConfig,
    ScoredGrasp,
    best_grasp,
    generate_pseudo_labels,
    sample_angles,
    top_n_grasps,
)
from .evaluation import (
    EvalReport,
    alternating_eval,
    ema,
    evaluate_in_sim,
    model_policy,
    proxy_success,
    wilson_interval,
)
from .datastore import (
    Dataset,
    content_hash,
    load_dataset,
    load_scene,
    save_dataset,
    save_scene,
    split_by_scene,
    subsample_labeled,
)
from . import sim

__version__ = "0.1.0"
