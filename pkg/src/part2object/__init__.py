"""Unsupervised 3D instance segmentation by prior-guided hierarchical clustering.

Pipeline stages, each usable on its own:

  scene_io     -- load/save point clouds, frames, instance manifests
  superpoints  -- layer-0 partition by seeded voxel region growing
  features     -- cosine similarity and noise-robust feature fusion
  spatial      -- grid index, closest-pair queries, prior boxes
  objectness   -- 2D mask tracks across frames -> 3D prior boxes
  hierarchy    -- prior-guided merge rounds; object/part collection
  evaluation   -- class-agnostic instance segmentation AP
  synth        -- deterministic synthetic scenes for testing
  cli          -- the `p2o` command
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AllZeroFeatures,
    CorruptHeader,
    CorruptRLE,
    DimensionMismatch,
    EmptyCloud,
    FormatError,
    InconsistentMaskFeatureDim,
    IndexOutOfRange,
    NonFinite,
    NonOrthonormalPose,
    ZeroVector,
)
from .evaluation import ApReport, evaluate, evaluate_multi, mask_iou  # noqa: F401
from .features import cosine_sim, fuse_feature  # noqa: F401
from .hierarchy import (  # noqa: F401
    Cluster,
    Hierarchy,
    MergeParams,
    candidate_pairs,
    collect_objects,
    collect_parts,
    rank_filter,
    run_hierarchy,
    run_layer,
    stop_criteria,
)
from .objectness import (  # noqa: F401
    MatchParams,
    ObjectTrack,
    build_priors,
    build_tracks,
    match_adjacent,
    project_mask_points,
    propagate_sameness,
)
from .scene_io import (  # noqa: F401
    FrameObservation,
    Instance,
    InstanceSet,
    MaskEntry,
    SceneCloud,
    estimate_normals,
    load_frames,
    load_instances,
    load_scene,
    write_frames,
    write_instances,
    write_scene,
)
from .spatial import PriorBox, SpatialGrid, closest_pair_distance  # noqa: F401
from .superpoints import SuperpointParams, build_superpoints  # noqa: F401
from .synth import CameraModel, SynthObject, SynthSpec, generate, look_at  # noqa: F401
